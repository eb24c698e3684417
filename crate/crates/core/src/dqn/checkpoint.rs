//! Binary checkpoint container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "RTPQCKPT"
//! version      u32
//! battery      capacity f64, rate f64, window u32
//! normalizer   price mean f64, price std f64, capacity f64
//! metadata     has_year u8, year i32, step u64, eval return f64
//! dims         count u32, then count × u32
//! parameters   per layer: weights [out][in] row-major f64, biases f64
//! optimizer    lr f64, beta1 f64, beta2 f64, eps f64, step u64,
//!              first moments, second moments (parameter layout)
//! ```

use std::fs;
use std::path::Path;

use super::{Adam, DqnError, ObservationNormalizer, QNetwork};
use crate::env::BatteryConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RTPQCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub training_year: Option<i32>,
    pub step: u64,
    pub eval_return: f64,
}

/// Everything needed to resume training or run the greedy policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: QNetwork,
    pub optimizer: Adam,
    pub normalizer: ObservationNormalizer,
    pub battery: BatteryConfig,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.network.num_params();
        let mut out = Vec::with_capacity(128 + 24 * n);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());

        put_f64(&mut out, self.battery.capacity_kwh);
        put_f64(&mut out, self.battery.rate_kw);
        out.extend_from_slice(&(self.battery.window as u32).to_le_bytes());

        put_f64(&mut out, self.normalizer.price_mean);
        put_f64(&mut out, self.normalizer.price_std);
        put_f64(&mut out, self.normalizer.capacity_kwh);

        out.push(self.meta.training_year.is_some() as u8);
        out.extend_from_slice(&self.meta.training_year.unwrap_or(0).to_le_bytes());
        out.extend_from_slice(&self.meta.step.to_le_bytes());
        put_f64(&mut out, self.meta.eval_return);

        let dims = self.network.dims();
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &p in self.network.params() {
            put_f64(&mut out, p);
        }

        let opt = &self.optimizer;
        for v in [opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon] {
            put_f64(&mut out, v);
        }
        out.extend_from_slice(&opt.step.to_le_bytes());
        for &m in opt.first_moment.iter().chain(&opt.second_moment) {
            put_f64(&mut out, m);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DqnError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(DqnError::Checkpoint("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(DqnError::Checkpoint(format!(
                "unsupported format version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }

        let battery = BatteryConfig {
            capacity_kwh: r.f64()?,
            rate_kw: r.f64()?,
            window: r.u32()? as usize,
        };
        battery
            .validate()
            .map_err(|e| DqnError::Checkpoint(e.to_string()))?;
        let normalizer = ObservationNormalizer {
            price_mean: r.f64()?,
            price_std: r.f64()?,
            capacity_kwh: r.f64()?,
        };
        let has_year = r.take(1)?[0];
        let year = r.i32()?;
        let meta = CheckpointMeta {
            training_year: (has_year != 0).then_some(year),
            step: r.u64()?,
            eval_return: r.f64()?,
        };

        let dim_count = r.u32()? as usize;
        if !(2..=64).contains(&dim_count) {
            return Err(DqnError::Checkpoint(format!("implausible layer count {dim_count}")));
        }
        let dims = (0..dim_count)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if dims[0] != battery.window + 1 {
            return Err(DqnError::Checkpoint(format!(
                "input width {} does not match window {}",
                dims[0], battery.window
            )));
        }
        let shape = QNetwork::zeros(&dims).map_err(|e| DqnError::Checkpoint(e.to_string()))?;
        let n = shape.num_params();
        let params = r.f64s(n)?;
        let network = QNetwork::from_parts(&dims, params)?;

        let mut optimizer = Adam::new(n, r.f64()?);
        optimizer.beta1 = r.f64()?;
        optimizer.beta2 = r.f64()?;
        optimizer.epsilon = r.f64()?;
        optimizer.step = r.u64()?;
        optimizer.first_moment = r.f64s(n)?;
        optimizer.second_moment = r.f64s(n)?;

        if r.pos != bytes.len() {
            return Err(DqnError::Checkpoint(format!(
                "{} trailing bytes after checkpoint body",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            network,
            optimizer,
            normalizer,
            battery,
            meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DqnError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DqnError> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            DqnError::Checkpoint(msg) => DqnError::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DqnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                DqnError::Checkpoint(format!(
                    "truncated: needed {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, DqnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32, DqnError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DqnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, DqnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, DqnError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| {
            DqnError::Checkpoint("parameter count overflow".into())
        })?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_checkpoint() -> Checkpoint {
        let network = QNetwork::init(6, 21);
        let mut optimizer = Adam::new(network.num_params(), 1e-4);
        optimizer.step = 17;
        optimizer.first_moment.iter_mut().enumerate().for_each(|(i, m)| *m = i as f64 * 1e-3);
        Checkpoint {
            network,
            optimizer,
            normalizer: ObservationNormalizer {
                price_mean: 2.75,
                price_std: 1.5,
                capacity_kwh: 13.5,
            },
            battery: BatteryConfig::new(13.5, 5.0, 6).unwrap(),
            meta: CheckpointMeta {
                training_year: Some(2018),
                step: 130_000,
                eval_return: 9876.5,
            },
        }
    }

    #[test]
    fn round_trip_preserves_behavior_and_metadata() {
        let ckpt = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, ckpt);
        assert_eq!(loaded.meta.training_year, Some(2018));
        assert_eq!(loaded.meta.step, 130_000);
        assert_eq!(loaded.meta.eval_return, 9876.5);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x: Vec<f64> = (0..7).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a = ckpt.network.forward(&x).unwrap();
            let b = loaded.network.forward(&x).unwrap();
            assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        }
    }

    #[test]
    fn missing_year_round_trips() {
        let mut ckpt = sample_checkpoint();
        ckpt.meta.training_year = None;
        let loaded = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        assert_eq!(loaded.meta.training_year, None);
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let mut bytes = sample_checkpoint().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(DqnError::Checkpoint(m)) if m.contains("magic")));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut bytes = sample_checkpoint().to_bytes();
        bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(DqnError::Checkpoint(m)) if m.contains("version")));
    }

    #[test]
    fn truncation_and_trailing_bytes_are_rejected() {
        let bytes = sample_checkpoint().to_bytes();
        for cut in [0, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Checkpoint::from_bytes(&longer).is_err());
    }
}
