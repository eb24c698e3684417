//! Fully connected Q-network with rectified-linear hidden layers.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix in
//! row-major `[out][in]` order followed by the bias vector. Gradients and
//! optimizer moments use the same layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DqnError;
use crate::env::{Action, BatteryConfig, Observation, PriceSeries};

pub const HIDDEN_WIDTHS: [usize; 2] = [64, 64];

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations kept from a forward pass for backpropagation.
#[derive(Debug, Default, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl QNetwork {
    /// Standard architecture for an observation window of `window` prices.
    pub fn init(window: usize, seed: u64) -> Self {
        let mut dims = vec![window + 1];
        dims.extend_from_slice(&HIDDEN_WIDTHS);
        dims.push(Action::COUNT);
        Self::init_with_dims(&dims, seed).expect("standard dims are valid")
    }

    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn init_with_dims(dims: &[usize], seed: u64) -> Result<Self, DqnError> {
        let mut net = Self::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offset = 0;
        for layer in 0..net.num_layers() {
            let (fan_in, fan_out) = (dims[layer], dims[layer + 1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                *w = rng.random_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self, DqnError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(DqnError::Shape(format!("invalid layer dims {dims:?}")));
        }
        if *dims.last().unwrap() != Action::COUNT {
            return Err(DqnError::Shape(format!(
                "output width must be {}, got {}",
                Action::COUNT,
                dims.last().unwrap()
            )));
        }
        let count = dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum();
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![0.0; count],
        })
    }

    pub fn from_parts(dims: &[usize], params: Vec<f64>) -> Result<Self, DqnError> {
        let mut net = Self::zeros(dims)?;
        if params.len() != net.params.len() {
            return Err(DqnError::Shape(format!(
                "dims {dims:?} need {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_width(&self) -> usize {
        self.dims[0]
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// `(weights, biases)` slices of layer `layer`.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let (w, b) = self.layer_range(layer);
        (&self.params[w.0..w.1], &self.params[b.0..b.1])
    }

    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let (w, b) = self.layer_range(layer);
        let (head, tail) = self.params.split_at_mut(b.0);
        (&mut head[w.0..w.1], &mut tail[..b.1 - b.0])
    }

    fn layer_range(&self, layer: usize) -> ((usize, usize), (usize, usize)) {
        let mut offset = 0;
        for d in self.dims.windows(2).take(layer) {
            offset += d[0] * d[1] + d[1];
        }
        let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
        let w_end = offset + fan_in * fan_out;
        ((offset, w_end), (w_end, w_end + fan_out))
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Copy every parameter from `other` (hard target update).
    pub fn copy_from(&mut self, other: &QNetwork) {
        assert_eq!(self.dims, other.dims, "target and online shapes differ");
        self.params.copy_from_slice(&other.params);
    }

    pub fn forward(&self, input: &[f64]) -> Result<[f64; 3], DqnError> {
        let mut cache = ForwardCache::default();
        self.forward_cached(input, &mut cache)
    }

    /// Forward pass that keeps every layer's activations in `cache`.
    pub fn forward_cached(
        &self,
        input: &[f64],
        cache: &mut ForwardCache,
    ) -> Result<[f64; 3], DqnError> {
        if input.len() != self.input_width() {
            return Err(DqnError::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_width(),
                input.len()
            )));
        }
        let layers = self.num_layers();
        cache.activations.resize(layers + 1, Vec::new());
        cache.activations[0].clear();
        cache.activations[0].extend_from_slice(input);
        let mut offset = 0;
        for layer in 0..layers {
            let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let biases = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;

            let (done, rest) = cache.activations.split_at_mut(layer + 1);
            let x = &done[layer];
            let out = &mut rest[0];
            out.clear();
            for (row, &b) in weights.chunks_exact(fan_in).zip(biases) {
                let z = b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
                out.push(if layer + 1 < layers { z.max(0.0) } else { z });
            }
        }
        let q = &cache.activations[layers];
        Ok([q[0], q[1], q[2]])
    }

    /// Accumulate `d loss / d params` into `grads` given `d loss / d output`
    /// for the forward pass stored in `cache`.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64; 3], grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.params.len());
        let layers = self.num_layers();
        let mut delta: Vec<f64> = output_grad.to_vec();
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for d in self.dims.windows(2) {
            offsets.push(offset);
            offset += d[0] * d[1] + d[1];
        }
        for layer in (0..layers).rev() {
            let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
            let w_off = offsets[layer];
            let b_off = w_off + fan_in * fan_out;
            let x = &cache.activations[layer];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grads[b_off + o] += d;
                let row = &mut grads[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if layer == 0 {
                break;
            }
            let weights = &self.params[w_off..b_off];
            let mut prev = vec![0.0; fan_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                    *p += d * w;
                }
            }
            // rectifier derivative on the hidden activation feeding this layer
            for (p, &a) in prev.iter_mut().zip(x) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

/// Frozen observation scaling: prices standardized by the training series'
/// mean and standard deviation, charge divided by capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationNormalizer {
    pub price_mean: f64,
    pub price_std: f64,
    pub capacity_kwh: f64,
}

impl ObservationNormalizer {
    pub fn from_series(series: &PriceSeries, config: &BatteryConfig) -> Self {
        let (mean, std) = series.mean_and_std();
        Self {
            price_mean: mean,
            price_std: if std > 1e-12 { std } else { 1.0 },
            capacity_kwh: config.capacity_kwh,
        }
    }

    /// Identity scaling, used by hand-checked examples.
    pub fn identity() -> Self {
        Self {
            price_mean: 0.0,
            price_std: 1.0,
            capacity_kwh: 1.0,
        }
    }

    pub fn features(&self, obs: &Observation) -> Vec<f64> {
        let mut x = Vec::with_capacity(obs.recent_prices.len() + 1);
        self.write_features(obs, &mut x);
        x
    }

    pub fn write_features(&self, obs: &Observation, out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            obs.recent_prices
                .iter()
                .map(|p| (p - self.price_mean) / self.price_std),
        );
        out.push(obs.charge / self.capacity_kwh);
    }
}

/// Q-values of `obs` under `net`.
pub fn forward(
    net: &QNetwork,
    obs: &Observation,
    norm: &ObservationNormalizer,
) -> Result<[f64; 3], DqnError> {
    net.forward(&norm.features(obs))
}
