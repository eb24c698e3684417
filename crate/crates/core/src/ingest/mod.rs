//! Real-time price ingestion: five-minute feed download, hourly aggregation
//! and the on-disk hourly CSV cache.
//!
//! Everything is keyed by UTC. The feed publishes epoch milliseconds, so no
//! local-time conversion happens after download.

mod csv;
mod feed;

pub use self::csv::{parse_price_csv, price_csv_string, read_price_csv, write_price_csv, CSV_HEADER};
pub use self::feed::{
    parse_feed, request_url, FeedClient, FeedFetch, FeedTransport, HttpTransport, RetryPolicy,
    DEFAULT_ENDPOINT,
};

use std::env;
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use thiserror::Error;

use crate::env::PriceSeries;

pub const DATA_DIR_ENV: &str = "RTP_ARB_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("request to {url} failed after {attempts} attempts: {message}")]
    Transport {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("malformed feed record {record}: {detail}")]
    Parse { record: usize, detail: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("{path}: row {row}: {detail}")]
    Validation {
        path: String,
        row: usize,
        detail: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One five-minute real-time price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveMinuteSample {
    pub timestamp_utc: DateTime<Utc>,
    pub price: f64,
}

impl FiveMinuteSample {
    pub fn new(timestamp_utc: DateTime<Utc>, price: f64) -> Result<Self, String> {
        if !price.is_finite() {
            return Err(format!("price {price} is not finite"));
        }
        if timestamp_utc.timestamp_millis().rem_euclid(300_000) != 0 {
            return Err(format!(
                "timestamp {} is not on a five-minute boundary",
                timestamp_utc.to_rfc3339()
            ));
        }
        Ok(Self {
            timestamp_utc,
            price,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    pub hours_emitted: usize,
    pub hours_interpolated: Vec<DateTime<Utc>>,
    /// Fewest samples behind any emitted hour (0 when an hour was interpolated).
    pub samples_per_hour_min: usize,
}

fn hour_floor(t: DateTime<Utc>) -> i64 {
    t.timestamp().div_euclid(3600)
}

/// Hourly means of five-minute samples. Hours without any sample are
/// linearly interpolated between the nearest populated hours and reported.
pub fn aggregate_hourly(
    samples: &[FiveMinuteSample],
) -> Result<(PriceSeries, IngestReport), IngestError> {
    if let Some(i) = samples
        .windows(2)
        .position(|w| w[1].timestamp_utc <= w[0].timestamp_utc)
    {
        return Err(IngestError::Parameter(format!(
            "samples must be strictly ascending; sample {} ({}) does not follow {}",
            i + 1,
            samples[i + 1].timestamp_utc.to_rfc3339(),
            samples[i].timestamp_utc.to_rfc3339()
        )));
    }
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        return Err(IngestError::InsufficientData("no samples".into()));
    };
    let first_hour = hour_floor(first.timestamp_utc);
    let hours = (hour_floor(last.timestamp_utc) - first_hour + 1) as usize;
    if hours < 2 {
        return Err(IngestError::InsufficientData(format!(
            "samples cover {hours} hour(s), need at least 2"
        )));
    }

    let mut sums = vec![0.0; hours];
    let mut counts = vec![0usize; hours];
    for s in samples {
        let h = (hour_floor(s.timestamp_utc) - first_hour) as usize;
        sums[h] += s.price;
        counts[h] += 1;
    }
    let mut prices: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();

    let hour_start = |h: usize| {
        Utc.timestamp_opt((first_hour + h as i64) * 3600, 0)
            .single()
            .expect("valid hour timestamp")
    };
    let mut report = IngestReport {
        hours_emitted: hours,
        samples_per_hour_min: counts.iter().copied().min().unwrap_or(0),
        ..IngestReport::default()
    };

    // First and last hours are populated by construction, so every gap has
    // a populated neighbor on both sides.
    let mut h = 0;
    while h < hours {
        if prices[h].is_some() {
            h += 1;
            continue;
        }
        let left = h - 1;
        let mut right = h;
        while prices[right].is_none() {
            right += 1;
        }
        let (pl, pr) = (prices[left].unwrap(), prices[right].unwrap());
        let span = (right - left) as f64;
        for (g, slot) in prices.iter_mut().enumerate().take(right).skip(h) {
            let frac = (g - left) as f64 / span;
            *slot = Some(pl + frac * (pr - pl));
            report.hours_interpolated.push(hour_start(g));
        }
        h = right;
    }

    let series = PriceSeries::from_start(
        hour_start(0),
        prices.into_iter().map(|p| p.unwrap()).collect(),
    )
    .map_err(|e| IngestError::InsufficientData(e.to_string()))?;
    Ok((series, report))
}

/// Cache directory: explicit flag, then `RTP_ARB_DATA_DIR`, then `fallback`.
pub fn resolve_data_dir(flag: Option<&Path>, fallback: Option<&Path>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Some(dir) = env::var_os(DATA_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    fallback
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

pub fn cache_path(data_dir: &Path, year: i32) -> PathBuf {
    data_dir.join(format!("comed_{year}.csv"))
}

/// UTC bounds `[Jan 1 year, Jan 1 year+1)`.
pub fn year_bounds(year: i32) -> Result<(DateTime<Utc>, DateTime<Utc>), IngestError> {
    let start = Utc
        .with_ymd_and_hms(year, 1, 1, 0, 0, 0)
        .single()
        .ok_or_else(|| IngestError::Parameter(format!("invalid year {year}")))?;
    let end = Utc
        .with_ymd_and_hms(year + 1, 1, 1, 0, 0, 0)
        .single()
        .ok_or_else(|| IngestError::Parameter(format!("invalid year {year}")))?;
    Ok((start, end))
}

/// Download one calendar year, aggregate it and write it to the cache.
pub fn fetch_year<T: FeedTransport>(
    client: &FeedClient<T>,
    year: i32,
    data_dir: &Path,
) -> Result<(PathBuf, PriceSeries, IngestReport, FeedFetch), IngestError> {
    let (start, end) = year_bounds(year)?;
    let fetched = client.fetch(start, end)?;
    let (series, report) = aggregate_hourly(&fetched.samples)?;
    let path = cache_path(data_dir, year);
    write_price_csv(&series, &path)?;
    Ok((path, series, report, fetched))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2018, 7, 1, 14, 0, 0).unwrap()
    }

    fn samples(hour_offset: i64, prices: &[f64]) -> Vec<FiveMinuteSample> {
        prices
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                FiveMinuteSample::new(t0() + Duration::hours(hour_offset) + Duration::minutes(5 * i as i64), p)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn constant_hour_mean() {
        let mut s = samples(0, &[2.0; 12]);
        s.extend(samples(1, &[3.0; 12]));
        let (series, report) = aggregate_hourly(&s).unwrap();
        assert_eq!(series.prices(), &[2.0, 3.0]);
        assert_eq!(series.start(), t0());
        assert_eq!(report.hours_emitted, 2);
        assert_eq!(report.samples_per_hour_min, 12);
        assert!(report.hours_interpolated.is_empty());
    }

    #[test]
    fn arithmetic_mean_of_ramp() {
        let ramp: Vec<f64> = (1..=12).map(f64::from).collect();
        let mut s = samples(0, &ramp);
        s.extend(samples(1, &[1.0]));
        let (series, report) = aggregate_hourly(&s).unwrap();
        assert_eq!(series.prices()[0], 6.5);
        assert_eq!(report.samples_per_hour_min, 1);
    }

    #[test]
    fn missing_hour_is_interpolated_and_flagged() {
        let mut s = samples(0, &[2.0; 12]);
        s.extend(samples(2, &[4.0; 12]));
        let (series, report) = aggregate_hourly(&s).unwrap();
        assert_eq!(series.prices(), &[2.0, 3.0, 4.0]);
        assert_eq!(report.hours_interpolated, vec![t0() + Duration::hours(1)]);
        assert_eq!(report.samples_per_hour_min, 0);
    }

    #[test]
    fn long_gap_interpolates_linearly() {
        let mut s = samples(0, &[1.0]);
        s.extend(samples(4, &[5.0]));
        let (series, report) = aggregate_hourly(&s).unwrap();
        assert_eq!(series.prices(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(report.hours_interpolated.len(), 3);
    }

    #[test]
    fn single_hour_is_insufficient() {
        assert!(matches!(
            aggregate_hourly(&samples(0, &[2.0; 12])),
            Err(IngestError::InsufficientData(_))
        ));
        assert!(matches!(aggregate_hourly(&[]), Err(IngestError::InsufficientData(_))));
    }

    #[test]
    fn unsorted_samples_are_rejected() {
        let mut s = samples(0, &[1.0, 2.0, 3.0]);
        s.swap(0, 2);
        assert!(matches!(aggregate_hourly(&s), Err(IngestError::Parameter(_))));
    }

    #[test]
    fn sample_validation() {
        assert!(FiveMinuteSample::new(t0() + Duration::minutes(3), 1.0).is_err());
        assert!(FiveMinuteSample::new(t0(), f64::NAN).is_err());
    }

    #[test]
    fn year_bounds_cover_the_calendar_year() {
        let (a, b) = year_bounds(2016).unwrap();
        assert_eq!((b - a).num_hours(), 366 * 24);
    }

    #[test]
    fn hourly_output_is_gap_free_across_dst_change() {
        // 2018-11-04 06:00-08:00 UTC spans the US Central fall-back hour.
        let start = Utc.with_ymd_and_hms(2018, 11, 4, 4, 0, 0).unwrap();
        let s: Vec<FiveMinuteSample> = (0..72)
            .map(|i| FiveMinuteSample::new(start + Duration::minutes(5 * i), i as f64).unwrap())
            .collect();
        let (series, _) = aggregate_hourly(&s).unwrap();
        assert_eq!(series.len(), 6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn hourly_means_lie_within_sample_range(
                hours in proptest::collection::vec(proptest::collection::vec(-5.0f64..50.0, 1..=12), 2..10)
            ) {
                let mut all = Vec::new();
                for (h, prices) in hours.iter().enumerate() {
                    all.extend(samples(h as i64, prices));
                }
                let (series, _) = aggregate_hourly(&all).unwrap();
                for (p, raw) in series.prices().iter().zip(&hours) {
                    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(*p >= lo - 1e-12 && *p <= hi + 1e-12);
                }
            }
        }
    }
}
