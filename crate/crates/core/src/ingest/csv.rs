//! Hourly price cache file.
//!
//! ```text
//! hour_start_utc,price_cents_per_kwh
//! 2018-07-01T14:00:00Z,2.5
//! ```
//!
//! LF line endings; prices use the shortest decimal that round-trips.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};

use super::IngestError;
use crate::env::PriceSeries;

pub const CSV_HEADER: &str = "hour_start_utc,price_cents_per_kwh";
const HOUR_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

pub fn price_csv_string(series: &PriceSeries) -> String {
    let mut out = String::with_capacity(40 * (series.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (hour, price) in series.hours().iter().zip(series.prices()) {
        writeln!(out, "{},{}", hour.format(HOUR_FORMAT), price).unwrap();
    }
    out
}

pub fn write_price_csv(series: &PriceSeries, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    let io_err = |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    fs::write(path, price_csv_string(series)).map_err(io_err)
}

pub fn read_price_csv(path: impl AsRef<Path>) -> Result<PriceSeries, IngestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_price_csv(&text, &path.display().to_string())
}

/// Parse cache contents; `origin` labels error messages. Rows are numbered
/// from 1 with the header as row 1.
pub fn parse_price_csv(text: &str, origin: &str) -> Result<PriceSeries, IngestError> {
    let invalid = |row: usize, detail: String| IngestError::Validation {
        path: origin.to_string(),
        row,
        detail,
    };
    let mut lines = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l));
    match lines.next() {
        Some(CSV_HEADER) => {}
        Some(other) => {
            return Err(invalid(1, format!("expected header `{CSV_HEADER}`, found `{other}`")))
        }
        None => return Err(IngestError::InsufficientData(format!("{origin}: empty file"))),
    }

    let mut hours: Vec<DateTime<Utc>> = Vec::new();
    let mut prices = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        if line.is_empty() {
            continue;
        }
        let (stamp, price) = line
            .split_once(',')
            .ok_or_else(|| invalid(row, format!("expected 2 columns in `{line}`")))?;
        if price.contains(',') {
            return Err(invalid(row, format!("expected 2 columns in `{line}`")));
        }
        let hour = NaiveDateTime::parse_from_str(stamp, HOUR_FORMAT)
            .map_err(|e| invalid(row, format!("bad timestamp `{stamp}`: {e}")))?
            .and_utc();
        if hour.timestamp() % 3600 != 0 {
            return Err(invalid(row, format!("timestamp `{stamp}` is not an hour start")));
        }
        let value: f64 = price
            .parse()
            .map_err(|_| invalid(row, format!("bad price `{price}`")))?;
        if !value.is_finite() {
            return Err(invalid(row, format!("price `{price}` is not finite")));
        }
        if let Some(prev) = hours.last() {
            let step = (hour - *prev).num_seconds();
            if step <= 0 {
                return Err(invalid(
                    row,
                    format!("timestamp `{stamp}` does not increase after {}", prev.format(HOUR_FORMAT)),
                ));
            }
            if step != 3600 {
                return Err(invalid(
                    row,
                    format!(
                        "gap of {} missing hour(s) between {} and `{stamp}`",
                        step / 3600 - 1,
                        prev.format(HOUR_FORMAT)
                    ),
                ));
            }
        }
        hours.push(hour);
        prices.push(value);
    }
    if prices.len() < 2 {
        return Err(IngestError::InsufficientData(format!(
            "{origin}: {} hourly row(s), need at least 2",
            prices.len()
        )));
    }
    PriceSeries::new(hours, prices).map_err(|e| invalid(0, e.to_string()))
}
