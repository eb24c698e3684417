use std::thread;
use std::time::Duration as StdDuration;

use chrono::{DateTime, Duration, TimeZone, Utc};
use log::{debug, warn};
use serde_json::Value;

use super::{FiveMinuteSample, IngestError};

/// Public five-minute price endpoint of the ComEd hourly pricing program.
pub const DEFAULT_ENDPOINT: &str = "https://hourlypricing.comed.com/api";

/// Minimal blocking GET so tests can substitute recorded responses.
pub trait FeedTransport {
    fn get(&self, url: &str) -> Result<String, String>;
}

#[derive(Debug, Clone)]
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(StdDuration::from_secs(60)))
            .build();
        Self {
            agent: config.into(),
        }
    }
}

impl FeedTransport for HttpTransport {
    fn get(&self, url: &str) -> Result<String, String> {
        self.agent
            .get(url)
            .call()
            .map_err(|e| e.to_string())?
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: StdDuration,
}

impl Default for RetryPolicy {
    /// Three attempts, backing off 1 s then 2 s.
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: StdDuration::from_secs(1),
        }
    }
}

/// Samples from one download plus the chunks that came back empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeedFetch {
    pub samples: Vec<FiveMinuteSample>,
    /// Start of every UTC day chunk for which the feed returned no samples.
    pub empty_chunks: Vec<DateTime<Utc>>,
}

#[derive(Debug, Clone)]
pub struct FeedClient<T> {
    pub endpoint: String,
    pub retry: RetryPolicy,
    transport: T,
}

impl FeedClient<HttpTransport> {
    pub fn http(endpoint: impl Into<String>) -> Self {
        Self::new(endpoint, HttpTransport::default())
    }
}

impl<T: FeedTransport> FeedClient<T> {
    pub fn new(endpoint: impl Into<String>, transport: T) -> Self {
        Self {
            endpoint: endpoint.into(),
            retry: RetryPolicy::default(),
            transport,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// All samples in `[start, end)`, ascending, fetched one UTC day at a time.
    pub fn fetch(
        &self,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    ) -> Result<FeedFetch, IngestError> {
        if start >= end {
            return Err(IngestError::Parameter(format!(
                "empty date range: start {} is not before end {}",
                start.to_rfc3339(),
                end.to_rfc3339()
            )));
        }
        let mut out = FeedFetch::default();
        let mut chunk_start = start;
        while chunk_start < end {
            let chunk_end = (chunk_start + Duration::days(1)).min(end);
            let url = request_url(&self.endpoint, chunk_start, chunk_end);
            let body = self.get_with_retry(&url)?;
            let mut chunk: Vec<FiveMinuteSample> = parse_feed(&body)?
                .into_iter()
                .filter(|s| s.timestamp_utc >= chunk_start && s.timestamp_utc < chunk_end)
                .collect();
            if chunk.is_empty() {
                warn!("no samples returned for {}", chunk_start.to_rfc3339());
                out.empty_chunks.push(chunk_start);
            }
            out.samples.append(&mut chunk);
            chunk_start = chunk_end;
        }
        out.samples
            .sort_by_key(|s| s.timestamp_utc);
        out.samples.dedup_by_key(|s| s.timestamp_utc);
        Ok(out)
    }

    fn get_with_retry(&self, url: &str) -> Result<String, IngestError> {
        let attempts = self.retry.attempts.max(1);
        let mut backoff = self.retry.initial_backoff;
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            debug!("GET {url} (attempt {attempt})");
            match self.transport.get(url) {
                Ok(body) => return Ok(body),
                Err(e) => {
                    warn!("GET {url} failed on attempt {attempt}: {e}");
                    last_error = e;
                    if attempt < attempts {
                        thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(IngestError::Transport {
            url: url.to_string(),
            attempts,
            message: last_error,
        })
    }
}

/// Request URL for a UTC window. The feed interprets `datestart`/`dateend`
/// as US Central local time, so the window is widened to cover both the
/// standard and daylight offsets; callers filter on the UTC stamps.
pub fn request_url(endpoint: &str, start: DateTime<Utc>, end: DateTime<Utc>) -> String {
    let local_start = start - Duration::hours(7);
    let local_end = end - Duration::hours(4);
    format!(
        "{endpoint}?type=5minutefeed&datestart={}&dateend={}",
        local_start.format("%Y%m%d%H%M"),
        local_end.format("%Y%m%d%H%M")
    )
}

/// Parse the feed's JSON array of `{"millisUTC": "...", "price": "..."}`.
/// Records come back newest first; the result is sorted ascending.
pub fn parse_feed(body: &str) -> Result<Vec<FiveMinuteSample>, IngestError> {
    let value: Value = serde_json::from_str(body).map_err(|e| IngestError::Parse {
        record: 0,
        detail: format!("response is not JSON: {e}"),
    })?;
    let records = value.as_array().ok_or_else(|| IngestError::Parse {
        record: 0,
        detail: "response is not a JSON array".into(),
    })?;
    let mut samples = records
        .iter()
        .enumerate()
        .map(|(i, record)| {
            let fail = |detail: String| IngestError::Parse {
                record: i,
                detail: format!("{detail} in {record}"),
            };
            let millis = field_number(record, "millisUTC")
                .map_err(fail)?;
            let price = field_number(record, "price").map_err(fail)?;
            if millis.fract() != 0.0 {
                return Err(fail(format!("millisUTC {millis} is not an integer")));
            }
            let ts = Utc
                .timestamp_millis_opt(millis as i64)
                .single()
                .ok_or_else(|| fail(format!("millisUTC {millis} out of range")))?;
            FiveMinuteSample::new(ts, price).map_err(fail)
        })
        .collect::<Result<Vec<_>, _>>()?;
    samples.sort_by_key(|s| s.timestamp_utc);
    Ok(samples)
}

fn field_number(record: &Value, key: &str) -> Result<f64, String> {
    match record.get(key) {
        Some(Value::String(s)) => s
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("field `{key}` = {s:?} is not numeric")),
        Some(Value::Number(n)) => n
            .as_f64()
            .ok_or_else(|| format!("field `{key}` is not representable")),
        Some(other) => Err(format!("field `{key}` has unexpected type {other}")),
        None => Err(format!("missing field `{key}`")),
    }
}
