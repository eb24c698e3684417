//! Flat `key = value` run configuration.
//!
//! ```text
//! # battery
//! capacity_kwh = 13.5
//! rate_kw = 5
//! window = 48
//! steps = 200000
//! ```
//!
//! Blank lines and lines starting with `#` or `;` are ignored, as are
//! `[section]` headers (keys are global). Flags applied later through
//! [`RunConfig::set`] override file values.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dqn::Hyperparameters;
use crate::env::BatteryConfig;
use crate::ingest::DEFAULT_ENDPOINT;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{origin}:{line}: {detail}")]
    Syntax {
        origin: String,
        line: usize,
        detail: String,
    },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {detail}")]
    Value {
        key: String,
        value: String,
        detail: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {detail}")]
    Io { path: String, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub battery: BatteryConfig,
    pub hyper: Hyperparameters,
    pub total_steps: u64,
    pub eval_every: u64,
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub years: Vec<i32>,
    pub endpoint: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            battery: BatteryConfig::default(),
            hyper: Hyperparameters::default(),
            total_steps: 200_000,
            eval_every: 10_000,
            seed: 0,
            data_dir: None,
            out_dir: PathBuf::from("out"),
            years: (2015..=2019).collect(),
            endpoint: DEFAULT_ENDPOINT.to_string(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "capacity_kwh",
    "rate_kw",
    "window",
    "gamma",
    "learning_rate",
    "batch_size",
    "buffer_capacity",
    "learning_starts",
    "train_every",
    "target_sync_every",
    "epsilon_start",
    "epsilon_end",
    "exploration_fraction",
    "steps",
    "eval_every",
    "seed",
    "data_dir",
    "out_dir",
    "years",
    "endpoint",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        detail: e.to_string(),
    })
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let mut config = Self::default();
        config.apply_ini(&text, &path.display().to_string())?;
        Ok(config)
    }

    /// Apply every `key = value` line of `text` on top of the current values.
    pub fn apply_ini(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                continue;
            }
            let syntax = |detail: String| ConfigError::Syntax {
                origin: origin.to_string(),
                line: i + 1,
                detail,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `key = value`, found `{line}`")))?;
            self.set(key.trim(), value.trim()).map_err(|e| syntax(e.to_string()))?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "capacity_kwh" => self.battery.capacity_kwh = parse(key, value)?,
            "rate_kw" => self.battery.rate_kw = parse(key, value)?,
            "window" => self.battery.window = parse(key, value)?,
            "gamma" => self.hyper.gamma = parse(key, value)?,
            "learning_rate" => self.hyper.learning_rate = parse(key, value)?,
            "batch_size" => self.hyper.batch_size = parse(key, value)?,
            "buffer_capacity" => self.hyper.buffer_capacity = parse(key, value)?,
            "learning_starts" => self.hyper.learning_starts = parse(key, value)?,
            "train_every" => self.hyper.train_every = parse(key, value)?,
            "target_sync_every" => self.hyper.target_sync_every = parse(key, value)?,
            "epsilon_start" => self.hyper.epsilon.start = parse(key, value)?,
            "epsilon_end" => self.hyper.epsilon.end = parse(key, value)?,
            "exploration_fraction" => self.hyper.epsilon.fraction = parse(key, value)?,
            "steps" => self.total_steps = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "years" => {
                self.years = value
                    .split(',')
                    .map(|y| parse(key, y.trim()))
                    .collect::<Result<_, _>>()?
            }
            "endpoint" => self.endpoint = value.to_string(),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.battery
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.hyper.validate().map_err(ConfigError::Invalid)?;
        if self.total_steps == 0 || self.eval_every == 0 {
            return Err(ConfigError::Invalid("steps and eval_every must be positive".into()));
        }
        if !self.total_steps.is_multiple_of(self.eval_every) {
            return Err(ConfigError::Invalid(format!(
                "steps ({}) must be a multiple of eval_every ({})",
                self.total_steps, self.eval_every
            )));
        }
        Ok(())
    }
}
