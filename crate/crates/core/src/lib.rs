//! Battery energy arbitrage under hourly real-time electricity prices.
//!
//! - [`env`]: the hourly charge/discharge/idle environment and its accounting.
//! - [`dqn`]: a from-scratch deep Q-learning agent.
//! - [`oracle`]: the exact hindsight-optimal dispatch and simple baselines.
//! - [`ingest`]: five-minute price feed download, hourly aggregation, CSV cache.
//! - [`experiment`]: training curves, cross-year testing and report output.
//! - [`config`]: flat key-value run configuration.

pub mod config;
pub mod dqn;
pub mod env;
pub mod experiment;
pub mod ingest;
pub mod oracle;
pub mod policy;

pub use env::{Action, BatteryConfig, BatteryEnv, Observation, PriceSeries, Transition};
