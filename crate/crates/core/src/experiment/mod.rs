//! Training/evaluation protocol: looped-year training with periodic greedy
//! evaluations, best-checkpoint selection, cross-year testing normalized by
//! the same-year agent, and report output.

mod outputs;
pub mod svg;

pub use outputs::{
    emit_outputs, read_cross_test_csv, read_daily_policy_csv, read_training_curves_csv,
    render_plots, write_cross_test_csv, write_daily_policy_csv, write_training_curves_csv,
    CROSS_TEST_CSV, DAILY_POLICY_CSV, TRAINING_CURVES_CSV,
};

use chrono::{DateTime, NaiveDate, Utc};
use log::info;
use thiserror::Error;

use crate::dqn::{
    Checkpoint, CheckpointMeta, DqnAgent, DqnError, GreedyPolicy, Hyperparameters,
    ObservationNormalizer,
};
use crate::env::{Action, BatteryConfig, BatteryEnv, EnvError, PriceSeries, Transition};
use crate::policy::rollout;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Dqn(#[from] DqnError),
    #[error("invalid setup: {0}")]
    Config(String),
    #[error("training diverged after {} curve points: {source}", curve.points.len())]
    Diverged {
        curve: TrainingCurve,
        #[source]
        source: DqnError,
    },
    #[error("{path}: {detail}")]
    Output { path: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    pub greedy_return: f64,
}

/// Greedy evaluations taken every `eval_every` training steps, starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCurve {
    pub label: String,
    pub points: Vec<CurvePoint>,
}

impl TrainingCurve {
    pub fn best(&self) -> Option<CurvePoint> {
        self.points
            .iter()
            .copied()
            .fold(None, |best: Option<CurvePoint>, p| match best {
                Some(b) if b.greedy_return >= p.greedy_return => Some(b),
                _ => Some(p),
            })
    }

    pub fn last(&self) -> Option<CurvePoint> {
        self.points.last().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSchedule {
    pub total_steps: u64,
    pub eval_every: u64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            total_steps: 200_000,
            eval_every: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curve: TrainingCurve,
    /// Snapshot at the curve's maximum point.
    pub best: Checkpoint,
    /// Snapshot after the last training step.
    pub last: Checkpoint,
}

/// Train on `prices` played on a loop, resetting to an empty battery at each
/// pass, and evaluate the greedy policy over the full series every
/// `eval_every` steps.
pub fn train_agent(
    prices: &PriceSeries,
    battery: BatteryConfig,
    hyper: &Hyperparameters,
    schedule: TrainSchedule,
    training_year: Option<i32>,
) -> Result<TrainOutcome, ExperimentError> {
    battery.validate()?;
    hyper.validate().map_err(ExperimentError::Config)?;
    if schedule.eval_every == 0 || !schedule.total_steps.is_multiple_of(schedule.eval_every) {
        return Err(ExperimentError::Config(format!(
            "total steps {} must be a positive multiple of eval_every {}",
            schedule.total_steps, schedule.eval_every
        )));
    }
    let label = training_year.map_or_else(|| "series".to_string(), |y| y.to_string());
    let normalizer = ObservationNormalizer::from_series(prices, &battery);
    let mut agent = DqnAgent::new(battery.window, normalizer, hyper.clone(), schedule.seed);
    let mut env = BatteryEnv::new(prices, battery)?;
    let mut obs = env.reset(0.0)?;

    let mut curve = TrainingCurve {
        label,
        points: Vec::with_capacity((schedule.total_steps / schedule.eval_every) as usize + 1),
    };
    let mut best: Option<Checkpoint> = None;
    let mut record = |agent: &DqnAgent, step: u64, curve: &mut TrainingCurve| -> Result<(), ExperimentError> {
        let greedy_return = rollout(prices, battery, 0.0, &mut agent.greedy_policy())?.total;
        info!(
            "[{}] step {step}: greedy return {greedy_return:.1} cents",
            curve.label
        );
        curve.points.push(CurvePoint {
            step,
            greedy_return,
        });
        if best.as_ref().is_none_or(|b| greedy_return > b.meta.eval_return) {
            best = Some(agent.checkpoint(
                battery,
                CheckpointMeta {
                    training_year,
                    step,
                    eval_return: greedy_return,
                },
            ));
        }
        Ok(())
    };

    for step in 0..schedule.total_steps {
        if step % schedule.eval_every == 0 {
            record(&agent, step, &mut curve)?;
        }
        let epsilon = hyper.epsilon.at(step, schedule.total_steps);
        let action = agent.act(&obs, epsilon)?;
        let out = env.step(action)?;
        let transition = Transition {
            obs: std::mem::replace(&mut obs, out.observation.clone()),
            action,
            reward: out.reward,
            next_obs: out.observation,
            done: out.done,
        };
        if let Err(source) = agent.observe(transition) {
            return Err(ExperimentError::Diverged { curve, source });
        }
        if out.done {
            obs = env.reset(0.0)?;
        }
    }
    record(&agent, schedule.total_steps, &mut curve)?;

    let last = agent.checkpoint(
        battery,
        CheckpointMeta {
            training_year,
            step: schedule.total_steps,
            eval_return: curve.last().map_or(0.0, |p| p.greedy_return),
        },
    );
    Ok(TrainOutcome {
        curve,
        best: best.expect("at least one evaluation point"),
        last,
    })
}

fn check_compatible(checkpoint: &Checkpoint, config: &BatteryConfig) -> Result<(), ExperimentError> {
    if checkpoint.battery.window != config.window || checkpoint.network.input_width() != config.window + 1 {
        return Err(ExperimentError::Config(format!(
            "checkpoint observes {} prices but the configuration uses a window of {}",
            checkpoint.network.input_width() - 1,
            config.window
        )));
    }
    Ok(())
}

/// Return of the greedy policy over one full pass of `prices` from empty.
pub fn evaluate_greedy(
    checkpoint: &Checkpoint,
    prices: &PriceSeries,
    config: &BatteryConfig,
) -> Result<f64, ExperimentError> {
    check_compatible(checkpoint, config)?;
    let mut policy = GreedyPolicy::from_checkpoint(checkpoint);
    Ok(rollout(prices, *config, 0.0, &mut policy)?.total)
}

/// One trained agent and the year it was trained on.
#[derive(Debug, Clone)]
pub struct YearEntry {
    pub year: i32,
    pub checkpoint: Checkpoint,
    pub series: PriceSeries,
}

/// Raw returns of every agent on every year, plus the same-year normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossTestMatrix {
    pub years: Vec<i32>,
    /// `raw[a][y]`: return of the agent trained on `years[a]` tested on `years[y]`.
    pub raw: Vec<Vec<f64>>,
    /// `raw[a][y] / raw[y][y]`, or `None` when the same-year return is not positive.
    pub normalized: Vec<Vec<Option<f64>>>,
}

impl CrossTestMatrix {
    pub fn from_raw(years: Vec<i32>, raw: Vec<Vec<f64>>) -> Self {
        let n = years.len();
        let normalized = (0..n)
            .map(|a| {
                (0..n)
                    .map(|y| {
                        let same_year = raw[y][y];
                        (same_year > 0.0).then(|| raw[a][y] / same_year)
                    })
                    .collect()
            })
            .collect();
        Self {
            years,
            raw,
            normalized,
        }
    }

    /// Mean normalized return of each agent over the years it was not
    /// trained on; `None` when every such entry was suppressed.
    pub fn off_diagonal_means(&self) -> Vec<Option<f64>> {
        (0..self.years.len())
            .map(|a| {
                let values: Vec<f64> = (0..self.years.len())
                    .filter(|&y| y != a)
                    .filter_map(|y| self.normalized[a][y])
                    .collect();
                (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
            })
            .collect()
    }

    pub fn suppressed_years(&self) -> Vec<i32> {
        (0..self.years.len())
            .filter(|&y| self.normalized[y][y].is_none())
            .map(|y| self.years[y])
            .collect()
    }
}

/// Evaluate every agent on every year's series.
pub fn cross_test(entries: &[YearEntry]) -> Result<CrossTestMatrix, ExperimentError> {
    if entries.len() < 2 {
        return Err(ExperimentError::Config(format!(
            "cross-testing needs at least 2 years, got {}",
            entries.len()
        )));
    }
    let raw = std::thread::scope(|scope| {
        let handles: Vec<_> = entries
            .iter()
            .map(|agent| {
                scope.spawn(move || {
                    entries
                        .iter()
                        .map(|test| evaluate_greedy(&agent.checkpoint, &test.series, &agent.checkpoint.battery))
                        .collect::<Result<Vec<f64>, _>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(CrossTestMatrix::from_raw(
        entries.iter().map(|e| e.year).collect(),
        raw,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyPolicyRow {
    pub hour_start_utc: DateTime<Utc>,
    pub price: f64,
    pub action: Action,
    pub charge_after: f64,
}

/// Greedy actions taken over one UTC calendar day of a full-series rollout.
pub fn daily_policy(
    checkpoint: &Checkpoint,
    prices: &PriceSeries,
    date: NaiveDate,
) -> Result<Vec<DailyPolicyRow>, ExperimentError> {
    let config = checkpoint.battery;
    check_compatible(checkpoint, &config)?;
    let mut policy = GreedyPolicy::from_checkpoint(checkpoint);
    let run = rollout(prices, config, 0.0, &mut policy)?;
    let rows: Vec<DailyPolicyRow> = (0..run.actions.len())
        .filter(|&n| prices.hours()[n].date_naive() == date)
        .map(|n| DailyPolicyRow {
            hour_start_utc: prices.hours()[n],
            price: prices.prices()[n],
            action: run.actions[n],
            charge_after: run.charges[n],
        })
        .collect();
    if rows.len() != 24 {
        return Err(ExperimentError::Config(format!(
            "{date} has {} decision hours in the series, need 24",
            rows.len()
        )));
    }
    Ok(rows)
}

/// Deterministic square wave: `half_period` hours at `low`, then `half_period`
/// hours at `high`, repeated for `hours` hours starting at `start`.
pub fn square_wave(
    start: DateTime<Utc>,
    hours: usize,
    half_period: usize,
    low: f64,
    high: f64,
) -> Result<PriceSeries, EnvError> {
    let prices = (0..hours)
        .map(|h| if (h / half_period).is_multiple_of(2) { low } else { high })
        .collect();
    PriceSeries::from_start(start, prices)
}
