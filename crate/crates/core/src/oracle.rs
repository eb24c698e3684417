//! Hindsight-optimal dispatch and simple baselines.
//!
//! With perfect knowledge of the price series the battery problem is a
//! shortest-path problem over the finite set of reachable charge levels, so
//! backward induction gives the exact optimum in `O(M · |levels|)`.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::env::{
    apply_action_unchecked, reachable_charges, Action, BatteryConfig, BatteryEnv, EnvError,
    Observation, PriceSeries,
};
use crate::policy::Policy;

/// Exhaustive search is limited to 3^12 = 531441 sequences.
pub const BRUTE_FORCE_MAX_STEPS: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("brute force refuses {steps} steps (limit {BRUTE_FORCE_MAX_STEPS})")]
    HorizonTooLong { steps: usize },
    #[error("threshold low {low} exceeds high {high}")]
    Thresholds { low: f64, high: f64 },
}

/// Optimal action sequence and its total reward, starting from empty.
#[derive(Debug, Clone, PartialEq)]
pub struct HindsightPlan {
    pub actions: Vec<Action>,
    pub value: f64,
}

pub fn hindsight_optimal(
    prices: &PriceSeries,
    config: &BatteryConfig,
) -> Result<HindsightPlan, OracleError> {
    config.validate()?;
    let levels = reachable_charges(config);
    let index: HashMap<u64, usize> = levels
        .iter()
        .enumerate()
        .map(|(i, w)| (w.to_bits(), i))
        .collect();
    let successors: Vec<[usize; 3]> = levels
        .iter()
        .map(|&w| Action::ALL.map(|a| index[&apply_action_unchecked(w, a, config).to_bits()]))
        .collect();

    let p = prices.prices();
    let steps = p.len() - 1;
    let max_move = p.windows(2).map(|d| (d[1] - d[0]).abs()).fold(0.0, f64::max);
    let tie_scale = config.capacity_kwh * max_move;

    // value[n][s]: best reward collectable from step n holding levels[s]
    let mut value = vec![vec![0.0; levels.len()]; steps + 1];
    for n in (0..steps).rev() {
        let (head, tail) = value.split_at_mut(n + 1);
        let next = &tail[0];
        for (s, v) in head[n].iter_mut().enumerate() {
            let best = successors[s]
                .iter()
                .map(|&t| next[t])
                .fold(f64::NEG_INFINITY, f64::max);
            *v = levels[s] * (p[n + 1] - p[n]) + best;
        }
    }

    let mut state = index[&0.0_f64.to_bits()];
    let mut actions = Vec::with_capacity(steps);
    for n in 0..steps {
        let next = &value[n + 1];
        let mut best_action = 0;
        let mut best_value = next[successors[state][0]];
        for a in 1..Action::COUNT {
            let v = next[successors[state][a]];
            let tol = 1e-12 * v.abs().max(best_value.abs()).max(tie_scale);
            if v > best_value + tol {
                best_action = a;
                best_value = v;
            }
        }
        actions.push(Action::ALL[best_action]);
        state = successors[state][best_action];
    }

    Ok(HindsightPlan {
        value: value[0][index[&0.0_f64.to_bits()]],
        actions,
    })
}

/// Exact optimum by simulating every action sequence from empty.
pub fn brute_force_optimal(
    prices: &PriceSeries,
    config: &BatteryConfig,
) -> Result<f64, OracleError> {
    let mut env = BatteryEnv::new(prices, *config)?;
    env.reset(0.0)?;
    let steps = env.horizon();
    if steps > BRUTE_FORCE_MAX_STEPS {
        return Err(OracleError::HorizonTooLong { steps });
    }
    fn search(env: &BatteryEnv<'_>) -> f64 {
        if env.is_done() {
            return 0.0;
        }
        Action::ALL
            .iter()
            .map(|&a| {
                let mut branch = env.clone();
                let out = branch.step(a).expect("episode not finished");
                out.reward + search(&branch)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
    Ok(search(&env))
}

/// Buy below `low`, sell above `high`, otherwise hold.
pub fn threshold_policy(obs: &Observation, low: f64, high: f64) -> Action {
    let latest = obs.latest_price();
    if latest < low {
        Action::Charge
    } else if latest > high {
        Action::Discharge
    } else {
        Action::Idle
    }
}

pub fn idle_policy() -> Action {
    Action::Idle
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPolicy {
    low: f64,
    high: f64,
}

impl ThresholdPolicy {
    pub fn new(low: f64, high: f64) -> Result<Self, OracleError> {
        if low.is_nan() || high.is_nan() || low > high {
            return Err(OracleError::Thresholds { low, high });
        }
        Ok(Self { low, high })
    }

    /// Thresholds at the given lower/upper quantiles of a series.
    pub fn from_quantiles(series: &PriceSeries, low_q: f64, high_q: f64) -> Result<Self, OracleError> {
        let mut sorted = series.prices().to_vec();
        sorted.sort_by(f64::total_cmp);
        let pick = |q: f64| sorted[((sorted.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize];
        Self::new(pick(low_q), pick(high_q))
    }
}

impl Policy for ThresholdPolicy {
    fn act(&mut self, obs: &Observation) -> Action {
        threshold_policy(obs, self.low, self.high)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdlePolicy;

impl Policy for IdlePolicy {
    fn act(&mut self, _obs: &Observation) -> Action {
        idle_policy()
    }
}

/// Uniformly random actions.
#[derive(Debug, Clone)]
pub struct RandomPolicy<R> {
    rng: R,
}

impl<R: Rng> RandomPolicy<R> {
    pub fn new(rng: R) -> Self {
        Self { rng }
    }
}

impl<R: Rng> Policy for RandomPolicy<R> {
    fn act(&mut self, _obs: &Observation) -> Action {
        Action::ALL[self.rng.random_range(0..Action::COUNT)]
    }
}
