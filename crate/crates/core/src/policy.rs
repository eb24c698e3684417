//! Policies and full-episode rollouts.

use crate::env::{Action, BatteryConfig, BatteryEnv, EnvError, Observation, PriceSeries};

pub trait Policy {
    fn act(&mut self, obs: &Observation) -> Action;
}

impl<F: FnMut(&Observation) -> Action> Policy for F {
    fn act(&mut self, obs: &Observation) -> Action {
        self(obs)
    }
}

/// Per-step record of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub actions: Vec<Action>,
    /// Charge held after each action.
    pub charges: Vec<f64>,
    pub rewards: Vec<f64>,
    pub total: f64,
}

/// Run `policy` over the whole series from `initial_charge`.
pub fn rollout<P: Policy + ?Sized>(
    series: &PriceSeries,
    config: BatteryConfig,
    initial_charge: f64,
    policy: &mut P,
) -> Result<Rollout, EnvError> {
    let mut env = BatteryEnv::new(series, config)?;
    let mut obs = env.reset(initial_charge)?;
    let steps = env.horizon();
    let mut out = Rollout {
        actions: Vec::with_capacity(steps),
        charges: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        total: 0.0,
    };
    while !env.is_done() {
        let action = policy.act(&obs);
        let step = env.step(action)?;
        out.actions.push(action);
        out.charges.push(step.state.charge);
        out.rewards.push(step.reward);
        out.total += step.reward;
        obs = step.observation;
    }
    Ok(out)
}

/// Return of a fixed action sequence (one action per step) from empty.
pub fn simulate_actions(
    series: &PriceSeries,
    config: BatteryConfig,
    actions: &[Action],
) -> Result<f64, EnvError> {
    let mut env = BatteryEnv::new(series, config)?;
    env.reset(0.0)?;
    let mut total = 0.0;
    for &a in actions {
        total += env.step(a)?.reward;
    }
    Ok(total)
}
