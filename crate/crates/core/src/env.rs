//! Hourly battery arbitrage environment.
//!
//! The battery decides to charge, discharge or idle at the start of every
//! hour. The price of hour `n` only becomes observable once the hour is over,
//! so the reward for the transition into step `n + 1` is the change in value of
//! the energy held at the start of hour `n`: `w_n * (p_{n+1} - p_n)`.
//!
//! Units: prices in cents per kWh, energy in kWh, one-hour steps (so a rate of
//! `P` kW moves `P` kWh per step), rewards in cents.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Duration, Utc};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid battery configuration: {0}")]
    Config(String),
    #[error("invalid price series: {0}")]
    Series(String),
    #[error("charge {charge} kWh outside [0, {capacity}] kWh")]
    ChargeOutOfRange { charge: f64, capacity: f64 },
    #[error("episode already finished at step {0}")]
    EpisodeDone(usize),
    #[error("action code {0} is not one of 0 (charge), 1 (discharge), 2 (idle)")]
    UnknownAction(u8),
}

/// Chronological hourly prices keyed by UTC hour start.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    hours: Vec<DateTime<Utc>>,
    prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(hours: Vec<DateTime<Utc>>, prices: Vec<f64>) -> Result<Self, EnvError> {
        if hours.len() != prices.len() {
            return Err(EnvError::Series(format!(
                "{} timestamps but {} prices",
                hours.len(),
                prices.len()
            )));
        }
        if prices.len() < 2 {
            return Err(EnvError::Series(format!(
                "need at least 2 hourly prices, got {}",
                prices.len()
            )));
        }
        if let Some(i) = prices.iter().position(|p| !p.is_finite()) {
            return Err(EnvError::Series(format!("price at index {i} is not finite")));
        }
        for (i, pair) in hours.windows(2).enumerate() {
            if pair[1] - pair[0] != Duration::hours(1) {
                return Err(EnvError::Series(format!(
                    "hour {} ({}) does not follow {} by exactly one hour",
                    i + 1,
                    pair[1].to_rfc3339(),
                    pair[0].to_rfc3339()
                )));
            }
        }
        if hours[0].timestamp() % 3600 != 0 {
            return Err(EnvError::Series(format!(
                "first timestamp {} is not an hour boundary",
                hours[0].to_rfc3339()
            )));
        }
        Ok(Self { hours, prices })
    }

    /// Consecutive hours starting at `start`.
    pub fn from_start(start: DateTime<Utc>, prices: Vec<f64>) -> Result<Self, EnvError> {
        let hours = (0..prices.len())
            .map(|i| start + Duration::hours(i as i64))
            .collect();
        Self::new(hours, prices)
    }

    /// Series anchored at the Unix epoch; handy for synthetic signals.
    pub fn from_prices(prices: Vec<f64>) -> Result<Self, EnvError> {
        Self::from_start(DateTime::<Utc>::UNIX_EPOCH, prices)
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn hours(&self) -> &[DateTime<Utc>] {
        &self.hours
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.hours[0]
    }

    /// Every price shifted by `offset`.
    pub fn shifted(&self, offset: f64) -> Result<Self, EnvError> {
        Self::new(
            self.hours.clone(),
            self.prices.iter().map(|p| p + offset).collect(),
        )
    }

    /// Every price multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, EnvError> {
        Self::new(
            self.hours.clone(),
            self.prices.iter().map(|p| p * factor).collect(),
        )
    }

    pub fn mean_and_std(&self) -> (f64, f64) {
        let n = self.prices.len() as f64;
        let mean = self.prices.iter().sum::<f64>() / n;
        let var = self.prices.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

/// Battery capacity, charge rate and observation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryConfig {
    pub capacity_kwh: f64,
    pub rate_kw: f64,
    pub window: usize,
}

impl BatteryConfig {
    pub fn new(capacity_kwh: f64, rate_kw: f64, window: usize) -> Result<Self, EnvError> {
        let config = Self {
            capacity_kwh,
            rate_kw,
            window,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.capacity_kwh.is_finite() && self.capacity_kwh > 0.0) {
            return Err(EnvError::Config(format!(
                "capacity must be positive, got {}",
                self.capacity_kwh
            )));
        }
        if !(self.rate_kw.is_finite() && self.rate_kw > 0.0) {
            return Err(EnvError::Config(format!(
                "charge rate must be positive, got {}",
                self.rate_kw
            )));
        }
        if self.window == 0 {
            return Err(EnvError::Config("observation window must be at least 1".into()));
        }
        Ok(())
    }

    /// Energy moved by one charge or discharge step (one hour at `rate_kw`).
    pub fn step_energy(&self) -> f64 {
        self.rate_kw
    }
}

impl Default for BatteryConfig {
    /// A 13.5 kWh / 5 kW home battery observing the last 48 hourly prices.
    fn default() -> Self {
        Self {
            capacity_kwh: 13.5,
            rate_kw: 5.0,
            window: 48,
        }
    }
}

/// Discrete battery command. Codes are part of the checkpoint format and the
/// greedy tie-break (lowest code wins).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Action {
    Charge = 0,
    Discharge = 1,
    Idle = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Charge, Action::Discharge, Action::Idle];
    pub const COUNT: usize = 3;

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Result<Self, EnvError> {
        match code {
            0 => Ok(Action::Charge),
            1 => Ok(Action::Discharge),
            2 => Ok(Action::Idle),
            other => Err(EnvError::UnknownAction(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Charge => "charge",
            Action::Discharge => "discharge",
            Action::Idle => "idle",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub step_index: usize,
    pub charge: f64,
}

/// What the agent sees at the start of an hour: the last `window` observable
/// prices (oldest first) and the current charge.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub recent_prices: Vec<f64>,
    pub charge: f64,
}

impl Observation {
    pub fn latest_price(&self) -> f64 {
        *self
            .recent_prices
            .last()
            .expect("observation window is never empty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

/// Snap a charge level onto the lattice `{k·P} ∪ {W − k·P}` when it sits within
/// rounding distance of it, so that repeated clamped moves never drift off the
/// finite reachable set.
fn snap_to_lattice(value: f64, config: &BatteryConfig) -> f64 {
    let w_max = config.capacity_kwh;
    let p = config.step_energy();
    let tol = 1e-9 * w_max.max(p);
    let k = (value / p).round();
    let from_empty = k * p;
    if (value - from_empty).abs() <= tol {
        return from_empty;
    }
    let j = ((w_max - value) / p).round();
    let from_full = w_max - j * p;
    if (value - from_full).abs() <= tol {
        return from_full;
    }
    value
}

/// Charge level after one hour of `action`, clamped to `[0, W]`.
pub fn apply_action(charge: f64, action: Action, config: &BatteryConfig) -> Result<f64, EnvError> {
    if !(0.0..=config.capacity_kwh).contains(&charge) {
        return Err(EnvError::ChargeOutOfRange {
            charge,
            capacity: config.capacity_kwh,
        });
    }
    Ok(apply_action_unchecked(charge, action, config))
}

pub(crate) fn apply_action_unchecked(charge: f64, action: Action, config: &BatteryConfig) -> f64 {
    let p = config.step_energy();
    match action {
        Action::Charge => {
            let next = charge + p;
            if next >= config.capacity_kwh {
                config.capacity_kwh
            } else {
                snap_to_lattice(next, config)
            }
        }
        Action::Discharge => {
            let next = charge - p;
            if next <= 0.0 {
                0.0
            } else {
                snap_to_lattice(next, config)
            }
        }
        Action::Idle => charge,
    }
}

/// Change in value of the energy held through the price move `p_n -> p_next`.
pub fn reward(charge_before_action: f64, p_n: f64, p_next: f64) -> f64 {
    charge_before_action * (p_next - p_n)
}

/// Closure of `{0}` under clamped charge/discharge, in ascending order.
pub fn reachable_charges(config: &BatteryConfig) -> Vec<f64> {
    let mut seen: BTreeMap<u64, f64> = BTreeMap::new();
    let mut frontier = vec![0.0_f64];
    seen.insert(0.0_f64.to_bits(), 0.0);
    while let Some(w) = frontier.pop() {
        for action in [Action::Charge, Action::Discharge] {
            let next = apply_action_unchecked(w, action, config);
            if seen.insert(next.to_bits(), next).is_none() {
                frontier.push(next);
            }
        }
    }
    let mut levels: Vec<f64> = seen.into_values().collect();
    levels.sort_by(|a, b| a.total_cmp(b));
    levels
}

/// Sum of rewards of one episode.
pub fn episode_return(transitions: &[Transition]) -> f64 {
    transitions.iter().map(|t| t.reward).sum()
}

/// One episode over a borrowed price series.
///
/// An episode over `M` prices has `M - 1` steps; holdings left at the end are
/// valued at the final price and never liquidated.
#[derive(Debug, Clone)]
pub struct BatteryEnv<'a> {
    prices: &'a PriceSeries,
    config: BatteryConfig,
    state: EnvState,
    done: bool,
}

impl<'a> BatteryEnv<'a> {
    pub fn new(prices: &'a PriceSeries, config: BatteryConfig) -> Result<Self, EnvError> {
        config.validate()?;
        if prices.len() < 2 {
            return Err(EnvError::Series(format!(
                "need at least 2 hourly prices, got {}",
                prices.len()
            )));
        }
        Ok(Self {
            prices,
            config,
            state: EnvState {
                step_index: 0,
                charge: 0.0,
            },
            done: false,
        })
    }

    pub fn config(&self) -> &BatteryConfig {
        &self.config
    }

    pub fn prices(&self) -> &'a PriceSeries {
        self.prices
    }

    pub fn state(&self) -> EnvState {
        self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Number of steps in a full episode.
    pub fn horizon(&self) -> usize {
        self.prices.len() - 1
    }

    pub fn reset(&mut self, initial_charge: f64) -> Result<Observation, EnvError> {
        if !(0.0..=self.config.capacity_kwh).contains(&initial_charge) {
            return Err(EnvError::ChargeOutOfRange {
                charge: initial_charge,
                capacity: self.config.capacity_kwh,
            });
        }
        self.state = EnvState {
            step_index: 0,
            charge: initial_charge,
        };
        self.done = false;
        Ok(self.observe())
    }

    pub fn observe(&self) -> Observation {
        observation_at(self.prices, self.config.window, self.state)
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone(self.state.step_index));
        }
        let n = self.state.step_index;
        let p = self.prices.prices();
        let r = reward(self.state.charge, p[n], p[n + 1]);
        let charge = apply_action(self.state.charge, action, &self.config)?;
        self.state = EnvState {
            step_index: n + 1,
            charge,
        };
        self.done = n + 1 == p.len() - 1;
        Ok(StepOutcome {
            state: self.state,
            observation: self.observe(),
            reward: r,
            done: self.done,
        })
    }
}

/// Observation for `state`: prices `p_{n-L+1} ..= p_n`, with indices before the
/// start of the series padded by the first price.
pub fn observation_at(prices: &PriceSeries, window: usize, state: EnvState) -> Observation {
    let p = prices.prices();
    let n = state.step_index as isize;
    let recent_prices = (0..window as isize)
        .map(|k| {
            let idx = n - (window as isize - 1) + k;
            p[idx.max(0) as usize]
        })
        .collect();
    Observation {
        recent_prices,
        charge: state.charge,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(w: f64, p: f64, l: usize) -> BatteryConfig {
        BatteryConfig::new(w, p, l).unwrap()
    }

    #[test]
    fn charge_saturates_at_capacity() {
        let c = BatteryConfig::default();
        assert_eq!(apply_action(11.0, Action::Charge, &c).unwrap(), 13.5);
    }

    #[test]
    fn discharge_saturates_at_empty() {
        let c = BatteryConfig::default();
        assert_eq!(apply_action(3.5, Action::Discharge, &c).unwrap(), 0.0);
    }

    #[test]
    fn idle_keeps_charge() {
        for c in [BatteryConfig::default(), cfg(7.0, 0.3, 1)] {
            assert_eq!(apply_action(5.0, Action::Idle, &c).unwrap(), 5.0);
        }
    }

    #[test]
    fn out_of_range_charge_is_rejected() {
        let c = BatteryConfig::default();
        assert!(matches!(
            apply_action(-0.1, Action::Idle, &c),
            Err(EnvError::ChargeOutOfRange { .. })
        ));
        assert!(apply_action(13.6, Action::Charge, &c).is_err());
        assert!(apply_action(f64::NAN, Action::Charge, &c).is_err());
    }

    #[test]
    fn reward_examples() {
        assert!((reward(10.0, 3.0, 4.2) - 12.0).abs() < 1e-12);
        assert_eq!(reward(0.0, 17.0, -3.0), 0.0);
        assert_eq!(reward(13.5, 5.0, 5.0), 0.0);
    }

    #[test]
    fn reset_pads_with_first_price() {
        let s = PriceSeries::from_prices(vec![2.1, 3.0, 4.0, 5.0]).unwrap();
        let mut env = BatteryEnv::new(&s, cfg(13.5, 5.0, 3)).unwrap();
        let obs = env.reset(0.0).unwrap();
        assert_eq!(obs.recent_prices, vec![2.1, 2.1, 2.1]);
        assert_eq!(obs.charge, 0.0);

        let mut env = BatteryEnv::new(&s, cfg(13.5, 5.0, 1)).unwrap();
        assert_eq!(env.reset(0.0).unwrap().recent_prices, vec![2.1]);
        assert_eq!(env.reset(13.5).unwrap().charge, 13.5);
        assert!(env.reset(14.0).is_err());
    }

    #[test]
    fn short_series_is_a_configuration_error() {
        assert!(matches!(
            PriceSeries::from_prices(vec![1.0]),
            Err(EnvError::Series(_))
        ));
    }

    #[test]
    fn series_rejects_gaps_and_non_finite() {
        let t0 = DateTime::<Utc>::UNIX_EPOCH;
        let gap = vec![t0, t0 + Duration::hours(2)];
        assert!(PriceSeries::new(gap, vec![1.0, 2.0]).is_err());
        assert!(PriceSeries::from_prices(vec![1.0, f64::INFINITY]).is_err());
        let off = vec![t0 + Duration::minutes(5), t0 + Duration::minutes(65)];
        assert!(PriceSeries::new(off, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn step_uses_pre_action_charge() {
        let s = PriceSeries::from_prices(vec![3.0, 1.0, 5.0]).unwrap();
        let mut env = BatteryEnv::new(&s, cfg(1.0, 1.0, 1)).unwrap();
        env.reset(0.0).unwrap();
        let first = env.step(Action::Charge).unwrap();
        assert_eq!(first.state.charge, 1.0);
        assert_eq!(first.reward, 0.0);
        assert_eq!(first.observation.recent_prices, vec![1.0]);
        assert!(!first.done);

        let second = env.step(Action::Idle).unwrap();
        assert_eq!(second.state.charge, 1.0);
        assert_eq!(second.reward, 4.0);
        assert!(second.done);

        assert_eq!(env.step(Action::Idle), Err(EnvError::EpisodeDone(2)));
    }

    #[test]
    fn charging_when_full_is_legal() {
        let s = PriceSeries::from_prices(vec![2.0, 3.0, 1.0]).unwrap();
        let mut env = BatteryEnv::new(&s, BatteryConfig::default()).unwrap();
        env.reset(13.5).unwrap();
        let out = env.step(Action::Charge).unwrap();
        assert_eq!(out.state.charge, 13.5);
        assert_eq!(out.reward, 13.5);
    }

    #[test]
    fn reachable_sets() {
        assert_eq!(
            reachable_charges(&cfg(13.5, 5.0, 1)),
            vec![0.0, 3.5, 5.0, 8.5, 10.0, 13.5]
        );
        assert_eq!(reachable_charges(&cfg(10.0, 5.0, 1)), vec![0.0, 5.0, 10.0]);
        assert_eq!(reachable_charges(&cfg(2.0, 5.0, 1)), vec![0.0, 2.0]);
    }

    #[test]
    fn action_codes_are_fixed() {
        for (code, action) in Action::ALL.iter().enumerate() {
            assert_eq!(action.code() as usize, code);
            assert_eq!(Action::from_code(code as u8).unwrap(), *action);
        }
        assert!(Action::from_code(3).is_err());
    }

    #[test]
    fn sliding_window_matches_series() {
        let prices: Vec<f64> = (0..30).map(|i| i as f64 * 0.5).collect();
        let s = PriceSeries::from_prices(prices.clone()).unwrap();
        let mut env = BatteryEnv::new(&s, cfg(13.5, 5.0, 4)).unwrap();
        env.reset(0.0).unwrap();
        for n in 1..29 {
            let obs = env.step(Action::Idle).unwrap().observation;
            assert_eq!(obs.recent_prices.len(), 4);
            if n >= 3 {
                assert_eq!(obs.recent_prices, prices[n - 3..=n].to_vec());
            }
        }
    }

    fn action_strategy() -> impl Strategy<Value = Action> {
        (0u8..3).prop_map(|c| Action::from_code(c).unwrap())
    }

    proptest! {
        #[test]
        fn charge_stays_in_bounds(
            w in 0.5f64..20.0,
            p in 0.5f64..20.0,
            start in 0.0f64..1.0,
            actions in proptest::collection::vec(action_strategy(), 1..200),
        ) {
            let c = cfg(w, p, 1);
            let mut charge = start * w;
            for a in actions {
                charge = apply_action(charge, a, &c).unwrap();
                prop_assert!((0.0..=w).contains(&charge));
            }
        }

        #[test]
        fn reachable_set_is_small_and_closed(w in 0.5f64..20.0, p in 0.5f64..20.0) {
            let c = cfg(w, p, 1);
            let levels = reachable_charges(&c);
            prop_assert!(levels.len() <= 2 * (w / p).ceil() as usize + 2);
            prop_assert_eq!(levels[0], 0.0);
            prop_assert_eq!(*levels.last().unwrap(), w);
            for &level in &levels {
                for a in Action::ALL {
                    let next = apply_action(level, a, &c).unwrap();
                    prop_assert!(levels.contains(&next));
                }
            }
        }

        #[test]
        fn charge_then_discharge_round_trips_on_lattice(w in 0.5f64..20.0, p in 0.5f64..20.0) {
            let c = cfg(w, p, 1);
            for level in reachable_charges(&c) {
                if level + p <= w {
                    let up = apply_action(level, Action::Charge, &c).unwrap();
                    prop_assert_eq!(apply_action(up, Action::Discharge, &c).unwrap(), level);
                }
            }
        }

        #[test]
        fn charge_then_discharge_round_trips_anywhere(w in 0.5f64..20.0, p in 0.5f64..20.0, f in 0.0f64..1.0) {
            let c = cfg(w, p, 1);
            if p < w {
                let level = f * (w - p);
                let up = apply_action(level, Action::Charge, &c).unwrap();
                let back = apply_action(up, Action::Discharge, &c).unwrap();
                prop_assert!((back - level).abs() <= 1e-12 * w);
            }
        }

        #[test]
        fn episodes_are_deterministic(
            prices in proptest::collection::vec(-5.0f64..30.0, 2..60),
            actions in proptest::collection::vec(action_strategy(), 60),
        ) {
            let s = PriceSeries::from_prices(prices).unwrap();
            let run = || {
                let mut env = BatteryEnv::new(&s, cfg(13.5, 5.0, 3)).unwrap();
                env.reset(0.0).unwrap();
                let mut trace = Vec::new();
                for &a in &actions {
                    if env.is_done() { break; }
                    let o = env.step(a).unwrap();
                    trace.push((o.state.charge.to_bits(), o.reward.to_bits(), o.done));
                }
                trace
            };
            prop_assert_eq!(run(), run());
        }

        #[test]
        fn reached_charges_stay_on_lattice(
            actions in proptest::collection::vec(action_strategy(), 1..100),
            w in 0.5f64..20.0,
            p in 0.5f64..20.0,
        ) {
            let c = cfg(w, p, 1);
            let levels = reachable_charges(&c);
            let mut charge = 0.0;
            for a in actions {
                charge = apply_action(charge, a, &c).unwrap();
                prop_assert!(levels.contains(&charge));
            }
        }
    }
}
