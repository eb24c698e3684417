use rand::Rng;

use crate::env::Action;

/// Linear exploration decay from `start` to `end` over the first
/// `fraction` of training, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            fraction: 0.1,
        }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, step: u64, total_steps: u64) -> f64 {
        let horizon = self.fraction * total_steps as f64;
        if horizon <= 0.0 {
            return self.end;
        }
        let progress = step as f64 / horizon;
        if progress >= 1.0 {
            return self.end;
        }
        (self.start + progress * (self.end - self.start)).clamp(self.end, self.start)
    }
}

/// Index of the largest Q-value; ties go to the lowest action code.
pub fn greedy_action(q: &[f64; 3]) -> Action {
    let mut best = 0;
    for i in 1..q.len() {
        if q[i] > q[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

/// Epsilon-greedy choice over the three actions.
pub fn select_action<R: Rng + ?Sized>(q: &[f64; 3], epsilon: f64, rng: &mut R) -> Action {
    if rng.random::<f64>() < epsilon {
        Action::ALL[rng.random_range(0..Action::COUNT)]
    } else {
        greedy_action(q)
    }
}
