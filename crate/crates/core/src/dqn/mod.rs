//! Deep Q-learning from scratch: network, replay, exploration, optimizer,
//! TD targets and checkpoints.

mod adam;
mod agent;
mod checkpoint;
mod network;
mod replay;
mod schedule;

pub use adam::Adam;
pub use agent::{DqnAgent, GreedyPolicy};
pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{forward, ForwardCache, ObservationNormalizer, QNetwork, HIDDEN_WIDTHS};
pub use replay::ReplayBuffer;
pub use schedule::{greedy_action, select_action, EpsilonSchedule};

use rand::Rng;
use thiserror::Error;

use crate::env::Transition;

#[derive(Debug, Error)]
pub enum DqnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("replay buffer holds {len} transitions, need {batch_size}")]
    NotReady { len: usize, batch_size: usize },
    #[error("non-finite training loss {loss} at update {update}")]
    NonFiniteLoss { loss: f64, update: u64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Learning hyperparameters. Defaults follow the common DQN baseline family:
/// γ = 0.99, batch 32, 200k replay, 1k warm-up steps, an update every 4
/// environment steps, hard target sync every 1k updates, Adam at 1e-4.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub learning_starts: u64,
    pub train_every: u64,
    pub target_sync_every: u64,
    pub epsilon: EpsilonSchedule,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            learning_rate: 1e-4,
            batch_size: 32,
            buffer_capacity: 200_000,
            learning_starts: 1_000,
            train_every: 4,
            target_sync_every: 1_000,
            epsilon: EpsilonSchedule::default(),
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, value) in [
            ("batch_size", self.batch_size as u64),
            ("buffer_capacity", self.buffer_capacity as u64),
            ("train_every", self.train_every),
            ("target_sync_every", self.target_sync_every),
        ] {
            if value == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        let e = &self.epsilon;
        if !(0.0 <= e.end && e.end <= e.start && e.start <= 1.0) || e.fraction < 0.0 {
            return Err(format!("invalid epsilon schedule {e:?}"));
        }
        Ok(())
    }
}

fn huber(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

fn huber_grad(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// `r + γ (1 − done) max_a Q_target(s', a)` for every transition.
pub fn td_targets(
    batch: &[&Transition],
    target_net: &QNetwork,
    norm: &ObservationNormalizer,
    gamma: f64,
) -> Result<Vec<f64>, DqnError> {
    let mut x = Vec::new();
    batch
        .iter()
        .map(|t| {
            if t.done {
                return Ok(t.reward);
            }
            norm.write_features(&t.next_obs, &mut x);
            let q = target_net.forward(&x)?;
            Ok(t.reward + gamma * q[0].max(q[1]).max(q[2]))
        })
        .collect()
}

/// Mean Huber TD loss over `batch` and its gradient with respect to the
/// online network. The target network only supplies constants.
pub fn loss_and_gradient(
    online: &QNetwork,
    target_net: &QNetwork,
    batch: &[&Transition],
    norm: &ObservationNormalizer,
    gamma: f64,
) -> Result<(f64, Vec<f64>), DqnError> {
    if batch.is_empty() {
        return Err(DqnError::Shape("empty batch".into()));
    }
    let targets = td_targets(batch, target_net, norm, gamma)?;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = vec![0.0; online.num_params()];
    let mut cache = ForwardCache::default();
    let mut x = Vec::new();
    let mut loss = 0.0;
    for (t, y) in batch.iter().zip(&targets) {
        norm.write_features(&t.obs, &mut x);
        let q = online.forward_cached(&x, &mut cache)?;
        let a = t.action.index();
        let err = q[a] - y;
        loss += huber(err);
        let mut dq = [0.0; 3];
        dq[a] = huber_grad(err) * scale;
        online.backward(&cache, &dq, &mut grads);
    }
    Ok((loss * scale, grads))
}

/// Sample a batch, take one Adam step on the online network, return the loss.
#[allow(clippy::too_many_arguments)]
pub fn train_step<R: Rng + ?Sized>(
    online: &mut QNetwork,
    target_net: &QNetwork,
    buffer: &ReplayBuffer<Transition>,
    opt: &mut Adam,
    norm: &ObservationNormalizer,
    batch_size: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<f64, DqnError> {
    let batch = buffer.sample(batch_size, rng)?;
    let (loss, grads) = loss_and_gradient(online, target_net, &batch, norm, gamma)?;
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(DqnError::NonFiniteLoss {
            loss,
            update: opt.step + 1,
        });
    }
    opt.update(online.params_mut(), &grads);
    Ok(loss)
}

/// Hard target update.
pub fn sync_target(online: &QNetwork, target_net: &mut QNetwork) {
    target_net.copy_from(online);
}
