use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    forward, greedy_action, select_action, sync_target, train_step, Adam, Checkpoint,
    CheckpointMeta, DqnError, Hyperparameters, ObservationNormalizer, QNetwork, ReplayBuffer,
};
use crate::env::{Action, BatteryConfig, Observation, Transition};
use crate::policy::Policy;

/// Online network, target network, optimizer and replay memory driven by
/// one sequential training loop.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub online: QNetwork,
    pub target: QNetwork,
    pub optimizer: Adam,
    pub buffer: ReplayBuffer<Transition>,
    pub normalizer: ObservationNormalizer,
    pub hyper: Hyperparameters,
    explore_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    env_steps: u64,
    updates: u64,
}

impl DqnAgent {
    /// Network init, exploration and replay sampling each get their own
    /// stream derived from `seed`.
    pub fn new(
        window: usize,
        normalizer: ObservationNormalizer,
        hyper: Hyperparameters,
        seed: u64,
    ) -> Self {
        let online = QNetwork::init(window, seed);
        let target = online.clone();
        let optimizer = Adam::new(online.num_params(), hyper.learning_rate);
        let mut explore_rng = ChaCha8Rng::seed_from_u64(seed);
        explore_rng.set_stream(1);
        let mut sample_rng = ChaCha8Rng::seed_from_u64(seed);
        sample_rng.set_stream(2);
        Self {
            online,
            target,
            optimizer,
            buffer: ReplayBuffer::new(hyper.buffer_capacity),
            normalizer,
            hyper,
            explore_rng,
            sample_rng,
            env_steps: 0,
            updates: 0,
        }
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn q_values(&self, obs: &Observation) -> Result<[f64; 3], DqnError> {
        forward(&self.online, obs, &self.normalizer)
    }

    pub fn act(&mut self, obs: &Observation, epsilon: f64) -> Result<Action, DqnError> {
        let q = self.q_values(obs)?;
        Ok(select_action(&q, epsilon, &mut self.explore_rng))
    }

    /// Store a transition and run a gradient update when one is due.
    pub fn observe(&mut self, transition: Transition) -> Result<Option<f64>, DqnError> {
        self.buffer.push(transition);
        self.env_steps += 1;
        let due = self.env_steps >= self.hyper.learning_starts
            && self.env_steps.is_multiple_of(self.hyper.train_every)
            && self.buffer.len() >= self.hyper.batch_size;
        if !due {
            return Ok(None);
        }
        let loss = train_step(
            &mut self.online,
            &self.target,
            &self.buffer,
            &mut self.optimizer,
            &self.normalizer,
            self.hyper.batch_size,
            self.hyper.gamma,
            &mut self.sample_rng,
        )?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.hyper.target_sync_every) {
            sync_target(&self.online, &mut self.target);
        }
        Ok(Some(loss))
    }

    pub fn checkpoint(&self, battery: BatteryConfig, meta: CheckpointMeta) -> Checkpoint {
        Checkpoint {
            network: self.online.clone(),
            optimizer: self.optimizer.clone(),
            normalizer: self.normalizer,
            battery,
            meta,
        }
    }

    pub fn greedy_policy(&self) -> GreedyPolicy<'_> {
        GreedyPolicy {
            network: &self.online,
            normalizer: &self.normalizer,
        }
    }
}

/// Always takes the highest-Q action (lowest code on ties).
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy<'a> {
    pub network: &'a QNetwork,
    pub normalizer: &'a ObservationNormalizer,
}

impl<'a> GreedyPolicy<'a> {
    pub fn from_checkpoint(ckpt: &'a Checkpoint) -> Self {
        Self {
            network: &ckpt.network,
            normalizer: &ckpt.normalizer,
        }
    }
}

impl Policy for GreedyPolicy<'_> {
    fn act(&mut self, obs: &Observation) -> Action {
        let q = forward(self.network, obs, self.normalizer)
            .expect("observation width checked against the network before rollout");
        greedy_action(&q)
    }
}
