//! Masked epsilon-greedy agent with double-Q targets, prioritized replay and
//! soft target tracking.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{apply_adam, soft_update, AdamConfig, AdamState};
use super::network::{loss_and_gradients, DuelingParams, NetDims};
use super::replay::{ReplayBuffer, Transition};
use crate::baselines::rand_policy;
use crate::environment::{Action, ActionMask};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentHyper {
    pub lr: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub batch: usize,
    pub target_period: u64,
    pub soft_tau: f64,
    pub train_start: usize,
    pub buffer_capacity: usize,
    pub alpha: f64,
    pub eps_priority: f64,
    pub hidden: usize,
    pub adam: AdamConfig,
}

impl Default for AgentHyper {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            gamma: 0.5,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            beta_start: 0.6,
            beta_end: 1.0,
            batch: 32,
            target_period: 200,
            soft_tau: 0.01,
            train_start: 320,
            buffer_capacity: 4000,
            alpha: 0.2,
            eps_priority: 1e-5,
            hidden: 256,
            adam: AdamConfig::default(),
        }
    }
}

impl AgentHyper {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("epsilon_start", self.epsilon_start)?;
        unit("epsilon_end", self.epsilon_end)?;
        unit("beta_start", self.beta_start)?;
        unit("beta_end", self.beta_end)?;
        unit("alpha", self.alpha)?;
        if !(self.soft_tau > 0.0 && self.soft_tau <= 1.0) {
            return Err(Error::Config(format!("soft_tau must lie in (0, 1], got {}", self.soft_tau)));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        if !(self.eps_priority.is_finite() && self.eps_priority > 0.0) {
            return Err(Error::Config("eps_priority must be positive".into()));
        }
        if self.batch == 0 || self.batch > self.buffer_capacity {
            return Err(Error::Config(format!(
                "batch {} must be positive and at most the buffer capacity {}",
                self.batch, self.buffer_capacity
            )));
        }
        if self.train_start < self.batch {
            return Err(Error::Config("train_start must be at least the batch size".into()));
        }
        if self.target_period == 0 || self.hidden == 0 {
            return Err(Error::Config("target_period and hidden must be positive".into()));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config("adam betas must lie in [0, 1) and eps must be positive".into()));
        }
        Ok(())
    }
}

/// Linear interpolation from `start` to `end` over `horizon` steps, then flat.
pub fn linear_schedule(start: f64, end: f64, step: u64, horizon: u64) -> f64 {
    if horizon == 0 || step >= horizon {
        return end;
    }
    start + (end - start) * (step as f64 / horizon as f64)
}

/// Index of the largest entry among allowed actions; ties go to the lowest index.
pub fn masked_argmax(q: &[f64], mask: &ActionMask) -> Option<usize> {
    let mut best: Option<usize> = None;
    for a in mask.allowed().filter(|&a| a < q.len()) {
        if best.is_none_or(|b| q[a] > q[b]) {
            best = Some(a);
        }
    }
    best
}

pub fn select_action<R: Rng + ?Sized>(
    params: &DuelingParams,
    obs: &[f64],
    mask: &ActionMask,
    epsilon: f64,
    rng: &mut R,
) -> Result<Action> {
    if mask.count() == 0 {
        return Err(Error::Contract("action mask is empty".into()));
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rand_policy(mask, rng));
    }
    let q = params.q_forward(obs)?.q;
    masked_argmax(&q, mask)
        .map(Action)
        .ok_or_else(|| Error::Contract("mask allows no action of the network".into()))
}

fn stack<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, width: usize) -> Result<Array2<f64>> {
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * width);
    for r in rows {
        if r.len() != width {
            return Err(Error::Shape {
                expected: width,
                actual: r.len(),
            });
        }
        flat.extend_from_slice(r);
    }
    Ok(Array2::from_shape_vec((n, width), flat).expect("rows have equal width"))
}

/// `r + gamma * Q_target(s', argmax_{a in mask'} Q_online(s', a))`. The task
/// is continuing, so every transition bootstraps.
pub fn td_targets(batch: &[&Transition], online: &DuelingParams, target: &DuelingParams, gamma: f64) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let width = online.dims().input;
    let next = stack(batch.iter().map(|t| t.next_obs.as_slice()), width)?;
    let q_online = online.forward_batch(next.view())?.q;
    let q_target = target.forward_batch(next.view())?.q;
    batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let row = q_online.row(i);
            let a = masked_argmax(row.as_slice().expect("contiguous row"), &t.next_mask)
                .ok_or_else(|| Error::Contract("transition has an empty next mask".into()))?;
            Ok(t.reward + gamma * q_target[[i, a]])
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrainOutcome {
    NotReady,
    Trained { loss: f64 },
}

#[derive(Clone, Debug)]
pub struct Agent {
    pub(crate) hyper: AgentHyper,
    pub(crate) online: DuelingParams,
    pub(crate) target: DuelingParams,
    pub(crate) adam: AdamState,
    pub(crate) buffer: ReplayBuffer,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) env_steps: u64,
    pub(crate) train_steps: u64,
    /// Environment steps over which epsilon and beta anneal.
    pub(crate) anneal_steps: u64,
}

impl Agent {
    pub fn new(obs_dim: usize, actions: usize, hyper: AgentHyper, anneal_steps: u64, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if obs_dim == 0 || actions == 0 {
            return Err(Error::Config("network input and output widths must be positive".into()));
        }
        let dims = NetDims::new(obs_dim, actions, hyper.hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = DuelingParams::new(dims, &mut rng);
        Ok(Self {
            target: online.clone(),
            adam: AdamState::new(dims, hyper.adam),
            buffer: ReplayBuffer::new(hyper.buffer_capacity, hyper.alpha, hyper.eps_priority),
            online,
            rng,
            env_steps: 0,
            train_steps: 0,
            anneal_steps,
            hyper,
        })
    }

    pub fn hyper(&self) -> &AgentHyper {
        &self.hyper
    }

    pub fn online(&self) -> &DuelingParams {
        &self.online
    }

    pub fn target(&self) -> &DuelingParams {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn anneal_steps(&self) -> u64 {
        self.anneal_steps
    }

    pub fn epsilon(&self) -> f64 {
        linear_schedule(self.hyper.epsilon_start, self.hyper.epsilon_end, self.env_steps, self.anneal_steps)
    }

    pub fn beta(&self) -> f64 {
        linear_schedule(self.hyper.beta_start, self.hyper.beta_end, self.env_steps, self.anneal_steps)
    }

    /// Action under the current exploration rate.
    pub fn act(&mut self, obs: &[f64], mask: &ActionMask) -> Result<Action> {
        let eps = self.epsilon();
        self.act_with_epsilon(obs, mask, eps)
    }

    pub fn act_with_epsilon(&mut self, obs: &[f64], mask: &ActionMask, epsilon: f64) -> Result<Action> {
        select_action(&self.online, obs, mask, epsilon, &mut self.rng)
    }

    /// Stores a transition and advances the schedules by one environment step.
    pub fn observe(&mut self, tr: Transition) {
        self.buffer.insert(tr);
        self.env_steps += 1;
    }

    pub fn train_step(&mut self) -> Result<TrainOutcome> {
        if self.buffer.len() < self.hyper.train_start {
            return Ok(TrainOutcome::NotReady);
        }
        let beta = self.beta();
        let width = self.online.dims().input;
        let sample = self
            .buffer
            .sample(self.hyper.batch, beta, &mut self.rng)
            .expect("train_start is at least the batch size");
        let targets = td_targets(&sample.transitions, &self.online, &self.target, self.hyper.gamma)?;
        let obs = stack(sample.transitions.iter().map(|t| t.obs.as_slice()), width)?;
        let actions: Vec<usize> = sample.transitions.iter().map(|t| t.action).collect();
        let indices = sample.indices;
        let weights = sample.weights;

        let (loss, grads, td) = loss_and_gradients(&self.online, obs.view(), &actions, &targets, &weights)?;
        apply_adam(&mut self.online, &grads, &mut self.adam, self.hyper.lr)?;
        self.buffer.update_priorities(&indices, &td);
        self.train_steps += 1;
        if self.train_steps % self.hyper.target_period == 0 {
            soft_update(&self.online, &mut self.target, self.hyper.soft_tau)?;
        }
        Ok(TrainOutcome::Trained { loss })
    }
}
