//! Versioned JSON snapshot of an agent.
//!
//! Layout (one object):
//!
//! | key            | content                                                |
//! |----------------|--------------------------------------------------------|
//! | `format`       | always `"uavtrust-pd3qn"`                              |
//! | `version`      | container version, currently 1                         |
//! | `dims`         | layer widths                                           |
//! | `hyper`        | agent hyperparameters                                  |
//! | `online`       | online-network tensors, row-major, declared order      |
//! | `target`       | target-network tensors                                 |
//! | `adam`         | first and second moments (same order), step count, betas, eps |
//! | `env_steps`, `train_steps`, `anneal_steps` | counters                   |
//! | `rng`          | ChaCha stream state                                    |
//!
//! Tensor order is each layer's weight then bias for: shared, value hidden,
//! value output, advantage hidden, advantage output. Floats are written with
//! round-trip precision, so loading restores every value exactly. The replay
//! buffer is not saved.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::agent::{Agent, AgentHyper};
use super::network::{DuelingParams, NetDims};
use super::replay::ReplayBuffer;
use crate::error::{Error, Result};

pub const FORMAT: &str = "uavtrust-pd3qn";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AdamRecord {
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    format: String,
    version: u32,
    dims: NetDims,
    hyper: AgentHyper,
    online: Vec<Vec<f64>>,
    target: Vec<Vec<f64>>,
    adam: AdamRecord,
    env_steps: u64,
    train_steps: u64,
    anneal_steps: u64,
    rng: ChaCha8Rng,
}

fn flatten(p: &DuelingParams) -> Vec<Vec<f64>> {
    p.tensors().iter().map(|t| t.to_vec()).collect()
}

fn corrupt(e: Error) -> Error {
    Error::Checkpoint(format!("inconsistent tensors: {e}"))
}

impl Checkpoint {
    pub fn capture(agent: &Agent) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            dims: agent.online.dims(),
            hyper: agent.hyper.clone(),
            online: flatten(&agent.online),
            target: flatten(&agent.target),
            adam: AdamRecord {
                first_moment: flatten(&agent.adam.first_moment),
                second_moment: flatten(&agent.adam.second_moment),
                step_count: agent.adam.step_count,
                beta1: agent.adam.beta1,
                beta2: agent.adam.beta2,
                eps: agent.adam.eps,
            },
            env_steps: agent.env_steps,
            train_steps: agent.train_steps,
            anneal_steps: agent.anneal_steps,
            rng: agent.rng.clone(),
        }
    }

    pub fn dims(&self) -> NetDims {
        self.dims
    }

    /// Rebuilds the agent with an empty replay buffer.
    pub fn restore(&self) -> Result<Agent> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format tag {:?}", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {VERSION})",
                self.version
            )));
        }
        self.hyper.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        if self.dims.hidden != self.hyper.hidden {
            return Err(Error::Checkpoint("hidden width disagrees with hyperparameters".into()));
        }
        let d = self.dims;
        Ok(Agent {
            online: DuelingParams::from_tensors(d, &self.online).map_err(corrupt)?,
            target: DuelingParams::from_tensors(d, &self.target).map_err(corrupt)?,
            adam: AdamState {
                first_moment: DuelingParams::from_tensors(d, &self.adam.first_moment).map_err(corrupt)?,
                second_moment: DuelingParams::from_tensors(d, &self.adam.second_moment).map_err(corrupt)?,
                step_count: self.adam.step_count,
                beta1: self.adam.beta1,
                beta2: self.adam.beta2,
                eps: self.adam.eps,
            },
            buffer: ReplayBuffer::new(self.hyper.buffer_capacity, self.hyper.alpha, self.hyper.eps_priority),
            rng: self.rng.clone(),
            env_steps: self.env_steps,
            train_steps: self.train_steps,
            anneal_steps: self.anneal_steps,
            hyper: self.hyper.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("unreadable container: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}
