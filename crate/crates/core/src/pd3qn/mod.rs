//! Prioritized dueling double deep Q-network scheduler.

pub mod adam;
pub mod agent;
pub mod checkpoint;
pub mod network;
pub mod replay;

pub use adam::{apply_adam, soft_update, AdamConfig, AdamState};
pub use agent::{linear_schedule, masked_argmax, select_action, td_targets, Agent, AgentHyper, TrainOutcome};
pub use checkpoint::Checkpoint;
pub use network::{loss_and_gradients, Dense, DuelingParams, NetDims, QOutput};
pub use replay::{ReplayBuffer, Sample, SumTree, Transition};
