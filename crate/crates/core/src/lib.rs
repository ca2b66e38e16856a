//! Simulator for UAV-aided software attestation of networked IoT devices,
//! with a learned attestation scheduler and heuristic baselines.

pub mod baselines;
pub mod environment;
pub mod error;
pub mod harness;
pub mod kinetics;
pub mod pd3qn;
pub mod power;
pub mod topology;

pub use error::{Error, Result};
