//! Closed-loop testbed for learning MAC scheduler selection on a simulated LTE cell.
//!
//! The crate is organised bottom-up:
//!
//! - [`ransim`]: deterministic single-cell simulator (traffic, channel, PRB schedulers).
//! - [`kpi`]: 58-entry state composition and reward definitions.
//! - [`qnet`]: the 58-32-5 Q-network with analytic gradients.
//! - [`agent`]: replay buffer, n-step double-Q targets and the training step.
//! - [`harness`]: episodes, baselines, learning curves and checkpoints.
//! - [`config`]: experiment configuration files.

pub mod agent;
pub mod config;
pub mod error;
pub mod harness;
pub mod kpi;
pub mod qnet;
pub mod ransim;
pub mod seed;

pub use error::{Error, Result};
