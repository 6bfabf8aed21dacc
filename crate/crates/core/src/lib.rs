//! Reinforcement learning from environment interaction plus a set of
//! possibly noisy demonstrations, with each demonstration instance weighted
//! by how much its recorded return beats the learner's own value estimate.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`nn`]: dense `f64` tensors, MLPs with manual backprop, Adam.
//! - [`env`]: the benchmark environments behind one [`env::Environment`] trait.
//! - [`demos`]: demonstration generation, corruption, returns and JSONL I/O.
//! - [`weighting`]: the per-instance weight forms.
//! - [`policy_opt`]: advantage estimation and the demo, PPO and KL-penalty losses.
//! - [`trainer`]: the training loop, baseline modes, evaluation and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod demos;
pub mod env;
pub mod error;
pub mod nn;
pub mod policy;
pub mod policy_opt;
pub mod tensor;
pub mod trainer;
pub mod weighting;

pub use config::{Mode, TrainConfig};
pub use error::{Error, Result};
pub use trainer::{evaluate, train, IterationMetrics, Trainer};
pub use weighting::WeightForm;
