//! Seedable desk-scale environments.

mod cartpole;
mod gridworld;
mod pointmass;

pub use cartpole::CartPole;
pub use gridworld::{GridWorld, ValueIteration};
pub use pointmass::PointMass;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    /// Number of discrete actions or the continuous action dimension.
    pub fn dim(&self) -> usize {
        match self {
            ActionSpace::Discrete(n) => *n,
            ActionSpace::Continuous { low, .. } => low.len(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub id: String,
    pub obs_dim: usize,
    pub action_space: ActionSpace,
    pub max_episode_steps: usize,
    pub reward_range: (f64, f64),
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.max_episode_steps == 0 {
            return Err(Error::Domain(format!("{}: empty observation or step cap", self.id)));
        }
        match &self.action_space {
            ActionSpace::Discrete(n) if *n < 2 => {
                Err(Error::Domain(format!("{}: discrete space needs n >= 2", self.id)))
            }
            ActionSpace::Continuous { low, high }
                if low.len() != high.len() || low.iter().zip(high).any(|(l, h)| l >= h) =>
            {
                Err(Error::Domain(format!("{}: continuous bounds need low < high", self.id)))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Set when a continuous action had to be clipped into bounds.
    pub clipped: bool,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a fresh episode. The same seed always yields the same episode
    /// given the same actions.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &Action) -> Result<StepResult>;
}

pub const ENV_IDS: [&str; 3] = ["gridworld8", "cartpole", "pointmass"];

/// Builds an environment from its string id.
pub fn make(id: &str) -> Result<Box<dyn Environment>> {
    match id {
        "gridworld8" => Ok(Box::new(GridWorld::new())),
        "cartpole" => Ok(Box::new(CartPole::new())),
        "pointmass" => Ok(Box::new(PointMass::new())),
        other => Err(Error::Config(format!(
            "unknown environment '{other}', expected one of {ENV_IDS:?}"
        ))),
    }
}

/// Step-counter bookkeeping shared by the environments.
#[derive(Debug, Clone, Default)]
pub(crate) struct EpisodeClock {
    pub steps: usize,
    pub done: bool,
    pub started: bool,
}

impl EpisodeClock {
    pub fn reset(&mut self) {
        *self = EpisodeClock {
            steps: 0,
            done: false,
            started: true,
        };
    }

    pub fn begin_step(&self, id: &str) -> Result<()> {
        if !self.started {
            return Err(Error::State(format!("{id}: step called before reset")));
        }
        if self.done {
            return Err(Error::State(format!("{id}: step called on a finished episode")));
        }
        Ok(())
    }

    /// Advances the clock; returns true when the step cap is reached.
    pub fn tick(&mut self, cap: usize) -> bool {
        self.steps += 1;
        self.steps >= cap
    }
}
