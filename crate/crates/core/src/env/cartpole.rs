//! Classic cart-pole balancing with two discrete pushes.
//!
//! Explicit-Euler integration of the standard cart-pole equations with
//! `tau = 0.02`. Every step pays `+1`. The episode ends when the pole leaves
//! `±12°`, the cart leaves `±2.4`, or after 500 steps. Initial state entries
//! are uniform in `[-0.05, 0.05]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Action, ActionSpace, EnvSpec, Environment, EpisodeClock, StepResult};
use crate::error::{Error, Result};

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const HALF_LENGTH: f64 = 0.5;
const FORCE: f64 = 10.0;
const TAU: f64 = 0.02;
pub const ANGLE_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
pub const POSITION_LIMIT: f64 = 2.4;

#[derive(Debug, Clone)]
pub struct CartPole {
    spec: EnvSpec,
    /// `[x, x_dot, theta, theta_dot]`.
    state: [f64; 4],
    clock: EpisodeClock,
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl CartPole {
    pub fn new() -> Self {
        CartPole {
            spec: EnvSpec {
                id: "cartpole".into(),
                obs_dim: 4,
                action_space: ActionSpace::Discrete(2),
                max_episode_steps: 500,
                reward_range: (1.0, 1.0),
            },
            state: [0.0; 4],
            clock: EpisodeClock::default(),
        }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Overrides the physical state of a running episode.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
    }

    fn integrate(state: [f64; 4], push_right: bool) -> [f64; 4] {
        let [x, x_dot, theta, theta_dot] = state;
        let force = if push_right { FORCE } else { -FORCE };
        let total_mass = MASS_CART + MASS_POLE;
        let pole_ml = MASS_POLE * HALF_LENGTH;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + pole_ml * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / total_mass));
        let x_acc = temp - pole_ml * theta_acc * cos / total_mass;
        [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ]
    }
}

impl Environment for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in self.state.iter_mut() {
            *v = rng.random_range(-0.05..0.05);
        }
        self.clock.reset();
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.clock.begin_step(&self.spec.id)?;
        let push_right = match action {
            Action::Discrete(0) => false,
            Action::Discrete(1) => true,
            other => {
                return Err(Error::Domain(format!(
                    "cartpole expects a discrete action in 0..2, got {other:?}"
                )))
            }
        };
        self.state = Self::integrate(self.state, push_right);
        let [x, _, theta, _] = self.state;
        let fallen = x.abs() > POSITION_LIMIT || theta.abs() > ANGLE_LIMIT;
        let capped = self.clock.tick(self.spec.max_episode_steps);
        let done = fallen || capped;
        self.clock.done = done;
        Ok(StepResult {
            observation: self.state.to_vec(),
            reward: 1.0,
            done,
            clipped: false,
        })
    }
}
