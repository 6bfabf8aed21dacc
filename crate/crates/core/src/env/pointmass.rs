//! Planar point mass steered by a velocity command.
//!
//! - Observation: `[x, y]`.
//! - Action: velocity in `[-1, 1]^2`; out-of-range commands are clipped and
//!   the step is flagged.
//! - Dynamics: `p' = clamp(p + v * dt, -1, 1)` with `dt = 0.1`.
//! - Reward: `-|p' - target|` every step. The episode ends within
//!   [`PointMass::GOAL_RADIUS`] of the target or after 200 steps.
//! - Start: uniform over [`PointMass::START_REGION`] in both coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Action, ActionSpace, EnvSpec, Environment, EpisodeClock, StepResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PointMass {
    spec: EnvSpec,
    pos: [f64; 2],
    clock: EpisodeClock,
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl PointMass {
    pub const DT: f64 = 0.1;
    pub const TARGET: [f64; 2] = [0.6, 0.6];
    pub const GOAL_RADIUS: f64 = 0.05;
    pub const START_REGION: (f64, f64) = (-0.9, -0.5);
    pub const ARENA: f64 = 1.0;

    pub fn new() -> Self {
        let max_dist = (2.0 * (2.0 * Self::ARENA).powi(2)).sqrt();
        PointMass {
            spec: EnvSpec {
                id: "pointmass".into(),
                obs_dim: 2,
                action_space: ActionSpace::Continuous {
                    low: vec![-1.0; 2],
                    high: vec![1.0; 2],
                },
                max_episode_steps: 200,
                reward_range: (-max_dist, 0.0),
            },
            pos: [0.0; 2],
            clock: EpisodeClock::default(),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }
}

impl Environment for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = Self::START_REGION;
        self.pos = [rng.random_range(lo..hi), rng.random_range(lo..hi)];
        self.clock.reset();
        self.pos.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.clock.begin_step(&self.spec.id)?;
        let v = match action {
            Action::Continuous(v) if v.len() == 2 => v,
            other => {
                return Err(Error::Domain(format!(
                    "pointmass expects a 2-d continuous action, got {other:?}"
                )))
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite pointmass action {v:?}")));
        }
        let mut clipped = false;
        for (p, &vi) in self.pos.iter_mut().zip(v) {
            let c = vi.clamp(-1.0, 1.0);
            clipped |= c != vi;
            *p = (*p + c * Self::DT).clamp(-Self::ARENA, Self::ARENA);
        }
        let dist = ((self.pos[0] - Self::TARGET[0]).powi(2)
            + (self.pos[1] - Self::TARGET[1]).powi(2))
        .sqrt();
        let capped = self.clock.tick(self.spec.max_episode_steps);
        let done = dist < Self::GOAL_RADIUS || capped;
        self.clock.done = done;
        Ok(StepResult {
            observation: self.pos.to_vec(),
            reward: -dist,
            done,
            clipped,
        })
    }
}
