//! 8x8 grid with obstacles, a fixed start cell and a goal cell.
//!
//! Dynamics:
//! - Actions `0..4` move up, right, down, left.
//! - With probability `slip` the chosen action is replaced by a uniformly
//!   random one (drawn from the episode RNG).
//! - Moves into a wall or off the grid leave the agent in place.
//! - Entering the goal pays `+1` and ends the episode; every other step pays
//!   `-0.01`. Episodes are capped at `max_episode_steps`.
//!
//! The observation is a one-hot encoding of the agent's cell (row-major).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Action, ActionSpace, EnvSpec, Environment, EpisodeClock, StepResult};
use crate::error::{Error, Result};

pub const STEP_PENALTY: f64 = -0.01;
pub const GOAL_REWARD: f64 = 1.0;

const DEFAULT_LAYOUT: [&str; 8] = [
    "S.......",
    "........",
    "........",
    "#####...",
    "........",
    "...#####",
    "........",
    ".......G",
];

const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

#[derive(Debug, Clone)]
pub struct GridWorld {
    spec: EnvSpec,
    size: usize,
    walls: Vec<bool>,
    start: usize,
    goal: usize,
    slip: f64,
    pos: usize,
    rng: ChaCha8Rng,
    clock: EpisodeClock,
}

impl Default for GridWorld {
    fn default() -> Self {
        Self::new()
    }
}

impl GridWorld {
    pub const DEFAULT_SLIP: f64 = 0.1;
    pub const MAX_STEPS: usize = 100;

    pub fn new() -> Self {
        Self::from_layout(&DEFAULT_LAYOUT, Self::DEFAULT_SLIP).expect("default layout is valid")
    }

    pub fn with_slip(slip: f64) -> Self {
        Self::from_layout(&DEFAULT_LAYOUT, slip).expect("default layout is valid")
    }

    /// Parses a square layout: `S` start, `G` goal, `#` wall, `.` free.
    pub fn from_layout(rows: &[&str], slip: f64) -> Result<Self> {
        let size = rows.len();
        if !(0.0..=1.0).contains(&slip) {
            return Err(Error::Domain(format!("slip probability {slip} outside [0,1]")));
        }
        let mut walls = vec![false; size * size];
        let (mut start, mut goal) = (None, None);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != size {
                return Err(Error::Domain(format!("layout row {r} is not {size} wide")));
            }
            for (c, ch) in row.chars().enumerate() {
                let cell = r * size + c;
                match ch {
                    '#' => walls[cell] = true,
                    'S' => start = Some(cell),
                    'G' => goal = Some(cell),
                    '.' => {}
                    other => return Err(Error::Domain(format!("unknown layout symbol '{other}'"))),
                }
            }
        }
        let (start, goal) = match (start, goal) {
            (Some(s), Some(g)) => (s, g),
            _ => return Err(Error::Domain("layout needs one S and one G".into())),
        };
        Ok(GridWorld {
            spec: EnvSpec {
                id: "gridworld8".into(),
                obs_dim: size * size,
                action_space: ActionSpace::Discrete(4),
                max_episode_steps: Self::MAX_STEPS,
                reward_range: (STEP_PENALTY, GOAL_REWARD),
            },
            size,
            walls,
            start,
            goal,
            slip,
            pos: start,
            rng: ChaCha8Rng::seed_from_u64(0),
            clock: EpisodeClock::default(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn start_cell(&self) -> usize {
        self.start
    }

    pub fn goal_cell(&self) -> usize {
        self.goal
    }

    pub fn slip(&self) -> f64 {
        self.slip
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn is_wall(&self, cell: usize) -> bool {
        self.walls[cell]
    }

    pub fn observe(&self, cell: usize) -> Vec<f64> {
        let mut obs = vec![0.0; self.size * self.size];
        obs[cell] = 1.0;
        obs
    }

    /// Cell reached by moving `action` from `cell` without slipping.
    pub fn next_cell(&self, cell: usize, action: usize) -> usize {
        let (r, c) = ((cell / self.size) as isize, (cell % self.size) as isize);
        let (dr, dc) = MOVES[action];
        let (nr, nc) = (r + dr, c + dc);
        let n = self.size as isize;
        if nr < 0 || nc < 0 || nr >= n || nc >= n {
            return cell;
        }
        let next = (nr * n + nc) as usize;
        if self.walls[next] {
            cell
        } else {
            next
        }
    }

    fn reward_for(&self, cell: usize) -> f64 {
        if cell == self.goal {
            GOAL_REWARD
        } else {
            STEP_PENALTY
        }
    }

    /// Exact finite-horizon value iteration over the step cap.
    pub fn value_iteration(&self, gamma: f64) -> ValueIteration {
        let n = self.size * self.size;
        let horizon = self.spec.max_episode_steps;
        let mut v = vec![0.0; n];
        let mut policy = vec![0usize; n];
        for _ in 0..horizon {
            let mut next_v = vec![0.0; n];
            for s in 0..n {
                if self.walls[s] || s == self.goal {
                    continue;
                }
                let q: Vec<f64> = (0..4).map(|a| self.q_value(s, a, &v, gamma)).collect();
                let (best, val) = argmax(&q);
                next_v[s] = val;
                policy[s] = best;
            }
            v = next_v;
        }
        ValueIteration {
            values: v,
            policy,
            start: self.start,
        }
    }

    fn q_value(&self, s: usize, a: usize, v: &[f64], gamma: f64) -> f64 {
        (0..4)
            .map(|actual| {
                let p = if actual == a {
                    1.0 - self.slip + self.slip / 4.0
                } else {
                    self.slip / 4.0
                };
                let s2 = self.next_cell(s, actual);
                let cont = if s2 == self.goal { 0.0 } else { v[s2] };
                p * (self.reward_for(s2) + gamma * cont)
            })
            .sum()
    }
}

fn argmax(xs: &[f64]) -> (usize, f64) {
    xs.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, x)| if x > acc.1 { (i, x) } else { acc })
}

/// Optimal values and greedy actions from [`GridWorld::value_iteration`].
#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    start: usize,
}

impl ValueIteration {
    /// Expected optimal return from the start cell over the full step cap.
    pub fn optimal_return(&self) -> f64 {
        self.values[self.start]
    }
}

impl Environment for GridWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.pos = self.start;
        self.clock.reset();
        self.observe(self.pos)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.clock.begin_step(&self.spec.id)?;
        let a = match action {
            Action::Discrete(a) if *a < 4 => *a,
            other => {
                return Err(Error::Domain(format!(
                    "gridworld8 expects a discrete action in 0..4, got {other:?}"
                )))
            }
        };
        // Always draw so the RNG stream does not depend on the slip outcome.
        let u: f64 = self.rng.random();
        let k: usize = self.rng.random_range(0..4);
        let actual = if u < self.slip { k } else { a };
        self.pos = self.next_cell(self.pos, actual);
        let reward = self.reward_for(self.pos);
        let capped = self.clock.tick(self.spec.max_episode_steps);
        let done = self.pos == self.goal || capped;
        self.clock.done = done;
        Ok(StepResult {
            observation: self.observe(self.pos),
            reward,
            done,
            clipped: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_places_agent_at_start() {
        let mut env = GridWorld::new();
        let obs = env.reset(7);
        assert_eq!(obs.len(), 64);
        assert_eq!(obs[0], 1.0);
        assert_eq!(obs.iter().sum::<f64>(), 1.0);
        assert_eq!(env.position(), env.start_cell());
    }

    #[test]
    fn wall_bump_keeps_position_and_pays_step_penalty() {
        let mut env = GridWorld::with_slip(0.0);
        env.reset(1);
        // Up from the top-left corner leaves the grid.
        let r = env.step(&Action::Discrete(0)).unwrap();
        assert_eq!(env.position(), 0);
        assert_eq!(r.reward, STEP_PENALTY);
        assert!(!r.done);
        // Walk down to row 2 then bump into the wall at row 3.
        env.step(&Action::Discrete(2)).unwrap();
        env.step(&Action::Discrete(2)).unwrap();
        assert_eq!(env.position(), 16);
        let r = env.step(&Action::Discrete(2)).unwrap();
        assert_eq!(env.position(), 16);
        assert_eq!(r.reward, STEP_PENALTY);
    }

    #[test]
    fn out_of_range_action_is_a_domain_error() {
        let mut env = GridWorld::new();
        env.reset(0);
        assert!(matches!(env.step(&Action::Discrete(4)), Err(Error::Domain(_))));
        assert!(matches!(
            env.step(&Action::Continuous(vec![0.0])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn greedy_policy_reaches_goal_without_slip() {
        let mut env = GridWorld::with_slip(0.0);
        let vi = env.value_iteration(1.0);
        env.reset(3);
        let mut ret = 0.0;
        loop {
            let r = env.step(&Action::Discrete(vi.policy[env.position()])).unwrap();
            ret += r.reward;
            if r.done {
                break;
            }
        }
        assert_eq!(env.position(), env.goal_cell());
        assert!((ret - vi.optimal_return()).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed_and_actions() {
        let run = |seed| {
            let mut env = GridWorld::new();
            let mut out = vec![env.reset(seed)];
            for k in 0..40 {
                let r = env.step(&Action::Discrete(k % 4)).unwrap();
                out.push(r.observation.clone());
                if r.done {
                    break;
                }
            }
            out
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn bad_layouts_rejected() {
        assert!(GridWorld::from_layout(&["S.", ".."], 0.0).is_err());
        assert!(GridWorld::from_layout(&["S.", "x G"], 0.0).is_err());
        assert!(GridWorld::from_layout(&["SG", ".."], 1.5).is_err());
    }
}
