//! Expert demonstration trajectories: generation, corruption, returns and
//! JSON Lines persistence.
//!
//! File layout: the first line is a header object
//! `{"format":"dwrl-demos","format_version":1,"env_id":..,"gamma":..}`,
//! followed by one [`Trajectory`] object per line.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, ActionSpace, Environment};
use crate::error::{Error, Result};
use crate::nn::MlpParams;
use crate::policy::{self, ActionDist};

pub const FORMAT_NAME: &str = "dwrl-demos";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertAction {
    /// Executed action plus the demonstrator's full distribution.
    Discrete { action: usize, probs: Vec<f64> },
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoInstance {
    pub state: Vec<f64>,
    pub expert_action: ExpertAction,
    pub reward: f64,
    /// Ground-truth provenance; evaluation only.
    pub is_noisy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub instances: Vec<DemoInstance>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.instances.iter().map(|i| i.reward)
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards().sum()
    }

    pub fn is_noisy(&self) -> bool {
        self.instances.iter().any(|i| i.is_noisy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSet {
    pub env_id: String,
    pub gamma: f64,
    pub trajectories: Vec<Trajectory>,
}

impl DemoSet {
    pub fn new(env_id: impl Into<String>, gamma: f64, trajectories: Vec<Trajectory>) -> Result<Self> {
        let set = DemoSet {
            env_id: env_id.into(),
            gamma,
            trajectories,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Domain(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if self.trajectories.is_empty() {
            return Err(Error::Domain("a demonstration set needs at least one trajectory".into()));
        }
        for t in &self.trajectories {
            if t.is_empty() {
                return Err(Error::Domain(format!("trajectory {} is empty", t.id)));
            }
            for (j, inst) in t.instances.iter().enumerate() {
                if let ExpertAction::Discrete { action, probs } = &inst.expert_action {
                    let sum: f64 = probs.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 || *action >= probs.len() {
                        return Err(Error::Domain(format!(
                            "trajectory {} step {j}: probabilities sum to {sum}",
                            t.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn instance_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// `(trajectory index, step index, instance)` in trajectory-then-step order.
    pub fn instances(&self) -> impl Iterator<Item = (usize, usize, &DemoInstance)> {
        self.trajectories
            .iter()
            .enumerate()
            .flat_map(|(i, t)| t.instances.iter().enumerate().map(move |(j, inst)| (i, j, inst)))
    }

    pub fn noisy_trajectory_count(&self) -> usize {
        self.trajectories.iter().filter(|t| t.is_noisy()).count()
    }
}

/// How the demonstrator picks executed actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    #[default]
    Stochastic,
    Greedy,
}

/// Rolls out `count` full episodes of `policy`.
pub fn generate_demos(
    policy: &MlpParams,
    env: &mut dyn Environment,
    count: usize,
    seed: u64,
    gamma: f64,
    sampling: Sampling,
) -> Result<DemoSet> {
    if count == 0 {
        return Err(Error::Domain("a demonstration set needs at least one trajectory".into()));
    }
    let spec = env.spec().clone();
    policy::check_compatible(policy, spec.obs_dim, &spec.action_space)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trajectories = (0..count)
        .map(|k| {
            let episode_seed = rng.random();
            let instances = rollout_episode(policy, env, episode_seed, &mut rng, sampling, None, false)?;
            Ok(Trajectory {
                id: format!("traj-{k:03}"),
                instances,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DemoSet::new(spec.id, gamma, trajectories)
}

fn rollout_episode(
    policy: &MlpParams,
    env: &mut dyn Environment,
    episode_seed: u64,
    rng: &mut ChaCha8Rng,
    sampling: Sampling,
    epsilon: Option<f64>,
    noisy: bool,
) -> Result<Vec<DemoInstance>> {
    let space = env.spec().action_space.clone();
    let mut obs = env.reset(episode_seed);
    let mut out = Vec::new();
    loop {
        let mut dist = policy::distribution(policy, &obs)?;
        let mut action = match sampling {
            Sampling::Stochastic => dist.sample(rng),
            Sampling::Greedy => dist.mode(),
        };
        if let Some(eps) = epsilon {
            let u: f64 = rng.random();
            let random = random_action(&space, rng);
            if u < eps {
                action = random;
            }
            if let ActionDist::Categorical(p) = &mut dist {
                let n = p.len() as f64;
                p.iter_mut().for_each(|v| *v = (1.0 - eps) * *v + eps / n);
            }
        }
        let expert_action = match (&action, &dist) {
            (Action::Discrete(a), ActionDist::Categorical(p)) => ExpertAction::Discrete {
                action: *a,
                probs: normalized(p),
            },
            (Action::Continuous(v), _) => ExpertAction::Continuous(v.clone()),
            _ => return Err(Error::Domain("policy and action space disagree".into())),
        };
        let step = env.step(&action)?;
        out.push(DemoInstance {
            state: std::mem::replace(&mut obs, step.observation),
            expert_action,
            reward: step.reward,
            is_noisy: noisy,
        });
        if step.done {
            return Ok(out);
        }
    }
}

fn normalized(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    p.iter().map(|v| v / s).collect()
}

fn random_action<R: Rng + ?Sized>(space: &ActionSpace, rng: &mut R) -> Action {
    match space {
        ActionSpace::Discrete(n) => Action::Discrete(rng.random_range(0..*n)),
        ActionSpace::Continuous { low, high } => Action::Continuous(
            low.iter()
                .zip(high)
                .map(|(l, h)| rng.random_range(*l..*h))
                .collect(),
        ),
    }
}

/// Source of noisy demonstrations.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    /// Regenerate the trajectory with an early-training checkpoint.
    ImmatureAgent(MlpParams),
    /// Regenerate with the given demonstrator, replacing each action by a
    /// uniformly random one with probability `epsilon`.
    EpsilonRandom { demonstrator: MlpParams, epsilon: f64 },
}

/// Replaces `round(noise_ratio * m)` randomly chosen trajectories with noisy
/// rollouts and flags their instances.
pub fn corrupt(
    demos: &DemoSet,
    noise_ratio: f64,
    model: &NoiseModel,
    env: &mut dyn Environment,
    seed: u64,
) -> Result<DemoSet> {
    if !(0.0..=1.0).contains(&noise_ratio) {
        return Err(Error::Domain(format!("noise ratio {noise_ratio} outside [0, 1]")));
    }
    if env.spec().id != demos.env_id {
        return Err(Error::Domain(format!(
            "demonstrations are for {} but the environment is {}",
            demos.env_id,
            env.spec().id
        )));
    }
    let m = demos.len();
    let k = (noise_ratio * m as f64).round() as usize;
    let mut out = demos.clone();
    if k == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    let spec = env.spec().clone();
    for idx in chosen {
        let episode_seed = rng.random();
        let instances = match model {
            NoiseModel::ImmatureAgent(policy) => {
                policy::check_compatible(policy, spec.obs_dim, &spec.action_space)?;
                rollout_episode(policy, env, episode_seed, &mut rng, Sampling::Stochastic, None, true)?
            }
            NoiseModel::EpsilonRandom { demonstrator, epsilon } => {
                if !(0.0..=1.0).contains(epsilon) {
                    return Err(Error::Domain(format!("epsilon {epsilon} outside [0, 1]")));
                }
                policy::check_compatible(demonstrator, spec.obs_dim, &spec.action_space)?;
                rollout_episode(
                    demonstrator,
                    env,
                    episode_seed,
                    &mut rng,
                    Sampling::Stochastic,
                    Some(*epsilon),
                    true,
                )?
            }
        };
        out.trajectories[idx].instances = instances;
    }
    Ok(out)
}

/// Discounted return-to-go from step `j` (0-based): `sum_{k>=j} gamma^(k-j) r_k`.
pub fn mc_return(traj: &Trajectory, j: usize, gamma: f64) -> Result<f64> {
    if j >= traj.len() {
        return Err(Error::Domain(format!(
            "step index {j} out of range for trajectory {} of length {}",
            traj.id,
            traj.len()
        )));
    }
    let mut discount = 1.0;
    let mut total = 0.0;
    for inst in &traj.instances[j..] {
        total += discount * inst.reward;
        discount *= gamma;
    }
    Ok(total)
}

/// [`mc_return`] for every step, computed in one backward pass.
pub fn returns_to_go(traj: &Trajectory, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; traj.len()];
    let mut acc = 0.0;
    for (slot, inst) in out.iter_mut().zip(&traj.instances).rev() {
        acc = inst.reward + gamma * acc;
        *slot = acc;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoStats {
    pub mean_return: f64,
    pub per_trajectory: Vec<f64>,
}

/// Mean undiscounted return over trajectories.
pub fn demoset_stats(demos: &DemoSet) -> DemoStats {
    let per_trajectory: Vec<f64> = demos.trajectories.iter().map(Trajectory::total_reward).collect();
    let mean_return = per_trajectory.iter().sum::<f64>() / per_trajectory.len().max(1) as f64;
    DemoStats {
        mean_return,
        per_trajectory,
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    format_version: u32,
    env_id: String,
    gamma: f64,
}

pub fn save(demos: &DemoSet, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = Header {
        format: FORMAT_NAME.into(),
        format_version: FORMAT_VERSION,
        env_id: demos.env_id.clone(),
        gamma: demos.gamma,
    };
    let write = |w: &mut BufWriter<fs::File>, line: String| {
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))
    };
    write(&mut w, serde_json::to_string(&header).expect("header serializes"))?;
    for t in &demos.trajectories {
        write(&mut w, serde_json::to_string(t).expect("trajectory serializes"))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<DemoSet> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines();
    let header_line = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err(1, "empty file, expected a header line".into())),
    };
    let header: Header =
        serde_json::from_str(&header_line).map_err(|e| parse_err(1, format!("bad header: {e}")))?;
    if header.format != FORMAT_NAME {
        return Err(parse_err(1, format!("unknown format '{}'", header.format)));
    }
    if header.format_version != FORMAT_VERSION {
        return Err(parse_err(
            1,
            format!(
                "unsupported format_version {} (this build reads version {FORMAT_VERSION})",
                header.format_version
            ),
        ));
    }
    let mut trajectories = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory =
            serde_json::from_str(&line).map_err(|e| parse_err(k + 2, e.to_string()))?;
        trajectories.push(t);
    }
    DemoSet::new(header.env_id, header.gamma, trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn traj(rewards: &[f64]) -> Trajectory {
        Trajectory {
            id: "t".into(),
            instances: rewards
                .iter()
                .map(|&r| DemoInstance {
                    state: vec![0.0],
                    expert_action: ExpertAction::Discrete {
                        action: 0,
                        probs: vec![1.0, 0.0],
                    },
                    reward: r,
                    is_noisy: false,
                })
                .collect(),
        }
    }

    #[test]
    fn mc_return_small_cases() {
        let t = traj(&[1.0, 1.0, 1.0]);
        assert!((mc_return(&t, 0, 0.9).unwrap() - 2.71).abs() < 1e-12);
        assert_eq!(mc_return(&t, 2, 0.9).unwrap(), 1.0);
        assert!(matches!(mc_return(&t, 3, 0.9), Err(Error::Domain(_))));
    }

    #[test]
    fn stats_means() {
        let set = DemoSet::new("x", 0.9, vec![traj(&[1.0, 2.0])]).unwrap();
        assert_eq!(demoset_stats(&set).mean_return, 3.0);
        let set = DemoSet::new("x", 0.9, vec![traj(&[2.0]), traj(&[1.0, 3.0])]).unwrap();
        let s = demoset_stats(&set);
        assert_eq!(s.mean_return, 3.0);
        assert_eq!(s.per_trajectory, vec![2.0, 4.0]);
    }

    #[test]
    fn invariants_enforced() {
        assert!(DemoSet::new("x", 0.9, vec![]).is_err());
        assert!(DemoSet::new("x", 1.0, vec![traj(&[1.0])]).is_err());
        let mut t = traj(&[1.0]);
        t.instances[0].expert_action = ExpertAction::Discrete {
            action: 0,
            probs: vec![0.5, 0.6],
        };
        assert!(DemoSet::new("x", 0.9, vec![t]).is_err());
        let empty = Trajectory { id: "e".into(), instances: vec![] };
        assert!(DemoSet::new("x", 0.9, vec![empty]).is_err());
    }
}
