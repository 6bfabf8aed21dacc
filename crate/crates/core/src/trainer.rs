//! The outer training loop and the baseline modes.
//!
//! Each iteration:
//! 1. collects `steps_per_iteration` environment steps with the current
//!    policy (skipped for imitation-only phases),
//! 2. computes advantages and, in [`Mode::Lfnd`], fresh instance weights
//!    from the current value network,
//! 3. runs `epochs` passes of minibatch updates on the joint loss,
//! 4. refits the value network and evaluates the greedy policy.
//!
//! Every random stream is derived from `(seed, stream, iteration)`, so a run
//! restored from a checkpoint continues exactly as the uninterrupted run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Container;
use crate::config::{Mode, TrainConfig};
use crate::demos::{self, DemoSet};
use crate::env::{self, ActionSpace, Environment};
use crate::error::{Error, Result};
use crate::nn::{optimizer_step, AdamState, Head, MlpParams, MlpSpec};
use crate::policy;
use crate::policy_opt::{
    compute_advantages, demo_loss_subset, joint_loss, ppo_loss, trpo_penalty_loss,
    update_value_net, Explorer, LossOutput, RolloutBatch, Transition, ValueFitConfig,
};
use crate::weighting::{append_weight_csv, weigh_demoset, WeightRecord};

pub const METRICS_CSV_HEADER: &str =
    "iteration,mean_episode_return,loss_demo,loss_explore,mean_weight,fraction_zero_weight,wall_ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub mean_episode_return: f64,
    pub loss_demo: f64,
    pub loss_explore: f64,
    pub mean_weight: f64,
    pub fraction_zero_weight: f64,
    pub wall_ms: u64,
}

impl IterationMetrics {
    /// Equality on everything except wall-clock time.
    pub fn same_trace(&self, other: &IterationMetrics) -> bool {
        self.iteration == other.iteration
            && self.mean_episode_return.to_bits() == other.mean_episode_return.to_bits()
            && self.loss_demo.to_bits() == other.loss_demo.to_bits()
            && self.loss_explore.to_bits() == other.loss_explore.to_bits()
            && self.mean_weight.to_bits() == other.mean_weight.to_bits()
            && self.fraction_zero_weight.to_bits() == other.fraction_zero_weight.to_bits()
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iteration,
            self.mean_episode_return,
            self.loss_demo,
            self.loss_explore,
            self.mean_weight,
            self.fraction_zero_weight,
            self.wall_ms
        )
    }
}

/// True when two traces agree on every deterministic field.
pub fn same_traces(a: &[IterationMetrics], b: &[IterationMetrics]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_trace(y))
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Init = 1,
    Rollout = 2,
    Shuffle = 3,
    Eval = 4,
    DemoSample = 5,
    Value = 6,
}

/// SplitMix64 finalizer over the run seed, a stream tag and an index.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED69));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng_for(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream as u64, index))
}

/// Architecture of the policy network for an environment.
pub fn policy_spec(obs_dim: usize, space: &ActionSpace, hidden: &[usize]) -> MlpSpec {
    let head = match space {
        ActionSpace::Discrete(_) => Head::Softmax,
        ActionSpace::Continuous { .. } => Head::GaussianMeanLogStd,
    };
    MlpSpec::new(obs_dim, hidden, space.dim(), head)
}

pub fn value_spec(obs_dim: usize, hidden: &[usize]) -> MlpSpec {
    MlpSpec::new(obs_dim, hidden, 1, Head::Linear)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub mean: f64,
    pub std: f64,
}

/// Greedy-action evaluation over `episodes` episodes seeded from `seed`.
pub fn evaluate(
    policy: &MlpParams,
    env: &mut dyn Environment,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::Domain("evaluation needs at least one episode".into()));
    }
    let spec = env.spec().clone();
    policy::check_compatible(policy, spec.obs_dim, &spec.action_space)?;
    let mut returns = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let mut obs = env.reset(derive_seed(seed, Stream::Eval as u64, k as u64));
        let mut total = 0.0;
        loop {
            let action = policy::distribution(policy, &obs)?.mode();
            let step = env.step(&action)?;
            total += step.reward;
            obs = step.observation;
            if step.done {
                break;
            }
        }
        returns.push(total);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(EvalSummary { mean, std })
}

/// Collects `steps` transitions with a stochastic policy, resetting with
/// fresh seeds whenever an episode ends.
fn collect_segment(
    policy: &MlpParams,
    env: &mut dyn Environment,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Transition>> {
    let mut out = Vec::with_capacity(steps);
    let mut obs = env.reset(rng.random());
    for k in 0..steps {
        let dist = policy::distribution(policy, &obs)?;
        let action = dist.sample(rng);
        let log_prob = dist.log_prob(&action)?;
        let step = env.step(&action)?;
        let last = k + 1 == steps;
        out.push(Transition {
            state: obs,
            action,
            log_prob,
            old_dist: dist,
            reward: step.reward,
            next_state: step.observation.clone(),
            done: step.done,
            truncated: last && !step.done,
        });
        obs = if step.done && !last {
            env.reset(rng.random())
        } else {
            step.observation
        };
    }
    Ok(out)
}

pub struct TrainOutcome {
    pub policy: MlpParams,
    pub value: MlpParams,
    pub metrics: Vec<IterationMetrics>,
}

/// Runs a full training job described by `config`.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone())?;
    trainer.run()?;
    Ok(trainer.into_outcome())
}

pub struct Trainer {
    config: TrainConfig,
    env: Box<dyn Environment>,
    demos: Option<DemoSet>,
    fixed_weights: Option<Vec<f64>>,
    policy: MlpParams,
    value: MlpParams,
    policy_opt: AdamState,
    value_opt: AdamState,
    iteration: usize,
    env_steps: u64,
    metrics: Vec<IterationMetrics>,
    last_weights: Option<Vec<WeightRecord>>,
    weight_dump: Option<PathBuf>,
    metrics_csv: Option<PathBuf>,
    diagnostics_dir: Option<PathBuf>,
}

impl Trainer {
    /// Builds a trainer, loading demonstrations from `config.demo_path` when
    /// the mode uses them.
    pub fn new(config: TrainConfig) -> Result<Self> {
        let demos = match (&config.demo_path, config.mode.needs_demos()) {
            (Some(p), true) => Some(demos::load(p)?),
            _ => None,
        };
        Self::with_demos(config, demos)
    }

    /// Builds a trainer around an in-memory demonstration set.
    pub fn with_demos(config: TrainConfig, demos: Option<DemoSet>) -> Result<Self> {
        let mut check = config.clone();
        if check.demo_path.is_none() && demos.is_some() {
            check.demo_path = Some(PathBuf::from("<memory>"));
        }
        check.validate()?;
        let env = env::make(&config.env_id)?;
        let spec = env.spec().clone();
        if config.mode.needs_demos() {
            let d = demos
                .as_ref()
                .ok_or_else(|| Error::Config(format!("mode {} requires demonstrations", config.mode)))?;
            if d.env_id != config.env_id {
                return Err(Error::Domain(format!(
                    "demonstrations were recorded on {} but training runs on {}",
                    d.env_id, config.env_id
                )));
            }
            let state_dim = d.trajectories[0].instances[0].state.len();
            if state_dim != spec.obs_dim {
                return Err(Error::Domain(format!(
                    "demonstration states have {state_dim} entries, {} expects {}",
                    spec.id, spec.obs_dim
                )));
            }
        }
        let mut init = rng_for(config.seed, Stream::Init, 0);
        let policy = MlpParams::init(
            &policy_spec(spec.obs_dim, &spec.action_space, &config.hidden),
            &mut init,
        );
        let value = MlpParams::init(&value_spec(spec.obs_dim, &config.hidden), &mut init);
        Ok(Trainer {
            policy_opt: AdamState::new(&policy),
            value_opt: AdamState::new(&value),
            policy,
            value,
            env,
            demos,
            fixed_weights: None,
            config,
            iteration: 0,
            env_steps: 0,
            metrics: Vec::new(),
            last_weights: None,
            weight_dump: None,
            metrics_csv: None,
            diagnostics_dir: None,
        })
    }

    /// Replaces the unit weights used by imitation phases with a fixed
    /// per-instance vector (in [`DemoSet::instances`] order).
    pub fn with_fixed_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        let n = self.demos.as_ref().map(DemoSet::instance_count).unwrap_or(0);
        if weights.len() != n {
            return Err(Error::Domain(format!(
                "{} fixed weights for {n} demonstration instances",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain("fixed weights must be finite and >= 0".into()));
        }
        self.fixed_weights = Some(weights);
        Ok(self)
    }

    /// Appends every iteration's weight records to a CSV.
    pub fn dump_weights_to(mut self, path: impl Into<PathBuf>) -> Self {
        self.weight_dump = Some(path.into());
        self
    }

    /// Appends every iteration's metrics to a CSV.
    pub fn metrics_csv(mut self, path: impl Into<PathBuf>) -> Self {
        self.metrics_csv = Some(path.into());
        self
    }

    /// Directory for the checkpoint written when a loss goes non-finite.
    pub fn diagnostics_dir(mut self, path: impl Into<PathBuf>) -> Self {
        self.diagnostics_dir = Some(path.into());
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn policy(&self) -> &MlpParams {
        &self.policy
    }

    pub fn value_net(&self) -> &MlpParams {
        &self.value
    }

    pub fn policy_mut(&mut self) -> &mut MlpParams {
        &mut self.policy
    }

    pub fn metrics(&self) -> &[IterationMetrics] {
        &self.metrics
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Environment steps spent on training rollouts (evaluation excluded).
    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn demos(&self) -> Option<&DemoSet> {
        self.demos.as_ref()
    }

    pub fn last_weights(&self) -> Option<&[WeightRecord]> {
        self.last_weights.as_deref()
    }

    pub fn is_finished(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            policy: self.policy,
            value: self.value,
            metrics: self.metrics,
        }
    }

    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    /// Runs until `iteration` iterations have completed (or the budget ends).
    pub fn run_until(&mut self, iteration: usize) -> Result<()> {
        while self.iteration < iteration.min(self.config.iterations) {
            self.step()?;
        }
        Ok(())
    }

    fn phase(&self) -> (bool, bool) {
        let it = self.iteration;
        match self.config.mode {
            Mode::RlOnly => (true, false),
            Mode::IlOnly => (false, true),
            Mode::Lba { pretrain_iters } => {
                if it < pretrain_iters {
                    (false, true)
                } else {
                    (true, false)
                }
            }
            Mode::LfndNoW | Mode::Lfnd => (true, true),
        }
    }

    fn collect(&mut self) -> Result<RolloutBatch> {
        let workers = self.config.rollout_workers;
        let total = self.config.steps_per_iteration;
        let base = self.iteration as u64 * workers as u64;
        let shares: Vec<usize> = (0..workers)
            .map(|w| total / workers + usize::from(w < total % workers))
            .collect();
        let segments: Vec<Result<Vec<Transition>>> = if workers == 1 {
            let mut rng = rng_for(self.config.seed, Stream::Rollout, base);
            vec![collect_segment(&self.policy, self.env.as_mut(), total, &mut rng)]
        } else {
            let policy = &self.policy;
            let seed = self.config.seed;
            let env_id = &self.config.env_id;
            std::thread::scope(|scope| {
                let handles: Vec<_> = shares
                    .iter()
                    .enumerate()
                    .map(|(w, &n)| {
                        scope.spawn(move || {
                            let mut env = env::make(env_id)?;
                            let mut rng = rng_for(seed, Stream::Rollout, base + w as u64);
                            collect_segment(policy, env.as_mut(), n, &mut rng)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("rollout worker panicked"))
                    .collect()
            })
        };
        let mut transitions = Vec::with_capacity(total);
        for s in segments {
            transitions.extend(s?);
        }
        self.env_steps += transitions.len() as u64;
        Ok(RolloutBatch::new(transitions))
    }

    fn demo_weights(&mut self) -> Result<Vec<f64>> {
        let demos = self.demos.as_ref().expect("demo phase without demonstrations");
        match self.config.mode {
            Mode::Lfnd => {
                let records =
                    weigh_demoset(demos, &self.value, self.config.weight_form, self.iteration + 1)?;
                if let Some(path) = &self.weight_dump {
                    append_weight_csv(path, &records)?;
                }
                let w = records.iter().map(|r| r.weight).collect();
                self.last_weights = Some(records);
                Ok(w)
            }
            _ => Ok(self
                .fixed_weights
                .clone()
                .unwrap_or_else(|| vec![1.0; demos.instance_count()])),
        }
    }

    fn explore_loss(&self, batch: &RolloutBatch, idx: &[usize]) -> Result<LossOutput> {
        match self.config.loss.explorer {
            Explorer::Ppo { epsilon } => ppo_loss(batch, &self.policy, epsilon, Some(idx)),
            Explorer::TrpoPenalty { beta } => trpo_penalty_loss(batch, &self.policy, beta, Some(idx)),
        }
    }

    fn diverged(&self, what: &str, value: f64) -> Error {
        let mut detail = format!("{what} is {value} at iteration {}", self.iteration + 1);
        if let Some(dir) = &self.diagnostics_dir {
            let path = dir.join(format!("diverged-iter{}.dwrl", self.iteration + 1));
            match fs::create_dir_all(dir).and_then(|_| {
                self.to_container()
                    .write(&path)
                    .map_err(|e| std::io::Error::other(e.to_string()))
            }) {
                Ok(()) => detail.push_str(&format!("; state dumped to {}", path.display())),
                Err(e) => detail.push_str(&format!("; state dump failed: {e}")),
            }
        }
        Error::numeric("training loss", detail)
    }

    /// Runs one training iteration and records its metrics.
    pub fn step(&mut self) -> Result<&IterationMetrics> {
        if self.is_finished() {
            return Err(Error::State("iteration budget exhausted".into()));
        }
        let started = Instant::now();
        let (explore, imitate) = self.phase();
        let cfg = self.config.clone();
        let it = self.iteration as u64;

        let mut batch = if explore {
            let mut b = self.collect()?;
            compute_advantages(
                &mut b,
                &self.value,
                cfg.loss.gamma,
                cfg.loss.gae_lambda,
                cfg.loss.standardize_advantages,
            )?;
            Some(b)
        } else {
            None
        };

        let weights = if imitate { Some(self.demo_weights()?) } else { None };
        let n_demo = self.demos.as_ref().map(DemoSet::instance_count).unwrap_or(0);
        let all_demo: Vec<usize> = (0..n_demo).collect();

        let mut shuffle_rng = rng_for(cfg.seed, Stream::Shuffle, it);
        let mut demo_rng = rng_for(cfg.seed, Stream::DemoSample, it);
        let mut order: Vec<usize> = (0..cfg.steps_per_iteration).collect();
        let (mut sum_demo, mut sum_explore, mut n_updates) = (0.0, 0.0, 0usize);
        for _ in 0..cfg.epochs {
            if batch.is_some() {
                order.shuffle(&mut shuffle_rng);
            }
            for chunk in order.chunks(cfg.minibatch_size) {
                let explore_out = match &batch {
                    Some(b) => Some(self.explore_loss(b, chunk)?),
                    None => None,
                };
                let demo_out = match &weights {
                    Some(w) => {
                        let demos = self.demos.as_ref().expect("weights imply demonstrations");
                        let subset = match cfg.demo_minibatch {
                            Some(k) if k < n_demo => {
                                all_demo.choose_multiple(&mut demo_rng, k).copied().collect()
                            }
                            _ => all_demo.clone(),
                        };
                        Some(demo_loss_subset(demos, w, &self.policy, &subset)?)
                    }
                    None => None,
                };
                if let Some(d) = &demo_out {
                    if !d.value.is_finite() {
                        return Err(self.diverged("demonstration loss", d.value));
                    }
                    sum_demo += d.value;
                }
                if let Some(e) = &explore_out {
                    if !e.value.is_finite() {
                        return Err(self.diverged("exploration loss", e.value));
                    }
                    sum_explore += e.value;
                }
                let mut total = match (demo_out, explore_out) {
                    (Some(d), Some(e)) => joint_loss(&d, &e, cfg.loss.lambda_tradeoff)?,
                    (Some(d), None) => d,
                    (None, Some(e)) => e,
                    (None, None) => unreachable!("every phase optimizes something"),
                };
                if let Some(c) = cfg.max_grad_norm {
                    total.grads.clip_global_norm(c);
                }
                if let Err(e) = optimizer_step(&mut self.policy, &total.grads, &mut self.policy_opt, cfg.policy_lr) {
                    return Err(match e {
                        Error::Numeric { .. } => self.diverged("policy gradient", f64::NAN),
                        other => other,
                    });
                }
                n_updates += 1;
            }
        }

        if let Some(b) = batch.as_mut() {
            let mut value_rng = rng_for(cfg.seed, Stream::Value, it);
            update_value_net(
                &mut self.value,
                &mut self.value_opt,
                b,
                &ValueFitConfig {
                    learning_rate: cfg.value_lr,
                    epochs: cfg.value_epochs,
                    minibatch_size: cfg.minibatch_size,
                    max_grad_norm: cfg.max_grad_norm,
                },
                &mut value_rng,
            )?;
        }

        let eval_seed = derive_seed(cfg.seed, Stream::Eval as u64, it);
        let eval = evaluate(&self.policy, self.env.as_mut(), cfg.eval_episodes, eval_seed)?;

        let (mean_weight, fraction_zero_weight) = match &weights {
            Some(w) if !w.is_empty() => (
                w.iter().sum::<f64>() / w.len() as f64,
                w.iter().filter(|v| **v == 0.0).count() as f64 / w.len() as f64,
            ),
            _ => (0.0, 0.0),
        };
        let denom = n_updates.max(1) as f64;
        let m = IterationMetrics {
            iteration: self.iteration + 1,
            mean_episode_return: eval.mean,
            loss_demo: if imitate { sum_demo / denom } else { 0.0 },
            loss_explore: if explore { sum_explore / denom } else { 0.0 },
            mean_weight,
            fraction_zero_weight,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        if let Some(path) = &self.metrics_csv {
            append_metrics_csv(path, std::slice::from_ref(&m))?;
        }
        self.metrics.push(m);
        self.iteration += 1;
        Ok(self.metrics.last().expect("just pushed"))
    }

    fn to_container(&self) -> Container {
        let mut c = Container::default();
        c.put_network("policy", &self.policy);
        c.put_network("value", &self.value);
        c.put_adam("policy_opt", &self.policy_opt);
        c.put_adam("value_opt", &self.value_opt);
        c.put_meta("iteration", &self.iteration);
        c.put_meta("env_steps", &self.env_steps);
        c.put_meta("env_id", &self.config.env_id);
        c.put_meta("config", &self.config.to_text());
        c.put_meta("metrics", &self.metrics);
        c
    }

    /// Writes networks, optimizer moments and progress to a "DWRL1" file.
    pub fn checkpoint(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    /// Loads state written by [`checkpoint`](Self::checkpoint) into this
    /// trainer. Architectures must match exactly.
    pub fn restore(&mut self, path: &Path) -> Result<()> {
        let c = Container::read(path)?;
        let mut policy = self.policy.clone();
        let mut value = self.value.clone();
        c.fill("policy", &mut policy)?;
        c.fill("value", &mut value)?;
        let policy_opt = c.adam("policy_opt", &policy)?;
        let value_opt = c.adam("value_opt", &value)?;
        self.iteration = c.meta("iteration")?;
        self.env_steps = c.meta("env_steps")?;
        self.metrics = c.meta("metrics")?;
        self.policy = policy;
        self.value = value;
        self.policy_opt = policy_opt;
        self.value_opt = value_opt;
        Ok(())
    }
}

/// Reads only the policy network from a trainer checkpoint.
pub fn load_policy(path: &Path) -> Result<MlpParams> {
    Container::read(path)?.network("policy")
}

/// Writes a checkpoint holding just a policy (and its value network when given).
pub fn save_policy(path: &Path, policy: &MlpParams, value: Option<&MlpParams>) -> Result<()> {
    let mut c = Container::default();
    c.put_network("policy", policy);
    if let Some(v) = value {
        c.put_network("value", v);
    }
    c.write(path)
}

pub fn append_metrics_csv(path: &Path, rows: &[IterationMetrics]) -> Result<()> {
    let fresh = !path.exists();
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut buf = String::new();
    if fresh {
        buf.push_str(METRICS_CSV_HEADER);
        buf.push('\n');
    }
    for r in rows {
        buf.push_str(&r.csv_row());
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_metrics_csv(path: &Path, rows: &[IterationMetrics]) -> Result<()> {
    if path.exists() {
        fs::remove_file(path).map_err(|e| Error::io(path, e))?;
    }
    append_metrics_csv(path, rows)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<IterationMetrics>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_CSV_HEADER => {}
        Some(h) => return Err(err(1, format!("unexpected header '{h}'"))),
        None => return Err(err(1, "empty metrics file".into())),
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let lineno = k + 2;
        if f.len() != 7 {
            return Err(err(lineno, format!("expected 7 fields, got {}", f.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| err(lineno, format!("bad number '{s}'")))
        };
        out.push(IterationMetrics {
            iteration: f[0]
                .trim()
                .parse()
                .map_err(|_| err(lineno, format!("bad iteration '{}'", f[0])))?,
            mean_episode_return: num(f[1])?,
            loss_demo: num(f[2])?,
            loss_explore: num(f[3])?,
            mean_weight: num(f[4])?,
            fraction_zero_weight: num(f[5])?,
            wall_ms: f[6]
                .trim()
                .parse()
                .map_err(|_| err(lineno, format!("bad wall_ms '{}'", f[6])))?,
        });
    }
    Ok(out)
}

/// Mean and maximum of `mean_episode_return` over a trace.
pub fn summarize_trace(metrics: &[IterationMetrics]) -> (f64, f64) {
    let n = metrics.len().max(1) as f64;
    let mean = metrics.iter().map(|m| m.mean_episode_return).sum::<f64>() / n;
    let max = metrics
        .iter()
        .map(|m| m.mean_episode_return)
        .fold(f64::NEG_INFINITY, f64::max);
    (mean, max)
}
