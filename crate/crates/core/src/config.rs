//! Training configuration and its flat `key = value` text form.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy_opt::{Explorer, LossConfig};
use crate::weighting::WeightForm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Policy-gradient exploration only.
    RlOnly,
    /// Imitation of the demonstrations only, with no environment interaction.
    IlOnly,
    /// Imitation for `pretrain_iters` iterations, then exploration only.
    Lba { pretrain_iters: usize },
    /// Joint objective with every instance weighted 1.
    LfndNoW,
    /// Joint objective with adaptive instance weights.
    Lfnd,
}

impl Mode {
    pub fn needs_demos(&self) -> bool {
        !matches!(self, Mode::RlOnly)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Mode::RlOnly => "rl-only",
            Mode::IlOnly => "il-only",
            Mode::Lba { .. } => "lba",
            Mode::LfndNoW => "lfnd-now",
            Mode::Lfnd => "lfnd",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "rl-only" | "rl" | "ppo" | "trpo" => Ok(Mode::RlOnly),
            "il-only" | "il" => Ok(Mode::IlOnly),
            "lba" => Ok(Mode::Lba {
                pretrain_iters: TrainConfig::DEFAULT_LBA_PRETRAIN,
            }),
            "lfnd-now" => Ok(Mode::LfndNoW),
            "lfnd" => Ok(Mode::Lfnd),
            other => Err(Error::Config(format!(
                "unknown mode '{other}', expected rl-only, il-only, lba, lfnd-now or lfnd"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub env_id: String,
    pub mode: Mode,
    pub weight_form: WeightForm,
    pub loss: LossConfig,
    pub iterations: usize,
    pub steps_per_iteration: usize,
    pub seed: u64,
    pub demo_path: Option<PathBuf>,
    pub eval_episodes: usize,
    pub hidden: Vec<usize>,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub value_epochs: usize,
    pub max_grad_norm: Option<f64>,
    /// Demonstration instances per optimizer step; `None` uses all of them.
    pub demo_minibatch: Option<usize>,
    pub rollout_workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_env("gridworld8")
    }
}

impl TrainConfig {
    pub const DEFAULT_LBA_PRETRAIN: usize = 50;

    /// Defaults for an environment id.
    pub fn for_env(env_id: &str) -> Self {
        let steps = if env_id == "pointmass" { 1024 } else { 2048 };
        TrainConfig {
            env_id: env_id.to_string(),
            mode: Mode::Lfnd,
            weight_form: WeightForm::default(),
            loss: LossConfig::default(),
            iterations: 500,
            steps_per_iteration: steps,
            seed: 0,
            demo_path: None,
            eval_episodes: 10,
            hidden: vec![64, 64],
            policy_lr: 3e-4,
            value_lr: 1e-3,
            epochs: 4,
            minibatch_size: 256,
            value_epochs: 4,
            max_grad_norm: Some(0.5),
            demo_minibatch: None,
            rollout_workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        crate::env::make(&self.env_id)?;
        self.loss.validate()?;
        if self.iterations == 0 {
            return bad("iterations must be > 0".into());
        }
        if self.steps_per_iteration == 0 || self.minibatch_size == 0 || self.epochs == 0 {
            return bad("steps_per_iteration, minibatch_size and epochs must be > 0".into());
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be >= 1".into());
        }
        if self.mode.needs_demos() && self.demo_path.is_none() {
            return bad(format!("mode {} requires a demonstration file", self.mode));
        }
        if !(self.policy_lr > 0.0 && self.value_lr > 0.0) {
            return bad("learning rates must be > 0".into());
        }
        if self.rollout_workers == 0 || self.rollout_workers > self.steps_per_iteration {
            return bad("rollout_workers must be in 1..=steps_per_iteration".into());
        }
        if let WeightForm::Linear { delta } = self.weight_form {
            WeightForm::linear(delta).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Sets one field from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let num = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: expected a number, got '{v}'")))
        };
        let int = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: expected an integer, got '{v}'")))
        };
        let boolean = |v: &str| -> Result<bool> {
            match v {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(Error::Config(format!("{key}: expected a boolean, got '{v}'"))),
            }
        };
        let optional = |v: &str| matches!(v, "" | "none" | "off");
        match key.trim() {
            "env" | "env_id" => self.env_id = v.to_string(),
            "mode" => {
                let pretrain = match self.mode {
                    Mode::Lba { pretrain_iters } => pretrain_iters,
                    _ => Self::DEFAULT_LBA_PRETRAIN,
                };
                self.mode = v.parse()?;
                if let Mode::Lba { pretrain_iters } = &mut self.mode {
                    *pretrain_iters = pretrain;
                }
            }
            "lba_pretrain_iters" | "pretrain_iters" => {
                let n = int(v)?;
                if let Mode::Lba { pretrain_iters } = &mut self.mode {
                    *pretrain_iters = n;
                } else {
                    self.mode = Mode::Lba { pretrain_iters: n };
                }
            }
            "weight_form" => self.weight_form = v.parse()?,
            "lambda" | "lambda_tradeoff" => self.loss.lambda_tradeoff = num(v)?,
            "gamma" => self.loss.gamma = num(v)?,
            "gae_lambda" => self.loss.gae_lambda = num(v)?,
            "standardize_advantages" => self.loss.standardize_advantages = boolean(v)?,
            "explorer" => {
                self.loss.explorer = match v {
                    "ppo" => Explorer::Ppo { epsilon: 0.2 },
                    "trpo" | "trpo-penalty" => Explorer::TrpoPenalty { beta: 0.01 },
                    other => return Err(Error::Config(format!("unknown explorer '{other}'"))),
                }
            }
            "epsilon" => self.loss.explorer = Explorer::Ppo { epsilon: num(v)? },
            "beta" => self.loss.explorer = Explorer::TrpoPenalty { beta: num(v)? },
            "iterations" => self.iterations = int(v)?,
            "steps_per_iteration" => self.steps_per_iteration = int(v)?,
            "seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| Error::Config(format!("seed: expected an integer, got '{v}'")))?
            }
            "demo_path" | "demos" => {
                self.demo_path = if optional(v) { None } else { Some(PathBuf::from(v)) }
            }
            "eval_episodes" => self.eval_episodes = int(v)?,
            "hidden" => {
                self.hidden = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| int(s.trim()))
                    .collect::<Result<_>>()?
            }
            "policy_lr" => self.policy_lr = num(v)?,
            "value_lr" => self.value_lr = num(v)?,
            "epochs" => self.epochs = int(v)?,
            "minibatch_size" => self.minibatch_size = int(v)?,
            "value_epochs" => self.value_epochs = int(v)?,
            "max_grad_norm" => {
                self.max_grad_norm = if optional(v) { None } else { Some(num(v)?) }
            }
            "demo_minibatch" => {
                self.demo_minibatch = if optional(v) { None } else { Some(int(v)?) }
            }
            "rollout_workers" => self.rollout_workers = int(v)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Renders every field as `key = value` lines accepted by [`apply_text`](Self::apply_text).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("env", self.env_id.clone());
        kv("mode", self.mode.to_string());
        if let Mode::Lba { pretrain_iters } = self.mode {
            kv("lba_pretrain_iters", pretrain_iters.to_string());
        }
        kv("weight_form", self.weight_form.to_string());
        kv("lambda", self.loss.lambda_tradeoff.to_string());
        kv("gamma", self.loss.gamma.to_string());
        kv("gae_lambda", self.loss.gae_lambda.to_string());
        kv("standardize_advantages", self.loss.standardize_advantages.to_string());
        match self.loss.explorer {
            Explorer::Ppo { epsilon } => kv("epsilon", epsilon.to_string()),
            Explorer::TrpoPenalty { beta } => kv("beta", beta.to_string()),
        }
        kv("iterations", self.iterations.to_string());
        kv("steps_per_iteration", self.steps_per_iteration.to_string());
        kv("seed", self.seed.to_string());
        kv(
            "demo_path",
            self.demo_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "none".into()),
        );
        kv("eval_episodes", self.eval_episodes.to_string());
        kv(
            "hidden",
            self.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","),
        );
        kv("policy_lr", self.policy_lr.to_string());
        kv("value_lr", self.value_lr.to_string());
        kv("epochs", self.epochs.to_string());
        kv("minibatch_size", self.minibatch_size.to_string());
        kv("value_epochs", self.value_epochs.to_string());
        kv(
            "max_grad_norm",
            self.max_grad_norm.map(|v| v.to_string()).unwrap_or_else(|| "none".into()),
        );
        kv(
            "demo_minibatch",
            self.demo_minibatch.map(|v| v.to_string()).unwrap_or_else(|| "none".into()),
        );
        kv("rollout_workers", self.rollout_workers.to_string());
        out
    }
}
