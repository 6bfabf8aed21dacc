//! Demonstrator training and demonstration-file generation.

use std::fs;
use std::path::{Path, PathBuf};

use dwrl::demos::{self, DemoSet, NoiseModel, Sampling};
use dwrl::trainer::{evaluate, load_policy, save_policy, write_metrics_csv};
use dwrl::{env, Error, IterationMetrics, Mode, Result, TrainConfig, Trainer};

pub const EXPERT_FILE: &str = "expert.dwrl";
pub const IMMATURE_FILE: &str = "immature.dwrl";

#[derive(Debug, Clone)]
pub struct ExpertReport {
    pub expert_path: PathBuf,
    pub immature_path: PathBuf,
    pub metrics: Vec<IterationMetrics>,
    /// Greedy evaluation return of the final policy.
    pub expert_return: f64,
    pub immature_return: f64,
}

/// Trains an exploration-only agent and saves both the final policy and an
/// early snapshot taken after `immature_at` iterations.
pub fn train_expert(config: &TrainConfig, immature_at: usize, out_dir: &Path) -> Result<ExpertReport> {
    let mut config = config.clone();
    config.mode = Mode::RlOnly;
    config.demo_path = None;
    if immature_at >= config.iterations {
        return Err(Error::Config(format!(
            "the immature snapshot ({immature_at}) must come before the last iteration ({})",
            config.iterations
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut trainer = Trainer::with_demos(config.clone(), None)?.diagnostics_dir(out_dir);
    trainer.run_until(immature_at)?;
    let immature = trainer.policy().clone();
    let immature_path = out_dir.join(IMMATURE_FILE);
    save_policy(&immature_path, &immature, None)?;
    trainer.run()?;
    let expert_path = out_dir.join(EXPERT_FILE);
    save_policy(&expert_path, trainer.policy(), Some(trainer.value_net()))?;
    write_metrics_csv(&out_dir.join("expert_metrics.csv"), trainer.metrics())?;

    let mut e = env::make(&config.env_id)?;
    let eval_seed = config.seed ^ 0x5eed;
    let expert_return = evaluate(trainer.policy(), e.as_mut(), config.eval_episodes, eval_seed)?.mean;
    let immature_return = evaluate(&immature, e.as_mut(), config.eval_episodes, eval_seed)?.mean;
    Ok(ExpertReport {
        expert_path,
        immature_path,
        metrics: trainer.metrics().to_vec(),
        expert_return,
        immature_return,
    })
}

#[derive(Debug, Clone)]
pub struct DemoRequest<'a> {
    pub env_id: &'a str,
    pub expert: &'a Path,
    /// Required when `epsilon` is `None` and `noise_ratio > 0`.
    pub immature: Option<&'a Path>,
    /// Use epsilon-random corruption of the expert instead of the snapshot.
    pub epsilon: Option<f64>,
    pub count: usize,
    pub noise_ratio: f64,
    pub seed: u64,
    pub gamma: f64,
}

pub fn gen_demos(req: &DemoRequest<'_>) -> Result<DemoSet> {
    let expert = load_policy(req.expert)?;
    let mut e = env::make(req.env_id)?;
    let clean = demos::generate_demos(&expert, e.as_mut(), req.count, req.seed, req.gamma, Sampling::Stochastic)?;
    if req.noise_ratio == 0.0 {
        return demos::corrupt(&clean, 0.0, &NoiseModel::ImmatureAgent(expert), e.as_mut(), 0);
    }
    let model = match (req.epsilon, req.immature) {
        (Some(epsilon), _) => NoiseModel::EpsilonRandom { demonstrator: expert, epsilon },
        (None, Some(path)) => NoiseModel::ImmatureAgent(load_policy(path)?),
        (None, None) => {
            return Err(Error::Config(
                "noisy demonstrations need an immature checkpoint (--immature) or --epsilon".into(),
            ))
        }
    };
    demos::corrupt(&clean, req.noise_ratio, &model, e.as_mut(), req.seed.wrapping_add(1))
}
