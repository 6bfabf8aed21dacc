//! Experiment manifests: flat `key = value` files naming the experiment
//! kind, seeds and output directory. Any key not listed on [`Manifest`] is
//! forwarded to the shared [`TrainConfig`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dwrl::{Error, Result, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Compare,
    NoiseSweep,
    WeightGroups,
    WeightForms,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Compare => "compare",
            ExperimentKind::NoiseSweep => "sweep-noise",
            ExperimentKind::WeightGroups => "weight-groups",
            ExperimentKind::WeightForms => "weight-forms",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "compare" => Ok(ExperimentKind::Compare),
            "sweep-noise" | "noise-sweep" => Ok(ExperimentKind::NoiseSweep),
            "weight-groups" => Ok(ExperimentKind::WeightGroups),
            "weight-forms" => Ok(ExperimentKind::WeightForms),
            other => Err(Error::Config(format!("unknown experiment kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSource {
    Immature,
    EpsilonRandom(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Shared training configuration; `base.env_id` is the environment.
    pub base: TrainConfig,
    pub demos: Option<PathBuf>,
    pub expert: Option<PathBuf>,
    pub immature: Option<PathBuf>,
    pub demo_count: usize,
    pub demo_seed: u64,
    pub demo_gamma: f64,
    pub noise_source: NoiseSource,
    pub ratios: Vec<f64>,
    /// Baselines for the noise sweep, by mode label.
    pub baselines: Vec<String>,
    /// Existing weight dump for the weight-groups analysis.
    pub weights: Option<PathBuf>,
    pub groups: usize,
    /// Iterations of each per-group imitation run (defaults to `iterations`).
    pub group_iterations: Option<usize>,
    pub dump_weights: bool,
}

pub fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    let v = v.trim();
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| Error::Config(format!("bad seed range '{v}'")))?;
        let b: u64 = b.trim().parse().map_err(|_| Error::Config(format!("bad seed range '{v}'")))?;
        if b <= a {
            return Err(Error::Config(format!("empty seed range '{v}'")));
        }
        return Ok((a..b).collect());
    }
    let seeds: Vec<u64> = v
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad seed '{s}'"))))
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    Ok(seeds)
}

fn parse_list_f64(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad number '{s}'"))))
        .collect()
}

impl Manifest {
    pub fn new(kind: ExperimentKind, env_id: &str) -> Self {
        Manifest {
            kind,
            seeds: (0..5).collect(),
            out_dir: PathBuf::from(format!("results/{kind}")),
            base: TrainConfig::for_env(env_id),
            demos: None,
            expert: None,
            immature: None,
            demo_count: 10,
            demo_seed: 0,
            demo_gamma: 0.99,
            noise_source: NoiseSource::Immature,
            ratios: (0..=10).map(|k| k as f64 / 10.0).collect(),
            baselines: vec!["rl-only".into(), "il-only".into(), "lba".into(), "lfnd-now".into()],
            weights: None,
            groups: 10,
            group_iterations: None,
            dump_weights: false,
        }
    }

    pub fn env_id(&self) -> &str {
        &self.base.env_id
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let path = || PathBuf::from(v);
        match key.trim() {
            "kind" => self.kind = v.parse()?,
            "env" | "env_id" => {
                let keep = self.base.clone();
                self.base = TrainConfig::for_env(v);
                self.base.mode = keep.mode;
                self.base.seed = keep.seed;
            }
            "seeds" => self.seeds = parse_seeds(v)?,
            "out" | "out_dir" => self.out_dir = path(),
            "demos" | "demo_path" => self.demos = Some(path()),
            "expert" => self.expert = Some(path()),
            "immature" => self.immature = Some(path()),
            "demo_count" => {
                self.demo_count = v.parse().map_err(|_| Error::Config(format!("bad demo_count '{v}'")))?
            }
            "demo_seed" => {
                self.demo_seed = v.parse().map_err(|_| Error::Config(format!("bad demo_seed '{v}'")))?
            }
            "demo_gamma" => {
                self.demo_gamma = v.parse().map_err(|_| Error::Config(format!("bad demo_gamma '{v}'")))?
            }
            "noise_model" => {
                self.noise_source = match v.split_once(':') {
                    None if v == "immature" => NoiseSource::Immature,
                    Some(("epsilon", e)) => NoiseSource::EpsilonRandom(
                        e.parse().map_err(|_| Error::Config(format!("bad epsilon in '{v}'")))?,
                    ),
                    _ => {
                        return Err(Error::Config(format!(
                            "noise_model must be 'immature' or 'epsilon:<p>', got '{v}'"
                        )))
                    }
                }
            }
            "ratios" => self.ratios = parse_list_f64(v)?,
            "baselines" => {
                self.baselines = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            }
            "weights" => self.weights = Some(path()),
            "groups" => self.groups = v.parse().map_err(|_| Error::Config(format!("bad groups '{v}'")))?,
            "group_iterations" => {
                self.group_iterations =
                    Some(v.parse().map_err(|_| Error::Config(format!("bad group_iterations '{v}'")))?)
            }
            "dump_weights" => self.dump_weights = matches!(v, "true" | "1" | "yes" | "on"),
            other => self.base.set(other, v)?,
        }
        Ok(())
    }

    /// Parses manifest text. The `env` key is applied first so environment
    /// defaults never overwrite explicit settings.
    pub fn parse(text: &str, kind: Option<ExperimentKind>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            pairs.push((n + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let env = pairs
            .iter()
            .find(|(_, k, _)| k == "env" || k == "env_id")
            .map(|(_, _, v)| v.clone())
            .unwrap_or_else(|| "gridworld8".into());
        let declared = pairs.iter().find(|(_, k, _)| k == "kind").map(|(_, _, v)| v.parse()).transpose()?;
        let kind = kind.or(declared).unwrap_or(ExperimentKind::Compare);
        let mut m = Manifest::new(kind, &env);
        for (line, k, v) in pairs {
            if k == "env" || k == "env_id" || k == "kind" {
                continue;
            }
            m.set(&k, &v).map_err(|e| Error::Config(format!("line {line}: {e}")))?;
        }
        Ok(m)
    }

    pub fn from_file(path: &Path, kind: Option<ExperimentKind>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text, kind).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("a manifest needs at least one seed".into()));
        }
        if self.groups == 0 {
            return Err(Error::Config("groups must be >= 1".into()));
        }
        if self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config("noise ratios must lie in [0, 1]".into()));
        }
        let mut probe = self.base.clone();
        probe.mode = dwrl::Mode::RlOnly;
        probe.validate()
    }
}
