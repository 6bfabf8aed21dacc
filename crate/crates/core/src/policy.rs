//! Action distributions produced by policy networks.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::nn::{Head, MlpParams};
use crate::tensor::Tensor;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionDist {
    Categorical(Vec<f64>),
    /// Diagonal Gaussian.
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

impl ActionDist {
    /// Interprets one row of a head output.
    pub fn from_head_row(head: Head, row: &[f64]) -> Result<Self> {
        match head {
            Head::Softmax => Ok(ActionDist::Categorical(row.to_vec())),
            Head::GaussianMeanLogStd => {
                let n = row.len() / 2;
                Ok(ActionDist::Gaussian {
                    mean: row[..n].to_vec(),
                    log_std: row[n..].to_vec(),
                })
            }
            Head::Linear => Err(Error::Domain("a linear head is not a policy".into())),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        match self {
            ActionDist::Categorical(p) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        return Action::Discrete(i);
                    }
                }
                Action::Discrete(p.len() - 1)
            }
            ActionDist::Gaussian { mean, log_std } => Action::Continuous(
                mean.iter()
                    .zip(log_std)
                    .map(|(m, ls)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + ls.exp() * z
                    })
                    .collect(),
            ),
        }
    }

    /// Most likely action: argmax (first on ties) or the mean.
    pub fn mode(&self) -> Action {
        match self {
            ActionDist::Categorical(p) => {
                let mut best = 0;
                for (i, v) in p.iter().enumerate() {
                    if *v > p[best] {
                        best = i;
                    }
                }
                Action::Discrete(best)
            }
            ActionDist::Gaussian { mean, .. } => Action::Continuous(mean.clone()),
        }
    }

    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        match (self, action) {
            (ActionDist::Categorical(p), Action::Discrete(a)) if *a < p.len() => Ok(p[*a].ln()),
            (ActionDist::Gaussian { mean, log_std }, Action::Continuous(x))
                if x.len() == mean.len() =>
            {
                Ok(mean
                    .iter()
                    .zip(log_std)
                    .zip(x)
                    .map(|((m, ls), xi)| {
                        let z = (xi - m) / ls.exp();
                        -0.5 * z * z - ls - 0.5 * LN_2PI
                    })
                    .sum())
            }
            _ => Err(Error::Domain(format!(
                "action {action:?} does not match distribution {self:?}"
            ))),
        }
    }

    /// `KL(self || other)` in closed form.
    pub fn kl(&self, other: &ActionDist) -> Result<f64> {
        match (self, other) {
            (ActionDist::Categorical(p), ActionDist::Categorical(q)) if p.len() == q.len() => {
                Ok(p.iter()
                    .zip(q)
                    .filter(|(pi, _)| **pi > 0.0)
                    .map(|(pi, qi)| pi * (pi.ln() - qi.ln()))
                    .sum())
            }
            (
                ActionDist::Gaussian { mean: m1, log_std: s1 },
                ActionDist::Gaussian { mean: m2, log_std: s2 },
            ) if m1.len() == m2.len() => Ok(gaussian_kl(m1, s1, m2, s2)),
            _ => Err(Error::Domain("KL between incompatible distributions".into())),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            ActionDist::Categorical(p) => -p
                .iter()
                .filter(|v| **v > 0.0)
                .map(|v| v * v.ln())
                .sum::<f64>(),
            ActionDist::Gaussian { log_std, .. } => {
                log_std.iter().map(|ls| ls + 0.5 * (1.0 + LN_2PI)).sum()
            }
        }
    }
}

pub(crate) fn gaussian_kl(m1: &[f64], s1: &[f64], m2: &[f64], s2: &[f64]) -> f64 {
    let mut kl = 0.0;
    for i in 0..m1.len() {
        let v1 = (2.0 * s1[i]).exp();
        let v2 = (2.0 * s2[i]).exp();
        kl += s2[i] - s1[i] + (v1 + (m1[i] - m2[i]).powi(2)) / (2.0 * v2) - 0.5;
    }
    kl
}

/// Distributions for every row of `states`.
pub fn distributions(policy: &MlpParams, states: &Tensor) -> Result<Vec<ActionDist>> {
    let out = policy.forward(states)?;
    (0..out.rows())
        .map(|r| ActionDist::from_head_row(policy.head, out.row_slice(r)))
        .collect()
}

/// Distribution for a single observation.
pub fn distribution(policy: &MlpParams, obs: &[f64]) -> Result<ActionDist> {
    let out = policy.forward(&Tensor::row(obs))?;
    ActionDist::from_head_row(policy.head, out.data())
}

/// Checks that a policy network can act in `space`.
pub fn check_compatible(policy: &MlpParams, obs_dim: usize, space: &ActionSpace) -> Result<()> {
    let ok = match (policy.head, space) {
        (Head::Softmax, ActionSpace::Discrete(n)) => policy.raw_output_dim() == *n,
        (Head::GaussianMeanLogStd, ActionSpace::Continuous { low, .. }) => {
            policy.raw_output_dim() == low.len()
        }
        _ => false,
    };
    if !ok || policy.input_dim() != obs_dim {
        return Err(Error::Domain(format!(
            "policy ({:?} head, {} -> {}) does not match observation dim {obs_dim} / {space:?}",
            policy.head,
            policy.input_dim(),
            policy.raw_output_dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn categorical_kl_closed_form() {
        let p = ActionDist::Categorical(vec![0.5, 0.5]);
        let q = ActionDist::Categorical(vec![0.75, 0.25]);
        // Independent arithmetic.
        let expected = 0.5 * (0.5f64 / 0.75).ln() + 0.5 * (0.5f64 / 0.25).ln();
        assert!((p.kl(&q).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.1438).abs() < 1e-4);
        assert_eq!(p.kl(&p).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_kl_matches_univariate_formula() {
        let a = ActionDist::Gaussian { mean: vec![0.3], log_std: vec![-0.2] };
        let b = ActionDist::Gaussian { mean: vec![-0.1], log_std: vec![0.4] };
        let (s1, s2) = ((-0.2f64).exp(), 0.4f64.exp());
        let expected = (s2 / s1).ln() + (s1 * s1 + 0.16) / (2.0 * s2 * s2) - 0.5;
        assert!((a.kl(&b).unwrap() - expected).abs() < 1e-12);
        assert!(a.kl(&a).unwrap().abs() < 1e-15);
    }

    #[test]
    fn gaussian_log_prob_standard_normal() {
        let d = ActionDist::Gaussian { mean: vec![0.0], log_std: vec![0.0] };
        let lp = d.log_prob(&Action::Continuous(vec![1.0])).unwrap();
        assert!((lp - (-0.5 - 0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-14);
    }

    #[test]
    fn categorical_sampling_frequencies() {
        let d = ActionDist::Categorical(vec![0.2, 0.8]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 20_000;
        let ones = (0..n)
            .filter(|_| d.sample(&mut rng) == Action::Discrete(1))
            .count();
        assert!((ones as f64 / n as f64 - 0.8).abs() < 0.02);
        assert_eq!(d.mode(), Action::Discrete(1));
    }

    #[test]
    fn mismatched_action_rejected() {
        let d = ActionDist::Categorical(vec![0.5, 0.5]);
        assert!(d.log_prob(&Action::Discrete(2)).is_err());
        assert!(d.log_prob(&Action::Continuous(vec![0.0])).is_err());
    }
}
