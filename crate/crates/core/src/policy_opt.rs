//! Exploration and demonstration losses with analytic gradients.
//!
//! Every loss returns a [`LossOutput`] holding the scalar value and the
//! gradient with respect to the network parameters. Softmax gradients are
//! propagated from the logits, which keeps them exact for small
//! probabilities.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::demos::{DemoSet, ExpertAction};
use crate::env::Action;
use crate::error::{Error, Result};
use crate::nn::{optimizer_step, AdamState, ForwardCache, Gradients, Head, MlpParams};
use crate::policy::ActionDist;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    /// Log-probability of `action` under the collecting policy.
    pub log_prob: f64,
    /// Full collecting-policy distribution at `state`.
    pub old_dist: ActionDist,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Terminal: no bootstrapping past this step.
    pub done: bool,
    /// The collected segment stops here without reaching a terminal state.
    pub truncated: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
}

impl RolloutBatch {
    pub fn new(transitions: Vec<Transition>) -> Self {
        RolloutBatch {
            transitions,
            advantages: Vec::new(),
            value_targets: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn is_ready(&self) -> bool {
        !self.transitions.is_empty()
            && self.advantages.len() == self.transitions.len()
            && self.value_targets.len() == self.transitions.len()
    }

    fn require_ready(&self) -> Result<()> {
        if self.is_ready() {
            Ok(())
        } else {
            Err(Error::State(
                "advantages and value targets must be computed before evaluating a loss".into(),
            ))
        }
    }

    pub fn states(&self, idx: &[usize]) -> Result<Tensor> {
        let rows: Vec<&[f64]> = idx.iter().map(|&i| self.transitions[i].state.as_slice()).collect();
        Tensor::from_rows(&rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Explorer {
    Ppo { epsilon: f64 },
    TrpoPenalty { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_tradeoff: f64,
    pub gamma: f64,
    pub explorer: Explorer,
    pub gae_lambda: f64,
    pub standardize_advantages: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_tradeoff: 1.0,
            gamma: 0.99,
            explorer: Explorer::Ppo { epsilon: 0.2 },
            gae_lambda: 0.95,
            standardize_advantages: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda_tradeoff >= 0.0 && self.lambda_tradeoff.is_finite()) {
            return bad(format!("lambda_tradeoff must be >= 0, got {}", self.lambda_tradeoff));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda must be in [0, 1], got {}", self.gae_lambda));
        }
        match self.explorer {
            Explorer::Ppo { epsilon } if !(epsilon > 0.0 && epsilon < 1.0) => {
                bad(format!("epsilon must be in (0, 1), got {epsilon}"))
            }
            Explorer::TrpoPenalty { beta } if !(beta > 0.0 && beta.is_finite()) => {
                bad(format!("beta must be > 0, got {beta}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    pub grads: Gradients,
}

/// Generalized advantage estimation over the batch.
///
/// `delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)` and
/// `A_t = delta_t + gamma * gae_lambda * (1 - done_t) * A_{t+1}`, where the
/// recursion also stops at truncated segment ends. Value targets are
/// `A_t + V(s_t)` before any standardization.
pub fn compute_advantages(
    batch: &mut RolloutBatch,
    value_net: &MlpParams,
    gamma: f64,
    gae_lambda: f64,
    standardize: bool,
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Domain("cannot compute advantages of an empty batch".into()));
    }
    let n = batch.len();
    let states: Vec<&[f64]> = batch.transitions.iter().map(|t| t.state.as_slice()).collect();
    let next: Vec<&[f64]> = batch.transitions.iter().map(|t| t.next_state.as_slice()).collect();
    let v = value_net.forward(&Tensor::from_rows(&states)?)?.into_data();
    let v_next = value_net.forward(&Tensor::from_rows(&next)?)?.into_data();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let tr = &batch.transitions[t];
        let not_done = if tr.done { 0.0 } else { 1.0 };
        let delta = tr.reward + gamma * v_next[t] * not_done - v[t];
        let carry = if tr.done || tr.truncated || t + 1 == n { 0.0 } else { running };
        running = delta + gamma * gae_lambda * carry;
        adv[t] = running;
    }
    batch.value_targets = adv.iter().zip(&v).map(|(a, v)| a + v).collect();
    if standardize && n > 1 {
        let mean = adv.iter().sum::<f64>() / n as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt() + 1e-8;
        adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
    }
    batch.advantages = adv;
    Ok(())
}

/// Per-sample gradient pieces: d loss / d logits (or means) and, for
/// Gaussian heads, d loss / d log_std.
struct RawGrad {
    raw: Vec<f64>,
    log_std: Vec<f64>,
}

impl RawGrad {
    fn new(cache: &ForwardCache, policy: &MlpParams) -> Self {
        RawGrad {
            raw: vec![0.0; cache.raw().len()],
            log_std: vec![0.0; policy.log_std.as_ref().map(Tensor::len).unwrap_or(0)],
        }
    }

    fn finish(self, policy: &MlpParams, cache: &ForwardCache) -> Result<Gradients> {
        let ls = if policy.head == Head::GaussianMeanLogStd {
            Some(self.log_std.as_slice())
        } else {
            None
        };
        policy.backward_raw(cache, &self.raw, ls)
    }
}

/// Log-probability of `action` at batch row `r` and its gradient
/// accumulated with scale `coef` into `g`.
fn log_prob_with_grad(
    policy: &MlpParams,
    cache: &ForwardCache,
    r: usize,
    action: &Action,
    coef: f64,
    g: &mut RawGrad,
) -> Result<f64> {
    let n = policy.raw_output_dim();
    let raw = &cache.raw()[r * n..(r + 1) * n];
    let grow = &mut g.raw[r * n..(r + 1) * n];
    match (policy.head, action) {
        (Head::Softmax, Action::Discrete(a)) if *a < n => {
            let logp = crate::nn::log_softmax(raw);
            let probs = &cache.output().data()[r * n..(r + 1) * n];
            if coef != 0.0 {
                for k in 0..n {
                    let onehot = if k == *a { 1.0 } else { 0.0 };
                    grow[k] += coef * (onehot - probs[k]);
                }
            }
            Ok(logp[*a])
        }
        (Head::GaussianMeanLogStd, Action::Continuous(x)) if x.len() == n => {
            let log_std = policy.clamped_log_std().expect("gaussian head");
            let mut lp = 0.0;
            for k in 0..n {
                let std = log_std[k].exp();
                let z = (x[k] - raw[k]) / std;
                lp += -0.5 * z * z - log_std[k] - 0.5 * (2.0 * std::f64::consts::PI).ln();
                if coef != 0.0 {
                    grow[k] += coef * z / std;
                    g.log_std[k] += coef * (z * z - 1.0);
                }
            }
            Ok(lp)
        }
        _ => Err(Error::Domain(format!(
            "action {action:?} incompatible with {:?} head of width {n}",
            policy.head
        ))),
    }
}

fn all_indices(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Clipped surrogate: `-mean(min(r A, clip(r, 1-eps, 1+eps) A))` over `idx`
/// (the whole batch when `None`).
pub fn ppo_loss(
    batch: &RolloutBatch,
    policy: &MlpParams,
    epsilon: f64,
    idx: Option<&[usize]>,
) -> Result<LossOutput> {
    batch.require_ready()?;
    let owned;
    let idx = match idx {
        Some(i) => i,
        None => {
            owned = all_indices(batch.len());
            &owned
        }
    };
    let cache = policy.forward_cached(&batch.states(idx)?)?;
    let mut g = RawGrad::new(&cache, policy);
    let m = idx.len() as f64;
    let mut total = 0.0;
    for (r, &i) in idx.iter().enumerate() {
        let tr = &batch.transitions[i];
        let adv = batch.advantages[i];
        // Gradient coefficient is filled in below once the ratio is known.
        let logp = log_prob_with_grad(policy, &cache, r, &tr.action, 0.0, &mut g)?;
        let ratio = (logp - tr.log_prob).exp();
        if !ratio.is_finite() {
            return Err(Error::numeric(
                "ppo_loss",
                format!("non-finite probability ratio at transition {i}"),
            ));
        }
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * adv;
        total += unclipped.min(clipped);
        if unclipped <= clipped {
            log_prob_with_grad(policy, &cache, r, &tr.action, -unclipped / m, &mut g)?;
        }
    }
    Ok(LossOutput {
        value: -total / m,
        grads: g.finish(policy, &cache)?,
    })
}

/// Per-sample clipped objective, exposed for enumeration checks.
pub fn ppo_sample_objective(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage)
}

/// KL-penalized surrogate:
/// `-mean(r A) + beta * mean(KL(pi_old(.|s) || pi(.|s)))`.
pub fn trpo_penalty_loss(
    batch: &RolloutBatch,
    policy: &MlpParams,
    beta: f64,
    idx: Option<&[usize]>,
) -> Result<LossOutput> {
    batch.require_ready()?;
    let owned;
    let idx = match idx {
        Some(i) => i,
        None => {
            owned = all_indices(batch.len());
            &owned
        }
    };
    let cache = policy.forward_cached(&batch.states(idx)?)?;
    let mut g = RawGrad::new(&cache, policy);
    let m = idx.len() as f64;
    let n = policy.raw_output_dim();
    let mut surrogate = 0.0;
    let mut kl_total = 0.0;
    for (r, &i) in idx.iter().enumerate() {
        let tr = &batch.transitions[i];
        if !tr.log_prob.is_finite() {
            return Err(Error::numeric(
                "trpo_penalty_loss",
                format!("old policy gives zero probability to the action at transition {i}"),
            ));
        }
        let adv = batch.advantages[i];
        let logp = log_prob_with_grad(policy, &cache, r, &tr.action, 0.0, &mut g)?;
        let ratio = (logp - tr.log_prob).exp();
        if !ratio.is_finite() {
            return Err(Error::numeric(
                "trpo_penalty_loss",
                format!("non-finite probability ratio at transition {i}"),
            ));
        }
        surrogate += ratio * adv;
        log_prob_with_grad(policy, &cache, r, &tr.action, -ratio * adv / m, &mut g)?;

        let raw = &cache.raw()[r * n..(r + 1) * n];
        match &tr.old_dist {
            ActionDist::Categorical(p_old) if p_old.len() == n => {
                let p_new = &cache.output().data()[r * n..(r + 1) * n];
                let logp_new = crate::nn::log_softmax(raw);
                let mut kl = 0.0;
                for k in 0..n {
                    if p_old[k] > 0.0 {
                        kl += p_old[k] * (p_old[k].ln() - logp_new[k]);
                    }
                    g.raw[r * n + k] += beta / m * (p_new[k] - p_old[k]);
                }
                kl_total += kl;
            }
            ActionDist::Gaussian { mean: m_old, log_std: s_old } if m_old.len() == n => {
                let s_new = policy.clamped_log_std().expect("gaussian head");
                for k in 0..n {
                    let v_old = (2.0 * s_old[k]).exp();
                    let v_new = (2.0 * s_new[k]).exp();
                    let diff = raw[k] - m_old[k];
                    kl_total += s_new[k] - s_old[k] + (v_old + diff * diff) / (2.0 * v_new) - 0.5;
                    g.raw[r * n + k] += beta / m * diff / v_new;
                    g.log_std[k] += beta / m * (1.0 - (v_old + diff * diff) / v_new);
                }
            }
            other => {
                return Err(Error::Domain(format!(
                    "old distribution {other:?} incompatible with policy head"
                )))
            }
        }
    }
    Ok(LossOutput {
        value: -surrogate / m + beta * kl_total / m,
        grads: g.finish(policy, &cache)?,
    })
}

/// Mean KL(old || new) over the batch, for diagnostics.
pub fn mean_kl(batch: &RolloutBatch, policy: &MlpParams) -> Result<f64> {
    let states = batch.states(&all_indices(batch.len()))?;
    let new = crate::policy::distributions(policy, &states)?;
    let mut total = 0.0;
    for (tr, d) in batch.transitions.iter().zip(&new) {
        total += tr.old_dist.kl(d)?;
    }
    Ok(total / batch.len().max(1) as f64)
}

/// Weighted cross-entropy between demonstrated and predicted action
/// distributions, normalized by the number of instances.
///
/// Discrete heads use `-w <a*, log pi(s)>`; Gaussian heads use
/// `-w log pi(a* | s)`. `weights` follows [`DemoSet::instances`] order.
pub fn demo_loss(demos: &DemoSet, weights: &[f64], policy: &MlpParams) -> Result<LossOutput> {
    let all: Vec<usize> = (0..demos.instance_count()).collect();
    demo_loss_subset(demos, weights, policy, &all)
}

/// [`demo_loss`] restricted to the instances at flat positions `subset`,
/// normalized by `subset.len()`.
pub fn demo_loss_subset(
    demos: &DemoSet,
    weights: &[f64],
    policy: &MlpParams,
    subset: &[usize],
) -> Result<LossOutput> {
    let count = demos.instance_count();
    if weights.len() != count {
        return Err(Error::Domain(format!(
            "{} weights supplied for {count} demonstration instances",
            weights.len()
        )));
    }
    let instances: Vec<_> = demos.instances().map(|(_, _, inst)| inst).collect();
    let picked: Vec<usize> = subset.iter().copied().filter(|&k| weights[k] != 0.0).collect();
    let norm = subset.len().max(1) as f64;
    if picked.is_empty() {
        return Ok(LossOutput {
            value: 0.0,
            grads: Gradients::zeros_like(policy),
        });
    }
    let rows: Vec<&[f64]> = picked.iter().map(|&k| instances[k].state.as_slice()).collect();
    let cache = policy.forward_cached(&Tensor::from_rows(&rows)?)?;
    let mut g = RawGrad::new(&cache, policy);
    let n = policy.raw_output_dim();
    let mut total = 0.0;
    for (r, &k) in picked.iter().enumerate() {
        let w = weights[k];
        match (&instances[k].expert_action, policy.head) {
            (ExpertAction::Discrete { probs, .. }, Head::Softmax) if probs.len() == n => {
                let raw = &cache.raw()[r * n..(r + 1) * n];
                let logp = crate::nn::log_softmax(raw);
                let p = &cache.output().data()[r * n..(r + 1) * n];
                let target_mass: f64 = probs.iter().sum();
                let mut ce = 0.0;
                for c in 0..n {
                    if probs[c] != 0.0 {
                        ce -= probs[c] * logp[c];
                    }
                    g.raw[r * n + c] += w / norm * (target_mass * p[c] - probs[c]);
                }
                total += w * ce;
            }
            (ExpertAction::Continuous(a), Head::GaussianMeanLogStd) if a.len() == n => {
                let lp = log_prob_with_grad(
                    policy,
                    &cache,
                    r,
                    &Action::Continuous(a.clone()),
                    -w / norm,
                    &mut g,
                )?;
                total -= w * lp;
            }
            (other, head) => {
                return Err(Error::Domain(format!(
                    "demonstrated action {other:?} incompatible with {head:?} head of width {n}"
                )))
            }
        }
    }
    Ok(LossOutput {
        value: total / norm,
        grads: g.finish(policy, &cache)?,
    })
}

/// `l = l_d + lambda * l_e` with matching gradient combination.
pub fn joint_loss(demo: &LossOutput, explore: &LossOutput, lambda_tradeoff: f64) -> Result<LossOutput> {
    let mut grads = demo.grads.clone();
    grads.add_scaled(&explore.grads, lambda_tradeoff)?;
    Ok(LossOutput {
        value: demo.value + lambda_tradeoff * explore.value,
        grads,
    })
}

/// `mean((V(s) - target)^2)` over the given rows.
pub fn value_loss(value_net: &MlpParams, states: &Tensor, targets: &[f64]) -> Result<LossOutput> {
    if states.rows() != targets.len() {
        return Err(Error::dims(&[states.rows()], &[targets.len()]));
    }
    let cache = value_net.forward_cached(states)?;
    let pred = cache.output().data();
    let m = targets.len().max(1) as f64;
    let mut loss = 0.0;
    let mut upstream = vec![0.0; pred.len()];
    for (k, (p, t)) in pred.iter().zip(targets).enumerate() {
        let e = p - t;
        loss += e * e;
        upstream[k] = 2.0 * e / m;
    }
    let grads = value_net.backward(&cache, &Tensor::new(cache.output().shape().to_vec(), upstream)?)?;
    Ok(LossOutput {
        value: loss / m,
        grads,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueFitConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub max_grad_norm: Option<f64>,
}

/// Regresses the value network onto the batch's value targets and returns
/// the loss before the first step.
pub fn update_value_net<R: Rng + ?Sized>(
    value_net: &mut MlpParams,
    opt: &mut AdamState,
    batch: &RolloutBatch,
    cfg: &ValueFitConfig,
    rng: &mut R,
) -> Result<f64> {
    batch.require_ready()?;
    let mut order = all_indices(batch.len());
    let initial = value_loss(value_net, &batch.states(&order)?, &batch.value_targets)?.value;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch_size.max(1)) {
            let targets: Vec<f64> = chunk.iter().map(|&i| batch.value_targets[i]).collect();
            let mut out = value_loss(value_net, &batch.states(chunk)?, &targets)?;
            if !out.value.is_finite() {
                return Err(Error::numeric("value regression", "non-finite loss"));
            }
            if let Some(c) = cfg.max_grad_norm {
                out.grads.clip_global_norm(c);
            }
            optimizer_step(value_net, &out.grads, opt, cfg.learning_rate)?;
        }
    }
    Ok(initial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::{DemoInstance, Trajectory};
    use crate::nn::MlpSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randomized(spec: &MlpSpec, seed: u64) -> MlpParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = MlpParams::init(spec, &mut rng);
        for t in net.tensors_mut() {
            for x in t.data_mut() {
                *x = rng.random_range(-0.8..0.8);
            }
        }
        net
    }

    fn set_param(net: &mut MlpParams, mut k: usize, value: f64) {
        for t in net.tensors_mut() {
            if k < t.len() {
                t.data_mut()[k] = value;
                return;
            }
            k -= t.len();
        }
        panic!("parameter index out of range");
    }

    fn check_gradient(net: &MlpParams, f: impl Fn(&MlpParams) -> LossOutput) {
        let analytic = f(net).grads.flatten();
        let base = net.flatten();
        let h = 1e-5;
        let numeric: Vec<f64> = (0..base.len())
            .map(|k| {
                let mut p = net.clone();
                set_param(&mut p, k, base[k] + h);
                let up = f(&p).value;
                set_param(&mut p, k, base[k] - h);
                let down = f(&p).value;
                (up - down) / (2.0 * h)
            })
            .collect();
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(
            numeric.iter().map(|a| a * a).sum::<f64>().sqrt(),
        );
        assert!(scale > 1e-8, "degenerate fixture: zero gradient");
        assert!(diff / scale < 1e-4, "relative error {}", diff / scale);
    }

    fn discrete_batch(policy: &MlpParams, old: &MlpParams, n: usize, seed: u64) -> RolloutBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut transitions = Vec::new();
        for _ in 0..n {
            let s: Vec<f64> = (0..policy.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dist = crate::policy::distribution(old, &s).unwrap();
            let action = dist.sample(&mut rng);
            transitions.push(Transition {
                log_prob: dist.log_prob(&action).unwrap(),
                old_dist: dist,
                action,
                reward: rng.random_range(-1.0..1.0),
                next_state: s.clone(),
                state: s,
                done: false,
                truncated: false,
            });
        }
        let mut b = RolloutBatch::new(transitions);
        b.advantages = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        b.value_targets = vec![0.0; n];
        b
    }

    fn nets(head: Head) -> (MlpParams, MlpParams) {
        let out = if head == Head::Softmax { 4 } else { 2 };
        let spec = MlpSpec::new(3, &[6, 5], out, head);
        (randomized(&spec, 1), randomized(&spec, 2))
    }

    fn discrete_demos(n_traj: usize, len: usize, seed: u64) -> DemoSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trajectories = (0..n_traj)
            .map(|t| Trajectory {
                id: format!("t{t}"),
                instances: (0..len)
                    .map(|_| {
                        let mut probs: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
                        let s: f64 = probs.iter().sum();
                        probs.iter_mut().for_each(|p| *p /= s);
                        DemoInstance {
                            state: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                            expert_action: ExpertAction::Discrete { action: 0, probs },
                            reward: rng.random_range(0.0..1.0),
                            is_noisy: false,
                        }
                    })
                    .collect(),
            })
            .collect();
        DemoSet::new("fixture", 0.9, trajectories).unwrap()
    }

    fn continuous_demos(seed: u64) -> DemoSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let instances = (0..12)
            .map(|_| DemoInstance {
                state: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                expert_action: ExpertAction::Continuous(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]),
                reward: 0.0,
                is_noisy: false,
            })
            .collect();
        DemoSet::new("fixture", 0.9, vec![Trajectory { id: "c".into(), instances }]).unwrap()
    }

    #[test]
    fn gae_special_cases() {
        let (policy, _) = nets(Head::Softmax);
        let zero_v = MlpParams::init(&MlpSpec::new(3, &[4], 1, Head::Linear), &mut ChaCha8Rng::seed_from_u64(0));
        let mut zero_v = zero_v;
        for t in zero_v.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let mut b = discrete_batch(&policy, &policy, 6, 3);
        b.transitions[5].done = true;
        compute_advantages(&mut b, &zero_v, 0.9, 1.0, false).unwrap();
        let rewards: Vec<f64> = b.transitions.iter().map(|t| t.reward).collect();
        for t in 0..6 {
            let rtg: f64 = (t..6).map(|k| 0.9f64.powi((k - t) as i32) * rewards[k]).sum();
            assert!((b.advantages[t] - rtg).abs() < 1e-12);
        }
        compute_advantages(&mut b, &zero_v, 0.9, 0.0, false).unwrap();
        for t in 0..6 {
            assert_eq!(b.advantages[t], rewards[t]);
        }
    }

    #[test]
    fn gae_matches_double_loop() {
        let (policy, _) = nets(Head::Softmax);
        let value = randomized(&MlpSpec::new(3, &[5], 1, Head::Linear), 7);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut b = discrete_batch(&policy, &policy, 20, 5);
        for t in 0..20 {
            b.transitions[t].next_state = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        }
        b.transitions[7].done = true;
        b.transitions[13].truncated = true;
        let (gamma, lam) = (0.97, 0.9);
        compute_advantages(&mut b, &value, gamma, lam, false).unwrap();
        let v = |s: &[f64]| value.forward(&Tensor::row(s)).unwrap().data()[0];
        let deltas: Vec<f64> = b
            .transitions
            .iter()
            .map(|t| t.reward + if t.done { 0.0 } else { gamma * v(&t.next_state) } - v(&t.state))
            .collect();
        for t in 0..20 {
            let mut a = 0.0;
            let mut l = t;
            loop {
                a += (gamma * lam).powi((l - t) as i32) * deltas[l];
                let tr = &b.transitions[l];
                if tr.done || tr.truncated || l == 19 {
                    break;
                }
                l += 1;
            }
            assert!((b.advantages[t] - a).abs() < 1e-10, "t={t}");
            assert!((b.value_targets[t] - (a + v(&b.transitions[t].state))).abs() < 1e-10);
        }
    }

    #[test]
    fn standardized_advantages_have_unit_scale() {
        let (policy, _) = nets(Head::Softmax);
        let value = randomized(&MlpSpec::new(3, &[5], 1, Head::Linear), 7);
        let mut b = discrete_batch(&policy, &policy, 32, 9);
        compute_advantages(&mut b, &value, 0.99, 0.95, true).unwrap();
        let mean = b.advantages.iter().sum::<f64>() / 32.0;
        let var = b.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 32.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ppo_gradients_match_finite_differences() {
        for head in [Head::Softmax, Head::GaussianMeanLogStd] {
            let (policy, old) = nets(head);
            let b = discrete_batch(&policy, &old, 16, 21);
            check_gradient(&policy, |p| ppo_loss(&b, p, 0.2, None).unwrap());
        }
    }

    #[test]
    fn trpo_gradients_match_finite_differences() {
        for head in [Head::Softmax, Head::GaussianMeanLogStd] {
            let (policy, old) = nets(head);
            let b = discrete_batch(&policy, &old, 16, 22);
            check_gradient(&policy, |p| trpo_penalty_loss(&b, p, 0.5, None).unwrap());
        }
    }

    #[test]
    fn demo_gradients_match_finite_differences() {
        let (policy, _) = nets(Head::Softmax);
        let demos = discrete_demos(3, 5, 4);
        let w: Vec<f64> = (0..15).map(|k| if k % 4 == 0 { 0.0 } else { 0.3 * k as f64 }).collect();
        check_gradient(&policy, |p| demo_loss(&demos, &w, p).unwrap());

        let (gauss, _) = nets(Head::GaussianMeanLogStd);
        let cdemos = continuous_demos(5);
        let w: Vec<f64> = (0..12).map(|k| 0.1 + k as f64 * 0.2).collect();
        check_gradient(&gauss, |p| demo_loss(&cdemos, &w, p).unwrap());
    }

    #[test]
    fn joint_and_value_gradients_match_finite_differences() {
        let (policy, old) = nets(Head::Softmax);
        let b = discrete_batch(&policy, &old, 12, 23);
        let demos = discrete_demos(2, 6, 8);
        let w = vec![0.7; 12];
        check_gradient(&policy, |p| {
            let d = demo_loss(&demos, &w, p).unwrap();
            let e = ppo_loss(&b, p, 0.2, None).unwrap();
            joint_loss(&d, &e, 1.0).unwrap()
        });

        let value = randomized(&MlpSpec::new(3, &[6], 1, Head::Linear), 3);
        let states = b.states(&(0..12).collect::<Vec<_>>()).unwrap();
        let targets: Vec<f64> = (0..12).map(|k| k as f64 * 0.1 - 0.5).collect();
        check_gradient(&value, |v| value_loss(v, &states, &targets).unwrap());
    }

    #[test]
    fn ppo_clip_enumeration() {
        let eps = 0.2;
        for adv in [1.5, -1.5] {
            for ratio in [0.5f64, 1.1, 1.6] {
                let expected = if adv > 0.0 {
                    ratio.min(1.0 + eps) * adv
                } else {
                    ratio.max(1.0 - eps) * adv
                };
                let got = ppo_sample_objective(ratio, adv, eps);
                assert_eq!(got, expected, "adv {adv} ratio {ratio}");
                assert_eq!(got, (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv));
            }
        }
        assert_eq!(ppo_sample_objective(1.3, 1.0, 0.2), 1.2);
    }

    #[test]
    fn ppo_gradient_vanishes_only_when_clipped() {
        let (policy, _) = nets(Head::Softmax);
        let mut b = discrete_batch(&policy, &policy, 1, 30);
        let logp_new = b.transitions[0].log_prob;
        for adv in [1.0, -1.0] {
            for ratio in [0.5f64, 1.1, 1.6] {
                b.transitions[0].log_prob = logp_new - ratio.ln();
                b.advantages = vec![adv];
                let out = ppo_loss(&b, &policy, 0.2, None).unwrap();
                assert!((out.value + ppo_sample_objective(ratio, adv, 0.2)).abs() < 1e-12);
                let clipped = (adv > 0.0 && ratio > 1.2) || (adv < 0.0 && ratio < 0.8);
                assert_eq!(out.grads.global_norm() == 0.0, clipped, "adv {adv} ratio {ratio}");
            }
        }
    }

    #[test]
    fn identical_policies_give_minus_mean_advantage() {
        let (policy, _) = nets(Head::Softmax);
        let b = discrete_batch(&policy, &policy, 10, 31);
        let mean_adv = b.advantages.iter().sum::<f64>() / 10.0;
        assert!((ppo_loss(&b, &policy, 0.2, None).unwrap().value + mean_adv).abs() < 1e-12);
        assert!((trpo_penalty_loss(&b, &policy, 0.01, None).unwrap().value + mean_adv).abs() < 1e-12);
        assert!(mean_kl(&b, &policy).unwrap().abs() < 1e-15);
    }

    #[test]
    fn larger_beta_shrinks_the_update() {
        let (policy, old) = nets(Head::Softmax);
        let b = discrete_batch(&policy, &old, 32, 32);
        let mut previous = f64::INFINITY;
        for beta in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let mut p = old.clone();
            let mut opt = AdamState::new(&p);
            for _ in 0..20 {
                let out = trpo_penalty_loss(&b, &p, beta, None).unwrap();
                crate::nn::optimizer_step(&mut p, &out.grads, &mut opt, 0.01).unwrap();
            }
            let moved: f64 = p
                .flatten()
                .iter()
                .zip(old.flatten())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let kl = mean_kl(&b, &p).unwrap();
            assert!(kl < previous, "beta {beta}: kl {kl} not below {previous} (moved {moved})");
            previous = kl;
        }
    }

    #[test]
    fn zero_old_probability_is_numeric_error() {
        let (policy, _) = nets(Head::Softmax);
        let mut b = discrete_batch(&policy, &policy, 2, 33);
        b.transitions[1].log_prob = f64::NEG_INFINITY;
        assert!(matches!(trpo_penalty_loss(&b, &policy, 0.01, None), Err(Error::Numeric { .. })));
    }

    #[test]
    fn demo_loss_arithmetic() {
        let spec = MlpSpec::new(1, &[], 2, Head::Softmax);
        let mut net = MlpParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(0));
        for t in net.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let demos = DemoSet::new(
            "fixture",
            0.9,
            vec![Trajectory {
                id: "a".into(),
                instances: vec![DemoInstance {
                    state: vec![0.3],
                    expert_action: ExpertAction::Discrete { action: 0, probs: vec![1.0, 0.0] },
                    reward: 1.0,
                    is_noisy: false,
                }],
            }],
        )
        .unwrap();
        let out = demo_loss(&demos, &[1.0], &net).unwrap();
        assert!((out.value - std::f64::consts::LN_2).abs() < 1e-15);
        let zero = demo_loss(&demos, &[0.0], &net).unwrap();
        assert_eq!(zero.value, 0.0);
        assert_eq!(zero.grads.global_norm(), 0.0);
        assert!(matches!(demo_loss(&demos, &[1.0, 1.0], &net), Err(Error::Domain(_))));
    }

    #[test]
    fn demo_loss_at_policy_output_is_entropy_minimum() {
        let (policy, _) = nets(Head::Softmax);
        let s = vec![0.2, -0.4, 0.9];
        let p = match crate::policy::distribution(&policy, &s).unwrap() {
            ActionDist::Categorical(p) => p,
            _ => unreachable!(),
        };
        let demo = |probs: Vec<f64>| {
            DemoSet::new(
                "fixture",
                0.9,
                vec![Trajectory {
                    id: "a".into(),
                    instances: vec![DemoInstance {
                        state: s.clone(),
                        expert_action: ExpertAction::Discrete { action: 0, probs },
                        reward: 0.0,
                        is_noisy: false,
                    }],
                }],
            )
            .unwrap()
        };
        let at = demo_loss(&demo(p.clone()), &[1.0], &policy).unwrap().value;
        let entropy = -p.iter().map(|x| x * x.ln()).sum::<f64>();
        assert!((at - entropy).abs() < 1e-12);
        // Cross-entropy H(p, q) >= H(p): moving the policy output away from p
        // can only raise the loss for the fixed target p.
        let target = demo(p.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let mut shifted = policy.clone();
            let last = shifted.layers.len() - 1;
            for x in shifted.layers[last].bias.data_mut() {
                *x += rng.random_range(-0.3..0.3);
            }
            assert!(demo_loss(&target, &[1.0], &shifted).unwrap().value >= at - 1e-12);
        }
    }

    #[test]
    fn joint_loss_identities() {
        let (policy, old) = nets(Head::Softmax);
        let b = discrete_batch(&policy, &old, 8, 34);
        let demos = discrete_demos(2, 4, 9);
        let d = demo_loss(&demos, &[1.0; 8], &policy).unwrap();
        let e = ppo_loss(&b, &policy, 0.2, None).unwrap();
        let j0 = joint_loss(&d, &e, 0.0).unwrap();
        assert_eq!(j0.value, d.value);
        assert_eq!(j0.grads.flatten(), d.grads.flatten());
        let j1 = joint_loss(&d, &e, 1.0).unwrap();
        let summed: Vec<f64> = d.grads.flatten().iter().zip(e.grads.flatten()).map(|(a, b)| a + b).collect();
        assert_eq!(j1.grads.flatten(), summed);

        let half = LossOutput { value: 0.5, grads: d.grads.clone() };
        let two = LossOutput { value: 2.0, grads: e.grads.clone() };
        assert_eq!(joint_loss(&half, &two, 1.0).unwrap().value, 2.5);
    }

    #[test]
    fn large_lambda_aligns_with_exploration_gradient() {
        let (policy, old) = nets(Head::Softmax);
        let b = discrete_batch(&policy, &old, 16, 35);
        let demos = discrete_demos(2, 5, 10);
        let d = demo_loss(&demos, &[1.0; 10], &policy).unwrap();
        let e = ppo_loss(&b, &policy, 0.2, None).unwrap();
        let j = joint_loss(&d, &e, 1e3).unwrap().grads.flatten();
        let r = e.grads.flatten();
        let dot: f64 = j.iter().zip(&r).map(|(a, b)| a * b).sum();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(dot / (norm(&j) * norm(&r)) > 0.99);
    }

    #[test]
    fn value_regression_converges_to_constant() {
        let (policy, _) = nets(Head::Softmax);
        let mut value = MlpParams::init(&MlpSpec::new(3, &[16], 1, Head::Linear), &mut ChaCha8Rng::seed_from_u64(12));
        let mut b = discrete_batch(&policy, &policy, 24, 36);
        b.value_targets = vec![1.7; 24];
        let mut opt = AdamState::new(&value);
        let cfg = ValueFitConfig { learning_rate: 1e-2, epochs: 4000, minibatch_size: 24, max_grad_norm: None };
        let first = update_value_net(&mut value, &mut opt, &b, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(first >= 0.0);
        let pred = value.forward(&b.states(&(0..24).collect::<Vec<_>>()).unwrap()).unwrap();
        assert!(pred.data().iter().all(|v| (v - 1.7).abs() < 1e-2), "{:?}", pred.data());
    }

    #[test]
    fn perfect_value_targets_give_zero_loss() {
        let (policy, _) = nets(Head::Softmax);
        let value = randomized(&MlpSpec::new(3, &[5], 1, Head::Linear), 13);
        let b = discrete_batch(&policy, &policy, 8, 37);
        let states = b.states(&(0..8).collect::<Vec<_>>()).unwrap();
        let targets = value.forward(&states).unwrap().into_data();
        let out = value_loss(&value, &states, &targets).unwrap();
        assert_eq!(out.value, 0.0);
        assert_eq!(out.grads.global_norm(), 0.0);
    }

    #[test]
    fn unready_batch_is_rejected() {
        let (policy, _) = nets(Head::Softmax);
        let mut b = discrete_batch(&policy, &policy, 3, 38);
        b.advantages.clear();
        assert!(matches!(ppo_loss(&b, &policy, 0.2, None), Err(Error::State(_))));
    }
}
