//! Multilayer perceptrons with explicit forward caches, analytic backward
//! passes and a deterministic Adam optimizer.
//!
//! Hidden layers use `tanh`. The output layer is affine and feeds one of
//! three heads:
//!
//! - [`Head::Softmax`]: a probability vector over discrete actions.
//! - [`Head::GaussianMeanLogStd`]: an action mean plus a state-independent,
//!   learnable log standard deviation. The forward output is `[mean, log_std]`
//!   concatenated along the last dimension.
//! - [`Head::Linear`]: the raw affine output (value networks).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{affine, Tensor};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Softmax,
    GaussianMeanLogStd,
    Linear,
}

/// Architecture description used to initialize an [`MlpParams`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize, head: Head) -> Self {
        MlpSpec {
            input,
            hidden: hidden.to_vec(),
            output,
            head,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `[out, in]`, row-major.
    pub weight: Tensor,
    /// `[out]`.
    pub bias: Tensor,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
    pub head: Head,
    /// Present only for [`Head::GaussianMeanLogStd`], shape `[action_dim]`.
    pub log_std: Option<Tensor>,
}

/// Gradients with the same layout as the [`MlpParams`] they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
    pub log_std: Option<Tensor>,
}

/// Activations recorded by [`MlpParams::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// `inputs[k]` is the input to layer `k`; hidden entries are post-tanh.
    inputs: Vec<Vec<f64>>,
    /// Raw affine output of the final layer.
    raw: Vec<f64>,
    /// Head output (probabilities, mean/log-std, or raw).
    output: Tensor,
    fingerprint: Vec<usize>,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    /// Logits for softmax heads, means for Gaussian heads.
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl MlpParams {
    /// Seeded scaled-uniform initialization.
    ///
    /// Hidden layers use gain `sqrt(2)`; the output layer uses gain `0.01` for
    /// policy heads and `1.0` for linear heads, so fresh policies start close
    /// to uniform.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Self {
        let mut dims = vec![spec.input];
        dims.extend(&spec.hidden);
        dims.push(spec.output);
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let (fan_in, fan_out) = (dims[k], dims[k + 1]);
                let gain = if k + 1 < n {
                    std::f64::consts::SQRT_2
                } else if spec.head == Head::Linear {
                    1.0
                } else {
                    0.01
                };
                // Uniform(-a, a) has variance a^2 / 3.
                let a = gain * (3.0 / fan_in.max(1) as f64).sqrt();
                let w = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-a..a))
                    .collect();
                Dense {
                    weight: Tensor::new(vec![fan_out, fan_in], w).expect("shape"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        let log_std = match spec.head {
            Head::GaussianMeanLogStd => Some(Tensor::filled(&[spec.output], -0.5)),
            _ => None,
        };
        MlpParams {
            layers,
            head: spec.head,
            log_std,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(Dense::in_dim).unwrap_or(0)
    }

    /// Width of the final affine layer (action count, action dim, or 1).
    pub fn raw_output_dim(&self) -> usize {
        self.layers.last().map(Dense::out_dim).unwrap_or(0)
    }

    /// Width of the head output.
    pub fn output_dim(&self) -> usize {
        match self.head {
            Head::GaussianMeanLogStd => 2 * self.raw_output_dim(),
            _ => self.raw_output_dim(),
        }
    }

    pub fn spec(&self) -> MlpSpec {
        MlpSpec {
            input: self.input_dim(),
            hidden: self.layers[..self.layers.len() - 1]
                .iter()
                .map(Dense::out_dim)
                .collect(),
            output: self.raw_output_dim(),
            head: self.head,
        }
    }

    fn fingerprint(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .layers
            .iter()
            .flat_map(|l| [l.out_dim(), l.in_dim()])
            .collect();
        f.push(self.head as usize);
        f
    }

    /// Clamped log standard deviations (Gaussian heads only).
    pub fn clamped_log_std(&self) -> Option<Vec<f64>> {
        self.log_std.as_ref().map(|t| {
            t.data()
                .iter()
                .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
                .collect()
        })
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(input)?.output)
    }

    pub fn forward_cached(&self, input: &Tensor) -> Result<ForwardCache> {
        let in_dim = self.input_dim();
        if input.last_dim() != in_dim || input.shape().is_empty() {
            let mut expected = input.shape().to_vec();
            match expected.last_mut() {
                Some(last) => *last = in_dim,
                None => expected.push(in_dim),
            }
            return Err(Error::dims(&expected, input.shape()));
        }
        let batch = input.rows();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = input.data().to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; batch * layer.out_dim()];
            affine(&current, batch, layer.weight.data(), layer.bias.data(), &mut out);
            if k < last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            inputs.push(current);
            current = out;
        }
        let raw = current;
        let n = self.raw_output_dim();
        let output = match self.head {
            Head::Linear => Tensor::new(vec![batch, n], raw.clone())?,
            Head::Softmax => {
                let mut probs = raw.clone();
                for row in probs.chunks_mut(n) {
                    softmax_in_place(row);
                }
                Tensor::new(vec![batch, n], probs)?
            }
            Head::GaussianMeanLogStd => {
                let log_std = self
                    .clamped_log_std()
                    .ok_or_else(|| Error::State("gaussian head without log_std".into()))?;
                let mut data = Vec::with_capacity(batch * 2 * n);
                for row in raw.chunks(n) {
                    data.extend_from_slice(row);
                    data.extend_from_slice(&log_std);
                }
                Tensor::new(vec![batch, 2 * n], data)?
            }
        };
        Ok(ForwardCache {
            batch,
            inputs,
            raw,
            output,
            fingerprint: self.fingerprint(),
        })
    }

    /// Gradients of a scalar loss given `d loss / d output` for the head output.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Tensor) -> Result<Gradients> {
        self.check_cache(cache)?;
        if upstream.shape() != cache.output.shape() {
            return Err(Error::dims(cache.output.shape(), upstream.shape()));
        }
        let n = self.raw_output_dim();
        match self.head {
            Head::Linear => self.backward_raw(cache, upstream.data(), None),
            Head::Softmax => {
                let mut g_raw = vec![0.0; upstream.len()];
                for ((g, p), out) in upstream
                    .data()
                    .chunks(n)
                    .zip(cache.output.data().chunks(n))
                    .zip(g_raw.chunks_mut(n))
                {
                    let dot: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
                    for i in 0..n {
                        out[i] = p[i] * (g[i] - dot);
                    }
                }
                self.backward_raw(cache, &g_raw, None)
            }
            Head::GaussianMeanLogStd => {
                let mut g_mean = Vec::with_capacity(cache.batch * n);
                let mut g_log_std = vec![0.0; n];
                for row in upstream.data().chunks(2 * n) {
                    g_mean.extend_from_slice(&row[..n]);
                    for (acc, g) in g_log_std.iter_mut().zip(&row[n..]) {
                        *acc += g;
                    }
                }
                self.backward_raw(cache, &g_mean, Some(&g_log_std))
            }
        }
    }

    /// Backward pass from `d loss / d raw` (logits or means) and, for Gaussian
    /// heads, `d loss / d clamped_log_std`.
    pub fn backward_raw(
        &self,
        cache: &ForwardCache,
        raw_grad: &[f64],
        log_std_grad: Option<&[f64]>,
    ) -> Result<Gradients> {
        self.check_cache(cache)?;
        let batch = cache.batch;
        if raw_grad.len() != cache.raw.len() {
            return Err(Error::dims(&[cache.raw.len()], &[raw_grad.len()]));
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = raw_grad.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let (n_out, n_in) = (layer.out_dim(), layer.in_dim());
            let x = &cache.inputs[k];
            let mut gw = vec![0.0; n_out * n_in];
            let mut gb = vec![0.0; n_out];
            for b in 0..batch {
                let xr = &x[b * n_in..(b + 1) * n_in];
                let dr = &delta[b * n_out..(b + 1) * n_out];
                for o in 0..n_out {
                    let d = dr[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    for (g, xi) in row.iter_mut().zip(xr) {
                        *g += d * xi;
                    }
                }
            }
            if k > 0 {
                let w = layer.weight.data();
                let mut prev = vec![0.0; batch * n_in];
                for b in 0..batch {
                    let dr = &delta[b * n_out..(b + 1) * n_out];
                    let pr = &mut prev[b * n_in..(b + 1) * n_in];
                    for o in 0..n_out {
                        let d = dr[o];
                        if d == 0.0 {
                            continue;
                        }
                        let wr = &w[o * n_in..(o + 1) * n_in];
                        for (p, wi) in pr.iter_mut().zip(wr) {
                            *p += d * wi;
                        }
                    }
                    // tanh' = 1 - tanh^2, x holds post-tanh activations.
                    for (p, h) in pr.iter_mut().zip(&x[b * n_in..(b + 1) * n_in]) {
                        *p *= 1.0 - h * h;
                    }
                }
                delta = prev;
            }
            grads.push(Dense {
                weight: Tensor::new(vec![n_out, n_in], gw)?,
                bias: Tensor::new(vec![n_out], gb)?,
            });
        }
        grads.reverse();
        let log_std = match (&self.log_std, log_std_grad) {
            (Some(ls), Some(g)) => {
                if g.len() != ls.len() {
                    return Err(Error::dims(ls.shape(), &[g.len()]));
                }
                let masked = ls
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(v, g)| {
                        if (LOG_STD_MIN..=LOG_STD_MAX).contains(v) {
                            *g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                Some(Tensor::new(ls.shape().to_vec(), masked)?)
            }
            (Some(ls), None) => Some(Tensor::zeros(ls.shape())),
            (None, _) => None,
        };
        Ok(Gradients {
            layers: grads,
            log_std,
        })
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.fingerprint != self.fingerprint() || cache.inputs.len() != self.layers.len() {
            return Err(Error::State(
                "forward cache was not produced by this network".into(),
            ));
        }
        Ok(())
    }

    /// Named parameter tensors in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{k}.weight"), &l.weight));
            out.push((format!("layer{k}.bias"), &l.bias));
        }
        if let Some(ls) = &self.log_std {
            out.push(("log_std".to_string(), ls));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for l in self.layers.iter_mut() {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        if let Some(ls) = self.log_std.as_mut() {
            out.push(ls);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// All parameters flattened in [`named_tensors`](Self::named_tensors) order.
    pub fn flatten(&self) -> Vec<f64> {
        self.named_tensors()
            .iter()
            .flat_map(|(_, t)| t.data().iter().copied())
            .collect()
    }
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Tensor::zeros(l.weight.shape()),
                    bias: Tensor::zeros(l.bias.shape()),
                })
                .collect(),
            log_std: params.log_std.as_ref().map(|t| Tensor::zeros(t.shape())),
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{k}.weight"), &l.weight));
            out.push((format!("layer{k}.bias"), &l.bias));
        }
        if let Some(ls) = &self.log_std {
            out.push(("log_std".to_string(), ls));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for l in self.layers.iter_mut() {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        if let Some(ls) = self.log_std.as_mut() {
            out.push(ls);
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.named_tensors()
            .iter()
            .flat_map(|(_, t)| t.data().iter().copied())
            .collect()
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors_mut().into_iter().for_each(|t| t.scale(s));
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Gradients, s: f64) -> Result<()> {
        let others = other.named_tensors();
        let mine = self.tensors_mut();
        if mine.len() != others.len() {
            return Err(Error::dims(&[mine.len()], &[others.len()]));
        }
        for (a, (_, b)) in mine.into_iter().zip(others) {
            a.add_scaled(b, s)?;
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.named_tensors()
            .iter()
            .map(|(_, t)| t.sum_sq())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
    }

    pub fn is_congruent(&self, params: &MlpParams) -> bool {
        let a = self.named_tensors();
        let b = params.named_tensors();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|((_, x), (_, y))| x.shape() == y.shape())
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Adam moments owned by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        let zeros: Vec<Tensor> = params
            .named_tensors()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One Adam update in place. Parameters are untouched if any check fails.
pub fn optimizer_step(
    params: &mut MlpParams,
    grads: &Gradients,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::Domain(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    if !grads.is_congruent(params) || state.m.len() != grads.named_tensors().len() {
        let p: Vec<usize> = params.named_tensors().iter().map(|(_, t)| t.len()).collect();
        let g: Vec<usize> = grads.named_tensors().iter().map(|(_, t)| t.len()).collect();
        return Err(Error::dims(&p, &g));
    }
    for (name, g) in grads.named_tensors() {
        if let Some(bad) = g.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric(
                format!("gradient tensor {name}"),
                format!("non-finite entry {bad}"),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let grad_tensors = grads.named_tensors();
    for (((p, (_, g)), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grad_tensors)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((pi, gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *pi -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_net(input: usize, hidden: &[usize], output: usize, head: Head) -> MlpParams {
        let mut p = MlpParams::init(
            &MlpSpec::new(input, hidden, output, head),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        for t in p.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        p
    }

    #[test]
    fn zero_weight_softmax_is_uniform() {
        let net = zero_net(3, &[4], 2, Head::Softmax);
        let out = net.forward(&Tensor::row(&[1.0, -2.0, 7.0])).unwrap();
        assert_eq!(out.data(), &[0.5, 0.5]);
    }

    #[test]
    fn identity_linear_net() {
        let mut net = zero_net(1, &[], 1, Head::Linear);
        net.layers[0].weight.data_mut()[0] = 1.0;
        net.layers[0].bias.data_mut()[0] = 0.25;
        let out = net.forward(&Tensor::row(&[3.0])).unwrap();
        assert_eq!(out.data(), &[3.25]);
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let net = zero_net(3, &[4], 2, Head::Softmax);
        let err = net.forward(&Tensor::row(&[1.0, 2.0])).unwrap_err();
        match err {
            Error::Dimension { expected, actual } => {
                assert_eq!(expected, vec![1, 3]);
                assert_eq!(actual, vec![1, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn linear_gradient_is_input() {
        // f(x) = w x, loss = f, w = 2, x = 3 -> dloss/dw = 3.
        let mut net = zero_net(1, &[], 1, Head::Linear);
        net.layers[0].weight.data_mut()[0] = 2.0;
        let cache = net.forward_cached(&Tensor::row(&[3.0])).unwrap();
        assert_eq!(cache.output().data(), &[6.0]);
        let g = net.backward(&cache, &Tensor::row(&[1.0])).unwrap();
        assert_eq!(g.layers[0].weight.data(), &[3.0]);
        assert_eq!(g.layers[0].bias.data(), &[1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = MlpParams::init(
            &MlpSpec::new(3, &[5, 4], 2, Head::GaussianMeanLogStd),
            &mut ChaCha8Rng::seed_from_u64(3),
        );
        let x = Tensor::from_rows(&[vec![0.1, 0.2, 0.3], vec![-1.0, 0.5, 2.0]]).unwrap();
        let cache = net.forward_cached(&x).unwrap();
        let g = net.backward(&cache, &Tensor::zeros(&[2, 4])).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cache_from_other_network_is_rejected() {
        let a = zero_net(2, &[3], 2, Head::Softmax);
        let b = zero_net(2, &[4], 2, Head::Softmax);
        let cache = b.forward_cached(&Tensor::row(&[1.0, 1.0])).unwrap();
        let err = a.backward(&cache, &Tensor::row(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn gaussian_log_std_is_clamped() {
        let mut net = zero_net(1, &[], 2, Head::GaussianMeanLogStd);
        net.log_std = Some(Tensor::new(vec![2], vec![-9.0, 3.5]).unwrap());
        let out = net.forward(&Tensor::row(&[0.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, LOG_STD_MIN, LOG_STD_MAX]);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut net = MlpParams::init(
            &MlpSpec::new(2, &[3], 2, Head::Softmax),
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        let before = net.clone();
        let mut st = AdamState::new(&net);
        let g = Gradients::zeros_like(&net);
        optimizer_step(&mut net, &g, &mut st, 1e-3).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn adam_first_step_is_learning_rate() {
        let mut net = zero_net(1, &[], 1, Head::Linear);
        let mut st = AdamState::new(&net);
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weight.data_mut()[0] = 0.37;
        optimizer_step(&mut net, &g, &mut st, 0.01).unwrap();
        // m_hat = g, v_hat = g^2: step = lr * g / (|g| + eps).
        let expected = -0.01 * 0.37 / (0.37 + 1e-8);
        assert!((net.layers[0].weight.data()[0] - expected).abs() < 1e-15);
        optimizer_step(&mut net, &g, &mut st, 0.01).unwrap();
        assert!((net.layers[0].weight.data()[0] - 2.0 * expected).abs() < 1e-12);
    }

    #[test]
    fn adam_rejects_non_finite_gradient_by_name() {
        let mut net = zero_net(1, &[2], 1, Head::Linear);
        let mut st = AdamState::new(&net);
        let mut g = Gradients::zeros_like(&net);
        g.layers[1].bias.data_mut()[0] = f64::NAN;
        let err = optimizer_step(&mut net, &g, &mut st, 0.01).unwrap_err();
        assert!(err.to_string().contains("layer1.bias"), "{err}");
        assert_eq!(st.step, 0);
    }

    #[test]
    fn adam_rejects_bad_learning_rate() {
        let mut net = zero_net(1, &[], 1, Head::Linear);
        let mut st = AdamState::new(&net);
        let g = Gradients::zeros_like(&net);
        assert!(optimizer_step(&mut net, &g, &mut st, 0.0).is_err());
    }
}
