//! Bootstrap ensemble of small Gaussian-output networks.
//!
//! Each member maps a standardized input vector to a mean and a diagonal
//! variance per output and is fitted by minimizing the Gaussian negative
//! log-likelihood with Adam on its own bootstrap resample.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::mix_seed;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("ensemble needs at least one member")]
    NoMembers,
    #[error("row {row} has {got} values, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("every input column is constant")]
    NoInputs,
    #[error("non-finite value in the training data")]
    NonFinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub members: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Variance floor in standardized output units.
    pub min_variance: f64,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            members: 5,
            hidden: 64,
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            min_variance: 1e-6,
            seed: 0,
        }
    }
}

pub const MIN_SAMPLES: usize = 100;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fully connected net with tanh hidden layers and a (mean, raw variance)
/// head. Weights are stored row-major per layer in one flat vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

struct Tape {
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    fn new(sizes: Vec<usize>, rng: &mut ChaCha8Rng) -> Mlp {
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            let u = Uniform::new(-bound, bound).expect("valid bounds");
            params.extend((0..n_in * n_out).map(|_| u.sample(rng)));
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Mlp { sizes, params }
    }

    fn n_out(&self) -> usize {
        self.sizes.last().copied().unwrap_or(0) / 2
    }

    fn forward(&self, x: &[f64]) -> Tape {
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        let layers = self.sizes.len() - 1;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let input = acts.last().expect("input layer");
            let mut out: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        Tape { acts }
    }

    /// Standardized mean and variance for one input.
    fn predict(&self, x: &[f64], min_var: f64) -> (Vec<f64>, Vec<f64>) {
        let out = self.forward(x).acts.pop().expect("output layer");
        let k = self.n_out();
        let mu = out[..k].to_vec();
        let var = out[k..].iter().map(|r| softplus(*r) + min_var).collect();
        (mu, var)
    }

    /// Accumulate the NLL gradient for one example into `grad`; returns
    /// the loss.
    fn backprop(&self, x: &[f64], y: &[f64], min_var: f64, grad: &mut [f64]) -> f64 {
        let tape = self.forward(x);
        let out = tape.acts.last().expect("output layer");
        let k = self.n_out();
        let mut delta = vec![0.0; 2 * k];
        let mut loss = 0.0;
        for j in 0..k {
            let v = softplus(out[k + j]) + min_var;
            let e = out[j] - y[j];
            loss += 0.5 * (v.ln() + e * e / v);
            delta[j] = e / v;
            delta[k + j] = 0.5 * (1.0 / v - e * e / (v * v)) * sigmoid(out[k + j]);
        }
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &tape.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wv;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
        loss
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub net: Mlp,
    /// How many times each training row appears in this member's resample.
    pub bootstrap: Vec<u16>,
}

/// Column means and standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Standardizer {
        let n = rows.len() as f64;
        let d = rows[0].len();
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        // Round-off leaves a residue on constant columns; treat it as zero.
        for (s, m) in std.iter_mut().zip(&mean) {
            *s = s.sqrt();
            if *s <= 1e-12 * (1.0 + m.abs()) {
                *s = 0.0;
            }
        }
        Standardizer { mean, std }
    }
}

/// Mixture of per-member diagonal Gaussians with equal weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl Mixture {
    pub fn mean(&self) -> Vec<f64> {
        let b = self.means.len() as f64;
        let k = self.means[0].len();
        (0..k).map(|j| self.means.iter().map(|m| m[j]).sum::<f64>() / b).collect()
    }

    /// Total variance: mean of member variances plus variance of member
    /// means.
    pub fn variance(&self) -> Vec<f64> {
        let b = self.means.len() as f64;
        let mu = self.mean();
        (0..mu.len())
            .map(|j| {
                self.means
                    .iter()
                    .zip(&self.variances)
                    .map(|(m, v)| v[j] + (m[j] - mu[j]).powi(2))
                    .sum::<f64>()
                    / b
            })
            .collect()
    }

    /// Pick a member uniformly, then draw from its Gaussian.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = rng.random_range(0..self.means.len());
        self.means[m]
            .iter()
            .zip(&self.variances[m])
            .map(|(mu, v)| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                mu + v.sqrt() * z
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub n_inputs: usize,
    /// Input columns the networks see; constant columns are dropped.
    pub kept_inputs: Vec<usize>,
    pub inputs: Standardizer,
    pub outputs: Standardizer,
    pub min_variance: f64,
    pub members: Vec<Member>,
}

impl Ensemble {
    pub fn fit(x: &[Vec<f64>], y: &[Vec<f64>], cfg: &EnsembleConfig) -> Result<Ensemble, FitError> {
        if x.len() < MIN_SAMPLES || y.len() != x.len() {
            return Err(FitError::TooFewSamples { need: MIN_SAMPLES, got: x.len().min(y.len()) });
        }
        if cfg.members == 0 {
            return Err(FitError::NoMembers);
        }
        for (rows, width) in [(x, x[0].len()), (y, y[0].len())] {
            for (i, r) in rows.iter().enumerate() {
                if r.len() != width {
                    return Err(FitError::Ragged { row: i, expected: width, got: r.len() });
                }
                if r.iter().any(|v| !v.is_finite()) {
                    return Err(FitError::NonFinite);
                }
            }
        }
        let inputs = Standardizer::fit(x);
        let kept_inputs: Vec<usize> = (0..inputs.std.len()).filter(|&j| inputs.std[j] > 0.0).collect();
        for j in (0..inputs.std.len()).filter(|j| !kept_inputs.contains(j)) {
            log::warn!("input column {j} is constant and is dropped");
        }
        if kept_inputs.is_empty() {
            return Err(FitError::NoInputs);
        }
        let mut outputs = Standardizer::fit(y);
        outputs.std.iter_mut().filter(|s| **s == 0.0).for_each(|s| *s = 1.0);

        let xs: Vec<Vec<f64>> = x.iter().map(|r| standardize(r, &inputs, &kept_inputs)).collect();
        let ys: Vec<Vec<f64>> = y
            .iter()
            .map(|r| r.iter().zip(&outputs.mean).zip(&outputs.std).map(|((v, m), s)| (v - m) / s).collect())
            .collect();
        let k = y[0].len();
        let sizes = vec![kept_inputs.len(), cfg.hidden, cfg.hidden, 2 * k];
        let members = (0..cfg.members)
            .map(|b| fit_member(&xs, &ys, sizes.clone(), cfg, mix_seed(cfg.seed, b as u64)))
            .collect();
        Ok(Ensemble { n_inputs: x[0].len(), kept_inputs, inputs, outputs, min_variance: cfg.min_variance, members })
    }

    /// Per-member Gaussians in original output units.
    pub fn predict(&self, x: &[f64]) -> Mixture {
        let mut means = Vec::with_capacity(self.members.len());
        let mut variances = Vec::with_capacity(self.members.len());
        for m in 0..self.members.len() {
            let (mu, var) = self.predict_member(x, m);
            means.push(mu);
            variances.push(var);
        }
        Mixture { means, variances }
    }

    /// Mean and variance of one member in original output units.
    pub fn predict_member(&self, x: &[f64], member: usize) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(x.len(), self.n_inputs, "input width");
        let z = standardize(x, &self.inputs, &self.kept_inputs);
        let (mu, var) = self.members[member].net.predict(&z, self.min_variance);
        let out = &self.outputs;
        (
            mu.iter().zip(&out.mean).zip(&out.std).map(|((u, a), s)| a + s * u).collect(),
            var.iter().zip(&out.std).map(|(v, s)| v * s * s).collect(),
        )
    }

    /// Draw from the mixture, evaluating only the chosen member.
    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let m = rng.random_range(0..self.members.len());
        let (mu, var) = self.predict_member(x, m);
        mu.iter()
            .zip(&var)
            .map(|(u, v)| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                u + v.sqrt() * z
            })
            .collect()
    }
}

fn standardize(x: &[f64], st: &Standardizer, kept: &[usize]) -> Vec<f64> {
    kept.iter().map(|&j| (x[j] - st.mean[j]) / st.std[j]).collect()
}

fn fit_member(x: &[Vec<f64>], y: &[Vec<f64>], sizes: Vec<usize>, cfg: &EnsembleConfig, seed: u64) -> Member {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.len();
    let mut counts = vec![0u16; n];
    let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    for &r in &rows {
        counts[r] = counts[r].saturating_add(1);
    }
    let mut net = Mlp::new(sizes, &mut rng);
    let p = net.params.len();
    let (mut m1, mut m2) = (vec![0.0; p], vec![0.0; p]);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut t = 0i32;
    let mut grad = vec![0.0; p];
    let batch = cfg.batch_size.max(1);
    // Cosine decay of the step size to 1% of its start.
    let total = (cfg.epochs * n.div_ceil(batch)).max(1) as f64;
    for _ in 0..cfg.epochs {
        rows.shuffle(&mut rng);
        for chunk in rows.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &r in chunk {
                net.backprop(&x[r], &y[r], cfg.min_variance, &mut grad);
            }
            t += 1;
            let scale = 1.0 / chunk.len() as f64;
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            let lr = cfg.learning_rate * (0.01 + 0.99 * 0.5 * (1.0 + (std::f64::consts::PI * (t - 1) as f64 / total).cos()));
            for i in 0..p {
                let g = grad[i] * scale;
                m1[i] = b1 * m1[i] + (1.0 - b1) * g;
                m2[i] = b2 * m2[i] + (1.0 - b2) * g * g;
                net.params[i] -= lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
            }
        }
    }
    Member { net, bootstrap: counts }
}
