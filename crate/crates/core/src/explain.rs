//! Shapley attributions of a policy's trade direction to its input
//! features.

use crate::types::mix_seed;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("background set is empty")]
    EmptyBackground,
    #[error("need at least one permutation")]
    NoPermutations,
    #[error("state has {state} features but background row {row} has {background}")]
    FeatureMismatch { state: usize, row: usize, background: usize },
    #[error("exact enumeration is limited to {max} features, got {got}")]
    TooManyFeatures { max: usize, got: usize },
    #[error("evaluation set is empty")]
    EmptyEvaluation,
}

/// Feature count above which exact enumeration is refused.
pub const MAX_EXACT_FEATURES: usize = 16;

fn check(x: &[f64], background: &[Vec<f64>]) -> Result<(), ExplainError> {
    if background.is_empty() {
        return Err(ExplainError::EmptyBackground);
    }
    for (row, b) in background.iter().enumerate() {
        if b.len() != x.len() {
            return Err(ExplainError::FeatureMismatch { state: x.len(), row, background: b.len() });
        }
    }
    Ok(())
}

/// Mean output over the background set.
pub fn base_value<F: Fn(&[f64]) -> f64>(f: &F, background: &[Vec<f64>]) -> f64 {
    background.iter().map(|b| f(b)).sum::<f64>() / background.len() as f64
}

/// Monte-Carlo permutation Shapley values of `f` at `x`.
///
/// Each sampled feature order is walked once per background reference:
/// starting from the reference, features switch to `x` one at a time and
/// each is credited with the change in output. A random order is used
/// through all of its cyclic rotations, forwards and backwards, so every
/// feature sits at every position equally often; `n` is therefore rounded
/// up to a multiple of twice the feature count. Cost is `n` times the
/// background size times the feature count evaluations of `f`.
pub fn shapley_mc<F, R>(
    f: &F,
    x: &[f64],
    background: &[Vec<f64>],
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>, ExplainError>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    check(x, background)?;
    if n == 0 {
        return Err(ExplainError::NoPermutations);
    }
    let d = x.len();
    if d == 0 {
        return Ok(Vec::new());
    }
    let mut phi = vec![0.0; d];
    let mut order: Vec<usize> = (0..d).collect();
    let blocks = n.div_ceil(2 * d);
    let mut z = vec![0.0; d];
    let mut rotated = vec![0; d];
    for _ in 0..blocks {
        order.shuffle(rng);
        for shift in 0..d {
            for (i, r) in rotated.iter_mut().enumerate() {
                *r = order[(i + shift) % d];
            }
            for reference in background {
                for pass in 0..2 {
                    z.copy_from_slice(reference);
                    let mut prev = f(&z);
                    let mut walk = |j: usize, z: &mut Vec<f64>, prev: &mut f64| {
                        z[j] = x[j];
                        let now = f(z);
                        phi[j] += now - *prev;
                        *prev = now;
                    };
                    if pass == 0 {
                        rotated.iter().for_each(|&j| walk(j, &mut z, &mut prev));
                    } else {
                        rotated.iter().rev().for_each(|&j| walk(j, &mut z, &mut prev));
                    }
                }
            }
        }
    }
    let total = (2 * blocks * d * background.len()) as f64;
    phi.iter_mut().for_each(|p| *p /= total);
    Ok(phi)
}

/// Exact Shapley values by enumerating all coalitions, with absent
/// features taken from each background row in turn.
pub fn shapley_exact<F>(f: &F, x: &[f64], background: &[Vec<f64>]) -> Result<Vec<f64>, ExplainError>
where
    F: Fn(&[f64]) -> f64,
{
    check(x, background)?;
    let d = x.len();
    if d > MAX_EXACT_FEATURES {
        return Err(ExplainError::TooManyFeatures { max: MAX_EXACT_FEATURES, got: d });
    }
    let coalitions = 1usize << d;
    let mut value = vec![0.0; coalitions];
    let mut z = vec![0.0; d];
    for (mask, v) in value.iter_mut().enumerate() {
        let mut acc = 0.0;
        for b in background {
            for j in 0..d {
                z[j] = if mask >> j & 1 == 1 { x[j] } else { b[j] };
            }
            acc += f(&z);
        }
        *v = acc / background.len() as f64;
    }
    // weight(k) = k! (d-k-1)! / d!
    let mut weight = vec![0.0; d];
    for (k, w) in weight.iter_mut().enumerate() {
        let mut x = 1.0 / d as f64;
        // 1 / (d * C(d-1, k))
        for i in 0..k {
            x *= (i + 1) as f64 / (d - 1 - i) as f64;
        }
        *w = x;
    }
    let mut phi = vec![0.0; d];
    for mask in 0..coalitions {
        let k = mask.count_ones() as usize;
        for (j, p) in phi.iter_mut().enumerate() {
            if mask >> j & 1 == 0 {
                *p += weight[k] * (value[mask | 1 << j] - value[mask]);
            }
        }
    }
    Ok(phi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalImportance {
    /// (feature index, mean |attribution|), largest first.
    pub ranking: Vec<(usize, f64)>,
    /// Per-state attribution rows, in evaluation-set order.
    pub local: Vec<Vec<f64>>,
    pub base_value: f64,
}

impl GlobalImportance {
    pub fn importance(&self, feature: usize) -> f64 {
        self.ranking.iter().find(|(j, _)| *j == feature).map_or(0.0, |(_, v)| *v)
    }

    pub fn rank(&self, feature: usize) -> Option<usize> {
        self.ranking.iter().position(|(j, _)| *j == feature)
    }
}

/// Mean absolute attribution per feature over `states`. Each state gets
/// its own random stream derived from `seed`, so results do not depend on
/// thread scheduling.
pub fn global_importance<F>(
    f: &F,
    states: &[Vec<f64>],
    background: &[Vec<f64>],
    n: usize,
    seed: u64,
) -> Result<GlobalImportance, ExplainError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if states.is_empty() {
        return Err(ExplainError::EmptyEvaluation);
    }
    let local = states
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64));
            shapley_mc(f, x, background, n, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let d = states[0].len();
    let mut ranking: Vec<(usize, f64)> = (0..d)
        .map(|j| (j, local.iter().map(|r| r[j].abs()).sum::<f64>() / local.len() as f64))
        .collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(GlobalImportance { ranking, local, base_value: base_value(f, background) })
}
