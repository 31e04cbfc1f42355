//! Decision and valuation transforms applied on top of Q-values and
//! transition probabilities.

use super::action::N_ACTIONS;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FormulaError {
    #[error("inverse temperature must be non-negative, got {0}")]
    NegativeBeta(f64),
    #[error("probability {0} is outside [0, 1]")]
    Probability(f64),
    #[error("weighting exponent must lie in (0, 1], got {0}")]
    Delta(f64),
    #[error("successor set is empty")]
    EmptySuccessors,
    #[error("{0} probabilities but {1} returns")]
    LengthMismatch(usize, usize),
}

/// Portfolio-value change between consecutive decisions.
pub fn step_reward(value_now: i64, value_prev: i64) -> i64 {
    value_now - value_prev
}

/// Index of the largest entry; ties go to the lowest index.
pub fn greedy_action(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate().skip(1) {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

/// Softmax of `beta * q`, shifted by the maximum for stability.
pub fn boltzmann_policy(q: &[f64], beta: f64) -> Result<Vec<f64>, FormulaError> {
    if !(beta >= 0.0) {
        return Err(FormulaError::NegativeBeta(beta));
    }
    if beta == 0.0 {
        return Ok(vec![1.0 / q.len() as f64; q.len()]);
    }
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = q.iter().map(|v| (beta * (v - max)).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Draw an index from a probability vector with one uniform variate.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// Loss-averse utility: `log(1+r)` for gains, `-c log(1+|r|)` for losses.
pub fn prospect_utility(r: f64, c: f64) -> f64 {
    if r > 0.0 {
        r.ln_1p()
    } else if r < 0.0 {
        -c * (-r).ln_1p()
    } else {
        0.0
    }
}

/// Inverse-S probability weighting `p^d / (p^d + (1-p)^d)^(1/d)`.
pub fn probability_weight(p: f64, delta: f64) -> Result<f64, FormulaError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(FormulaError::Probability(p));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(FormulaError::Delta(delta));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(p);
    }
    let a = p.powf(delta);
    let b = (1.0 - p).powf(delta);
    Ok(a / (a + b).powf(1.0 / delta))
}

/// Weight each probability and renormalize so the result is a
/// distribution again.
pub fn weight_and_normalize(probs: &[f64], delta: f64) -> Result<Vec<f64>, FormulaError> {
    if probs.is_empty() {
        return Err(FormulaError::EmptySuccessors);
    }
    let w = probs.iter().map(|p| probability_weight(*p, delta)).collect::<Result<Vec<_>, _>>()?;
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return Ok(probs.to_vec());
    }
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Exponential tilt `P(s') e^{omega G(s')}`, normalized.
pub fn optimism_reweight(probs: &[f64], returns: &[f64], omega: f64) -> Result<Vec<f64>, FormulaError> {
    if probs.is_empty() {
        return Err(FormulaError::EmptySuccessors);
    }
    if probs.len() != returns.len() {
        return Err(FormulaError::LengthMismatch(probs.len(), returns.len()));
    }
    if omega == 0.0 {
        return Ok(probs.to_vec());
    }
    let max = probs
        .iter()
        .zip(returns)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, g)| omega * g)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Ok(probs.to_vec());
    }
    let w: Vec<f64> = probs.iter().zip(returns).map(|(p, g)| p * (omega * g - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

pub fn exponential_discount(r: f64, gamma: f64, t: f64) -> f64 {
    r * gamma.powf(t)
}

pub fn hyperbolic_discount(r: f64, k: f64, t: f64) -> f64 {
    r / (1.0 + k * t)
}

/// Expected direction (+1 buy, -1 sell) under an action distribution.
pub fn expected_direction(probs: &[f64]) -> f64 {
    debug_assert_eq!(probs.len(), N_ACTIONS);
    let buy: f64 = probs[1..5].iter().sum();
    let sell: f64 = probs[5..9].iter().sum();
    buy - sell
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_ties_go_low() {
        assert_eq!(greedy_action(&[1.0, 2.0, 3.0, 3.0]), 2);
        assert_eq!(greedy_action(&[0.0; 9]), 0);
    }

    #[test]
    fn boltzmann_two_actions() {
        let p = boltzmann_policy(&[0.0, 2f64.ln()], 1.0).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!(boltzmann_policy(&[0.0], -1.0).is_err());
    }

    #[test]
    fn sampling_respects_cumulative_mass() {
        let p = [0.25, 0.0, 0.75];
        assert_eq!(sample_index(&p, 0.1), 0);
        assert_eq!(sample_index(&p, 0.25), 2);
        assert_eq!(sample_index(&p, 0.9999999), 2);
    }

    #[test]
    fn weighting_boundaries() {
        assert_eq!(probability_weight(0.0, 0.65).unwrap(), 0.0);
        assert_eq!(probability_weight(1.0, 0.65).unwrap(), 1.0);
        assert!(probability_weight(1.5, 0.65).is_err());
        assert!(probability_weight(0.5, 0.0).is_err());
    }

    #[test]
    fn reweight_rejects_bad_input() {
        assert_eq!(optimism_reweight(&[], &[], 1.0), Err(FormulaError::EmptySuccessors));
        assert!(optimism_reweight(&[1.0], &[0.0, 1.0], 1.0).is_err());
    }
}
