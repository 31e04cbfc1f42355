//! The investor's learned picture of market dynamics: an ensemble that
//! predicts the next observation from the current one and an action,
//! turned into a tabular model for biased planning.

pub mod ensemble;
pub mod fidelity;

pub use ensemble::{Ensemble, EnsembleConfig, FitError, Mixture};
pub use fidelity::{emd_1d, evaluate_fidelity, normalized_rmse, FidelityReport, FidelityRow, TRACKED};

use crate::metrics::{StateVector, N_FEATURES};
use crate::rl::action::{ActionSpec, Direction, N_ACTIONS, ORDER_SIZE};
use crate::rl::discretize::Discretization;
use crate::rl::plan::{Successor, TabularModel};
use crate::rl::train::learning_reward;
use crate::sim::{Controller, RandomPolicy, SimError, Simulation};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// One observed `(s, a, s')` step with its reward in price units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionSample {
    pub state: StateVector,
    pub action: usize,
    pub next: StateVector,
    pub reward: i64,
}

/// Run `days` days with a uniformly random investor and record every
/// decision-to-decision transition, the last one ending at the close.
pub fn collect_transitions<F>(mut make_day: F, days: usize, seed: u64) -> Result<Vec<TransitionSample>, SimError>
where
    F: FnMut(usize, u64, Vec<Controller>) -> Result<Simulation, SimError>,
{
    let mut out = Vec::new();
    for d in 0..days {
        let sim = make_day(d, crate::types::mix_seed(seed, d as u64), vec![Controller::Policy(Arc::new(RandomPolicy))])?;
        let log = sim.run_day()?;
        out.extend(day_transitions(&log.investors[0]));
    }
    Ok(out)
}

/// Transitions of one logged day.
pub fn day_transitions(log: &crate::sim::InvestorLog) -> Vec<TransitionSample> {
    let mut out = Vec::with_capacity(log.steps.len());
    for (i, step) in log.steps.iter().enumerate() {
        let next = match log.steps.get(i + 1) {
            Some(n) => n.state.clone(),
            None => match &log.final_state {
                Some(s) => s.clone(),
                None => continue,
            },
        };
        out.push(TransitionSample { state: step.state.clone(), action: step.action, next, reward: step.reward });
    }
    out
}

/// Number of modelled outputs: the feature deltas plus the mark change.
pub const N_TARGETS: usize = N_FEATURES + 1;

/// Network input: features followed by a one-hot action.
pub fn model_input(s: &StateVector, action: usize) -> Vec<f64> {
    let mut x = s.features().to_vec();
    x.extend((0..N_ACTIONS).map(|a| if a == action { 1.0 } else { 0.0 }));
    x
}

fn model_target(s: &StateVector, next: &StateVector) -> Vec<f64> {
    let (a, b) = (s.features(), next.features());
    let mut y: Vec<f64> = b.iter().zip(&a).map(|(n, c)| n - c).collect();
    y.push((next.last_price - s.last_price) as f64);
    y
}

/// Ensemble over observation deltas, with the bookkeeping needed to turn
/// a raw draw into a consistent next observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InternalModel {
    pub ensemble: Ensemble,
}

impl InternalModel {
    pub fn fit(samples: &[TransitionSample], cfg: &EnsembleConfig) -> Result<InternalModel, FitError> {
        let x: Vec<Vec<f64>> = samples.iter().map(|t| model_input(&t.state, t.action)).collect();
        let y: Vec<Vec<f64>> = samples.iter().map(|t| model_target(&t.state, &t.next)).collect();
        Ok(InternalModel { ensemble: Ensemble::fit(&x, &y, cfg)? })
    }

    /// Mixture over target deltas.
    pub fn predict(&self, s: &StateVector, action: usize) -> Mixture {
        self.ensemble.predict(&model_input(s, action))
    }

    /// Next observation built from the mixture mean.
    pub fn mean_next(&self, s: &StateVector, action: usize) -> StateVector {
        apply_delta(s, action, &self.predict(s, action).mean())
    }

    /// Random next observation: one member, one Gaussian draw, clamped.
    pub fn sample_next<R: Rng + ?Sized>(&self, s: &StateVector, action: usize, rng: &mut R) -> StateVector {
        apply_delta(s, action, &self.ensemble.sample(&model_input(s, action), rng))
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<InternalModel> {
        serde_json::from_str(text)
    }
}

/// Add a predicted delta to `s` and project onto what the action allows.
///
/// Only the order placed by `action` can fill before the next decision,
/// so holdings move by 0..=2 shares in the order's direction and cash
/// moves by the filled shares times the order's limit price.
pub fn apply_delta(s: &StateVector, action: usize, delta: &[f64]) -> StateVector {
    debug_assert_eq!(delta.len(), N_TARGETS);
    let base = s.features();
    let mut x: Vec<f64> = base.iter().zip(delta).map(|(b, d)| b + d).collect();
    let spec = ActionSpec::from_index(action).expect("valid action");
    let size = ORDER_SIZE as f64;
    let filled = match spec.direction {
        Direction::Hold => 0.0,
        Direction::Buy => delta[1].round().clamp(0.0, size),
        Direction::Sell => (-delta[1]).round().clamp(0.0, size),
    };
    let sign = match spec.direction {
        Direction::Sell => -1.0,
        _ => 1.0,
    };
    x[1] = base[1] + sign * filled;
    let limit = spec.limit_order(s.mid).map_or(0, |(_, p)| p.0) as f64;
    x[0] = base[0] - sign * filled * limit;
    // Ratios stay positive; sizes, counts and dispersions stay non-negative.
    for j in [2, 3, 4] {
        x[j] = x[j].max(1e-9);
    }
    for j in 5..N_FEATURES {
        if j != 13 {
            x[j] = x[j].max(0.0);
        }
    }
    let mut next = s.with_features(&x);
    next.last_price = (s.last_price as f64 + delta[N_FEATURES]).round().max(1.0) as i64;
    next.mid = s.mid + delta[N_FEATURES];
    next
}

/// Tabular model over discretized states, estimated by sampling the
/// ensemble from observed states in each cell.
#[derive(Clone, Debug)]
pub struct DiscretizedModel {
    pub model: TabularModel,
    /// Successor cells with no observed source state; they were given a
    /// zero-reward self-loop.
    pub flagged: Vec<u32>,
}

pub fn discretize_model<R: Rng + ?Sized>(
    model: &InternalModel,
    disc: &Discretization,
    states: &[StateVector],
    samples_per_cell: usize,
    rng: &mut R,
) -> DiscretizedModel {
    let mut cells: BTreeMap<u32, Vec<&StateVector>> = BTreeMap::new();
    for s in states {
        cells.entry(disc.index(s)).or_default().push(s);
    }
    let mut table = TabularModel::new();
    let mut reached: BTreeMap<u32, ()> = BTreeMap::new();
    let n = samples_per_cell.max(1);
    for (&cell, members) in &cells {
        for a in 0..N_ACTIONS {
            let mut counts: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
            for _ in 0..n {
                let s = members[rng.random_range(0..members.len())];
                let next = model.sample_next(s, a, rng);
                let r = learning_reward(next.portfolio_value() - s.portfolio_value());
                let e = counts.entry(disc.index(&next)).or_insert((0, 0.0));
                e.0 += 1;
                e.1 += r;
            }
            let succ: Vec<Successor> = counts
                .iter()
                .map(|(&next, &(k, total))| Successor { next: Some(next), prob: k as f64 / n as f64, reward: total / k as f64 })
                .collect();
            for s in &succ {
                reached.insert(s.next.expect("non-terminal"), ());
            }
            table.insert(cell, a, succ).expect("empirical frequencies sum to one");
        }
    }
    let mut flagged = Vec::new();
    for &cell in reached.keys() {
        if !cells.contains_key(&cell) {
            flagged.push(cell);
            for a in 0..N_ACTIONS {
                table
                    .insert(cell, a, vec![Successor { next: Some(cell), prob: 1.0, reward: 0.0 }])
                    .expect("point mass");
            }
        }
    }
    if !flagged.is_empty() {
        log::warn!("{} successor cells were never observed; treated as absorbing", flagged.len());
    }
    DiscretizedModel { model: table, flagged }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> StateVector {
        StateVector {
            cash: 2_000_000,
            holdings: 4,
            last_price: 200_000,
            mid: 200_000.5,
            momentum_1: 1.0,
            momentum_10: 1.0,
            momentum_30: 1.0,
            spread: 1.0,
            depth: 2.0,
            volatility_30: 3.0,
            quote_open_orders: 1.0,
            quote_mean_distance: 1.0,
            quote_volume: 2.0,
            trade_volume: 10.0,
            trade_mean_distance: 1.0,
            trade_net_volume: 0.0,
        }
    }

    #[test]
    fn clamping_respects_action() {
        let s = state();
        let mut d = vec![0.0; N_TARGETS];
        d[1] = 7.3;
        d[0] = 12345.0;
        let buy = apply_delta(&s, 1, &d);
        assert_eq!(buy.holdings, 6);
        // Buy one unit below mid at ceil(200000.5 - 1) = 200000.
        assert_eq!(buy.cash, 2_000_000 - 2 * 200_000);
        let hold = apply_delta(&s, 0, &d);
        assert_eq!((hold.holdings, hold.cash), (4, 2_000_000));
        let sell = apply_delta(&s, 5, &d);
        assert_eq!(sell.holdings, 4);
        d[1] = -1.2;
        let sell = apply_delta(&s, 8, &d);
        assert_eq!(sell.holdings, 3);
        assert_eq!(sell.cash, 2_000_000 + 200_004);
        d[5] = -10.0;
        assert_eq!(apply_delta(&s, 0, &d).spread, 0.0);
    }
}
