//! How closely the internal model reproduces the simulator, variable by
//! variable, on held-out random-action days.

use super::{day_transitions, InternalModel, TransitionSample};
use crate::metrics::StateVector;
use crate::rl::train::learning_reward;
use crate::sim::{Controller, RandomPolicy, SimError, Simulation};
use crate::types::mix_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;
use std::sync::Arc;

/// Variables compared, in report order.
pub const TRACKED: [&str; 10] = [
    "quote_volume",
    "spread",
    "depth",
    "holdings",
    "cash",
    "trade_volume",
    "traded_price",
    "momentum_30",
    "volatility_30",
    "reward",
];

fn tracked_values(s: &StateVector, reward_cents: f64) -> [f64; 10] {
    [
        s.quote_volume,
        s.spread,
        s.depth,
        s.holdings as f64,
        s.cash as f64,
        s.trade_volume,
        s.last_price as f64,
        s.momentum_30,
        s.volatility_30,
        reward_cents,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidelityRow {
    pub variable: String,
    pub emd: f64,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FidelityReport {
    pub rows: Vec<FidelityRow>,
    pub transitions: usize,
}

impl FidelityReport {
    pub fn get(&self, variable: &str) -> Option<&FidelityRow> {
        self.rows.iter().find(|r| r.variable == variable)
    }

    pub fn write_csv<W: Write>(&self, w: W, manifest_hash: &str) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["variable", "emd", "rmse", "manifest_hash"])?;
        for r in &self.rows {
            out.write_record([r.variable.as_str(), &r.emd.to_string(), &r.rmse.to_string(), manifest_hash])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn pooled_range(a: &[f64], b: &[f64]) -> f64 {
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if hi > lo {
        hi - lo
    } else {
        0.0
    }
}

/// 1-D Wasserstein distance between two empirical samples, after scaling
/// both by the min-max range of the pooled values.
pub fn emd_1d(a: &[f64], b: &[f64]) -> f64 {
    let range = pooled_range(a, b);
    if a.is_empty() || b.is_empty() || range == 0.0 {
        return 0.0;
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    // Integrate |F_a - F_b| between consecutive pooled points.
    let mut pts: Vec<f64> = xa.iter().chain(&xb).copied().collect();
    pts.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut total = 0.0;
    for w in pts.windows(2) {
        while ia < xa.len() && xa[ia] <= w[0] {
            ia += 1;
        }
        while ib < xb.len() && xb[ib] <= w[0] {
            ib += 1;
        }
        total += (ia as f64 / na - ib as f64 / nb).abs() * (w[1] - w[0]);
    }
    total / range
}

/// Paired root-mean-square error scaled by the pooled min-max range.
pub fn normalized_rmse(truth: &[f64], model: &[f64]) -> f64 {
    assert_eq!(truth.len(), model.len(), "paired samples");
    let range = pooled_range(truth, model);
    if truth.is_empty() || range == 0.0 {
        return 0.0;
    }
    let mse = truth.iter().zip(model).map(|(t, m)| (t - m).powi(2)).sum::<f64>() / truth.len() as f64;
    mse.sqrt() / range
}

/// Compare one-step model predictions with the simulator on held-out
/// random-action days. The model sees the true state and the action the
/// simulator's investor took; EMD uses a sampled next state, RMSE the
/// mixture mean.
pub fn evaluate_fidelity<F>(model: &InternalModel, mut make_day: F, days: usize, seed: u64) -> Result<FidelityReport, SimError>
where
    F: FnMut(usize, u64, Vec<Controller>) -> Result<Simulation, SimError>,
{
    let mut samples: Vec<TransitionSample> = Vec::new();
    for d in 0..days {
        let sim = make_day(d, mix_seed(seed, d as u64), vec![Controller::Policy(Arc::new(RandomPolicy))])?;
        samples.extend(day_transitions(&sim.run_day()?.investors[0]));
    }
    Ok(compare(model, &samples, seed))
}

/// Fidelity on an already collected set of transitions.
pub fn compare(model: &InternalModel, samples: &[TransitionSample], seed: u64) -> FidelityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x6669_64));
    let k = TRACKED.len();
    let mut truth = vec![Vec::with_capacity(samples.len()); k];
    let mut drawn = vec![Vec::with_capacity(samples.len()); k];
    let mut mean = vec![Vec::with_capacity(samples.len()); k];
    for t in samples {
        let pv = t.state.portfolio_value();
        let tv = tracked_values(&t.next, learning_reward(t.reward));
        let sampled = model.sample_next(&t.state, t.action, &mut rng);
        let sv = tracked_values(&sampled, learning_reward(sampled.portfolio_value() - pv));
        let expected = model.mean_next(&t.state, t.action);
        let mv = tracked_values(&expected, learning_reward(expected.portfolio_value() - pv));
        for j in 0..k {
            truth[j].push(tv[j]);
            drawn[j].push(sv[j]);
            mean[j].push(mv[j]);
        }
    }
    let rows = (0..k)
        .map(|j| FidelityRow {
            variable: TRACKED[j].to_string(),
            emd: emd_1d(&truth[j], &drawn[j]),
            rmse: normalized_rmse(&truth[j], &mean[j]),
        })
        .collect();
    FidelityReport { rows, transitions: samples.len() }
}
