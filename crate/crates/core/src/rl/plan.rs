//! Value iteration on a tabular transition model, with the successor
//! distribution bent by the profile's bias.

use super::action::N_ACTIONS;
use super::artifact::{PolicyArtifact, TrainingManifest};
use super::discretize::Discretization;
use super::formulas::{optimism_reweight, prospect_utility, weight_and_normalize, FormulaError};
use super::profile::SubrationalityProfile;
use super::qtable::QTable;
use crate::types::TRADING_MINUTES;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("successor probabilities for state {state} action {action} sum to {total}")]
    BadDistribution { state: u32, action: usize, total: f64 },
    #[error("action {0} out of range")]
    BadAction(usize),
    #[error("value iteration did not converge in {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// One possible outcome of taking an action. `next = None` ends the episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Successor {
    pub next: Option<u32>,
    pub prob: f64,
    /// Reward in cents, before any utility transform.
    pub reward: f64,
}

/// Finite transition model over discretized states.
#[derive(Clone, Debug, Default)]
pub struct TabularModel {
    entries: BTreeMap<(u32, usize), Vec<Successor>>,
}

impl TabularModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, state: u32, action: usize, successors: Vec<Successor>) -> Result<(), PlanError> {
        if action >= N_ACTIONS {
            return Err(PlanError::BadAction(action));
        }
        let total: f64 = successors.iter().map(|s| s.prob).sum();
        let valid = !successors.is_empty()
            && successors.iter().all(|s| s.prob >= 0.0 && s.prob.is_finite() && s.reward.is_finite())
            && (total - 1.0).abs() < 1e-9;
        if !valid {
            return Err(PlanError::BadDistribution { state, action, total });
        }
        self.entries.insert((state, action), successors);
        Ok(())
    }

    pub fn get(&self, state: u32, action: usize) -> Option<&[Successor]> {
        self.entries.get(&(state, action)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, usize, &[Successor])> {
        self.entries.iter().map(|((s, a), v)| (*s, *a, v.as_slice()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    /// Number of backups for a finite horizon, one trading day by
    /// default; 0 iterates to the fixed point.
    pub horizon: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig { horizon: TRADING_MINUTES, tolerance: 1e-9, max_iterations: 100_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanReport {
    pub iterations: usize,
    /// Largest change in any Q entry on the last sweep.
    pub residual: f64,
}

/// Reward as seen by the planner.
fn planner_reward(r: f64, profile: &SubrationalityProfile) -> f64 {
    match *profile {
        SubrationalityProfile::Prospect { c, .. } => prospect_utility(r, c),
        _ => r,
    }
}

/// Successor distribution the biased agent believes in, given current
/// state values `v`.
pub fn effective_probs(
    successors: &[Successor],
    v: impl Fn(u32) -> f64,
    profile: &SubrationalityProfile,
    gamma: f64,
) -> Result<Vec<f64>, FormulaError> {
    let p: Vec<f64> = successors.iter().map(|s| s.prob).collect();
    match *profile {
        SubrationalityProfile::Prospect { delta, .. } => weight_and_normalize(&p, delta),
        SubrationalityProfile::Optimistic { omega } | SubrationalityProfile::Pessimistic { omega } => {
            let g: Vec<f64> = successors
                .iter()
                .map(|s| planner_reward(s.reward, profile) + gamma * s.next.map_or(0.0, &v))
                .collect();
            optimism_reweight(&p, &g, omega)
        }
        _ => Ok(p),
    }
}

/// Model flattened to dense state ids for fast sweeps.
struct Compiled {
    states: Vec<u32>,
    /// (state id, action, successor range).
    entries: Vec<(usize, usize, std::ops::Range<usize>)>,
    next: Vec<Option<usize>>,
    prob: Vec<f64>,
    reward: Vec<f64>,
}

fn compile(model: &TabularModel, planner: &SubrationalityProfile) -> Result<Compiled, PlanError> {
    let mut ids: BTreeMap<u32, usize> = BTreeMap::new();
    for (s, _, succ) in model.iter() {
        let n = ids.len();
        ids.entry(s).or_insert(n);
        for x in succ {
            if let Some(t) = x.next {
                let n = ids.len();
                ids.entry(t).or_insert(n);
            }
        }
    }
    let mut states = vec![0; ids.len()];
    for (s, i) in &ids {
        states[*i] = *s;
    }
    let mut c = Compiled { states, entries: Vec::new(), next: Vec::new(), prob: Vec::new(), reward: Vec::new() };
    for (s, a, succ) in model.iter() {
        let start = c.next.len();
        let p: Vec<f64> = match *planner {
            // Weighting does not depend on values, so apply it once.
            SubrationalityProfile::Prospect { delta, .. } => {
                weight_and_normalize(&succ.iter().map(|x| x.prob).collect::<Vec<_>>(), delta)?
            }
            _ => succ.iter().map(|x| x.prob).collect(),
        };
        for (x, p) in succ.iter().zip(p) {
            c.next.push(x.next.map(|t| ids[&t]));
            c.prob.push(p);
            c.reward.push(planner_reward(x.reward, planner));
        }
        c.entries.push((ids[&s], a, start..c.next.len()));
    }
    Ok(c)
}

/// Backed-up Q-table for `profile`. Bounded agents plan as rational ones.
pub fn plan_q(
    model: &TabularModel,
    profile: &SubrationalityProfile,
    gamma: f64,
    cfg: &PlanConfig,
) -> Result<(QTable, PlanReport), PlanError> {
    profile.validate().map_err(PlanError::Profile)?;
    let planner = profile.training_profile();
    let omega = planner.omega();
    let c = compile(model, &planner)?;
    let mut q = vec![[0.0; N_ACTIONS]; c.states.len()];
    let mut v = vec![0.0; c.states.len()];
    let mut g = Vec::new();
    let finite = cfg.horizon > 0;
    let sweeps = if finite { cfg.horizon } else { cfg.max_iterations };
    let mut residual = f64::INFINITY;
    let mut done = 0;
    for it in 1..=sweeps {
        residual = 0.0;
        let mut next_q = q.clone();
        for (s, a, range) in &c.entries {
            g.clear();
            g.extend(range.clone().map(|k| c.reward[k] + gamma * c.next[k].map_or(0.0, |t| v[t])));
            let p = &c.prob[range.clone()];
            let backup: f64 = if omega != 0.0 {
                optimism_reweight(p, &g, omega)?.iter().zip(&g).map(|(w, x)| w * x).sum()
            } else {
                p.iter().zip(&g).map(|(w, x)| w * x).sum()
            };
            residual = residual.max((backup - q[*s][*a]).abs());
            next_q[*s][*a] = backup;
        }
        q = next_q;
        for (vi, row) in v.iter_mut().zip(&q) {
            *vi = row[super::formulas::greedy_action(row)];
        }
        done = it;
        if !finite && residual <= cfg.tolerance {
            break;
        }
    }
    if !finite && residual > cfg.tolerance {
        return Err(PlanError::NotConverged { iterations: sweeps, residual });
    }
    let mut source = vec![false; c.states.len()];
    for (s, _, _) in &c.entries {
        source[*s] = true;
    }
    let mut table = QTable::new();
    for (i, row) in q.iter().enumerate() {
        if source[i] {
            *table.row_mut(c.states[i]) = *row;
        }
    }
    Ok((table, PlanReport { iterations: done, residual }))
}

/// Plan on `model` and package the result as an acting policy.
pub fn plan_with_model(
    model: &TabularModel,
    discretization: &Discretization,
    profile: SubrationalityProfile,
    rational_gamma: f64,
    cfg: &PlanConfig,
    manifest: TrainingManifest,
) -> Result<PolicyArtifact, PlanError> {
    let gamma = profile.discount(rational_gamma);
    let (q, _) = plan_q(model, &profile, gamma, cfg)?;
    Ok(PolicyArtifact { profile, discretization: discretization.clone(), q, manifest })
}
