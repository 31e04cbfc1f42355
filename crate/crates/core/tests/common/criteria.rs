//! Checks shared by the focused integration tests and the acceptance
//! runner. Each returns named clauses so a report can say which part held.

use super::*;
use rand::Rng;
use std::time::Instant;
use sublob::explain::{shapley_exact, shapley_mc};
use sublob::metrics::StateVector;
use sublob::model::{Ensemble, EnsembleConfig};
use sublob::rl::{
    boltzmann_policy, exponential_discount, greedy_action, hyperbolic_discount, optimism_reweight, plan_q,
    probability_weight, prospect_utility, weight_and_normalize, BinRule, Discretization, PlanConfig, PolicyArtifact,
    QTable, Successor, SubrationalityProfile, TabularModel, TrainingManifest, N_ACTIONS,
};
use sublob::sim::InvestorPolicy;

#[derive(Clone, Debug)]
pub struct Check {
    pub clauses: Vec<(String, bool)>,
    pub detail: Vec<String>,
}

impl Check {
    pub fn new() -> Self {
        Check { clauses: Vec::new(), detail: Vec::new() }
    }

    pub fn clause(&mut self, name: impl Into<String>, ok: bool) -> &mut Self {
        self.clauses.push((name.into(), ok));
        self
    }

    pub fn note(&mut self, s: impl Into<String>) -> &mut Self {
        self.detail.push(s.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|(_, ok)| *ok)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.clauses.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.as_str()).collect()
    }

    /// Panics with every failed clause and the notes.
    pub fn assert(&self) {
        assert!(self.passed(), "failed {:?}; {}", self.failed(), self.detail.join("; "));
    }
}

// ---------------------------------------------------------------- matching

pub fn lob_equivalence(streams: usize, max_len: usize, seed: u64) -> Check {
    let start = Instant::now();
    let mut rng = seeded(seed);
    let mut c = Check::new();
    let (mut events, mut trades) = (0usize, 0usize);
    let mut first_error = None;
    for k in 0..streams {
        let len = rng.random_range(1..=max_len);
        let stream = random_stream(mix(seed, k as u64), len);
        events += len;
        match compare_stream(&stream) {
            Ok(t) => trades += t,
            Err(e) => {
                first_error.get_or_insert(format!("stream {k}: {e}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    c.clause("identical trades and final book", first_error.is_none());
    c.clause("runtime <= 120 s", secs <= 120.0);
    c.note(format!("{streams} streams, {events} events, {trades} trades, {secs:.1} s"));
    if let Some(e) = first_error {
        c.note(e);
    }
    c
}

fn mix(a: u64, b: u64) -> u64 {
    sublob::types::mix_seed(a, b)
}

// ---------------------------------------------------------------- formulas

pub fn formula_suite() -> Check {
    let tol = 1e-9;
    let close = |a: f64, b: f64| rel_close(a, b, tol);
    let mut c = Check::new();

    let p = boltzmann_policy(&[0.0, 2f64.ln()], 1.0).unwrap();
    let uni = boltzmann_policy(&[3.0, -1.0, 0.5, 7.0, 2.0, 2.0, 0.0, 1.0, 9.0], 0.0).unwrap();
    let hot = boltzmann_policy(&[0.0, 1.0, 0.5], 1e3).unwrap();
    c.clause(
        "boltzmann examples",
        close(p[0], 1.0 / 3.0)
            && close(p[1], 2.0 / 3.0)
            && uni.iter().all(|x| close(*x, 1.0 / 9.0))
            && hot[1] >= 1.0 - 1e-6
            && boltzmann_policy(&[1.0], -0.1).is_err(),
    );

    let l101 = 101f64.ln();
    c.clause(
        "prospect examples",
        prospect_utility(0.0, 2.5) == 0.0
            && close(prospect_utility(100.0, 2.5), l101)
            && close(prospect_utility(-100.0, 2.5), -2.5 * l101)
            && (prospect_utility(100.0, 2.5) - 4.6151).abs() < 1e-4
            && (prospect_utility(-100.0, 2.5) + 11.5378).abs() < 1e-4,
    );

    let w = |p: f64, d: f64| probability_weight(p, d).unwrap();
    let w_ref = |p: f64, d: f64| p.powf(d) / (p.powf(d) + (1.0 - p).powf(d)).powf(1.0 / d);
    c.clause(
        "probability weight examples",
        w(0.0, 0.65) == 0.0
            && w(1.0, 0.65) == 1.0
            && (1..100).all(|i| close(w(i as f64 / 100.0, 1.0), i as f64 / 100.0))
            && close(w(0.1, 0.65), w_ref(0.1, 0.65))
            && (w(0.1, 0.65) - 0.1787).abs() < 1e-4
            && close(w(0.05, 0.65), w_ref(0.05, 0.65))
            && probability_weight(1.1, 0.65).is_err()
            && probability_weight(-0.1, 0.65).is_err(),
    );

    let e = std::f64::consts::E;
    let (lo, hi) = (1.0 / (1.0 + e), e / (1.0 + e));
    let up = optimism_reweight(&[0.5, 0.5], &[0.0, 1.0], 1.0).unwrap();
    let down = optimism_reweight(&[0.5, 0.5], &[0.0, 1.0], -1.0).unwrap();
    let same = optimism_reweight(&[0.2, 0.3, 0.5], &[4.0, -1.0, 2.0], 0.0).unwrap();
    c.clause(
        "optimism examples",
        close(up[0], lo)
            && close(up[1], hi)
            && close(down[0], hi)
            && close(down[1], lo)
            && (up[1] - 0.7311).abs() < 1e-4
            && same == vec![0.2, 0.3, 0.5]
            && optimism_reweight(&[], &[], 1.0).is_err(),
    );

    c.clause(
        "discount examples",
        (0..500).all(|t| exponential_discount(7.5, 1.0, t as f64) == 7.5)
            && exponential_discount(100.0, 0.3, 0.0) == 100.0
            && close(exponential_discount(100.0, 0.99, 390.0), 100.0 * (390.0 * 0.99f64.ln()).exp())
            && (exponential_discount(100.0, 0.99, 390.0) - 1.98).abs() < 0.005
            && hyperbolic_discount(100.0, 0.0, 390.0) == 100.0
            && close(hyperbolic_discount(100.0, 0.01, 390.0), 100.0 / 4.9)
            && close(hyperbolic_discount(10_000.0, 0.1, 0.0), 10_000.0)
            && close(hyperbolic_discount(11_000.0, 0.1, 7.0), 11_000.0 / 1.7)
            && close(hyperbolic_discount(10_000.0, 0.1, 365.0), 10_000.0 / 37.5)
            && close(hyperbolic_discount(11_000.0, 0.1, 372.0), 11_000.0 / 38.2),
    );
    // Preference reversal: hyperbolic flips under a common delay, exponential never does.
    let near = hyperbolic_discount(10_000.0, 0.1, 0.0) > hyperbolic_discount(11_000.0, 0.1, 7.0);
    let far = hyperbolic_discount(10_000.0, 0.1, 365.0) < hyperbolic_discount(11_000.0, 0.1, 372.0);
    let exp_consistent = [0.5, 0.9, 0.99, 0.999].iter().all(|&g| {
        let a = exponential_discount(10_000.0, g, 0.0) > exponential_discount(11_000.0, g, 7.0);
        let b = exponential_discount(10_000.0, g, 365.0) > exponential_discount(11_000.0, g, 372.0);
        a == b
    });
    c.clause("preference reversal", near && far && exp_consistent);

    let props = formula_properties(100, 7);
    c.clause("property suites", props.is_ok());
    if let Err(e) = props {
        c.note(e);
    }
    c
}

/// Randomised property checks over `n` instances each.
pub fn formula_properties(n: usize, seed: u64) -> Result<(), String> {
    let mut rng = seeded(seed);
    for i in 0..n {
        let k = rng.random_range(1..=N_ACTIONS);
        let q: Vec<f64> = (0..k).map(|_| rng.random_range(-500.0..500.0)).collect();
        let beta = [0.0, rng.random_range(0.0..5.0), 1e3][i % 3];
        let p = boltzmann_policy(&q, beta).map_err(|e| e.to_string())?;
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 || p.iter().any(|x| *x < 0.0) {
            return Err(format!("boltzmann not normalised: {q:?} beta {beta}"));
        }
        for a in 0..k {
            for b in 0..k {
                if q[a] > q[b] && p[a] < p[b] {
                    return Err(format!("boltzmann not monotone: {q:?}"));
                }
            }
        }

        let cc = rng.random_range(1.01..5.0);
        let r = rng.random_range(1e-3..1e4);
        let (fp, fm) = (prospect_utility(r, cc), prospect_utility(-r, cc));
        if !rel_close(fm.abs(), cc * fp, 1e-12) || !(fp > 0.0 && fm < 0.0) {
            return Err(format!("prospect asymmetry at r={r} c={cc}"));
        }
        if prospect_utility(r * 1.5, cc) <= fp || prospect_utility(-r * 1.5, cc) >= fm {
            return Err(format!("prospect not monotone at r={r}"));
        }

        let d = rng.random_range(0.3..=1.0);
        let (p1, p2) = {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            (a.min(b), a.max(b))
        };
        let (w1, w2) = (probability_weight(p1, d).unwrap(), probability_weight(p2, d).unwrap());
        if w1 > w2 + 1e-15 || !(0.0..=1.0).contains(&w1) {
            return Err(format!("weight not monotone at {p1} {p2} delta {d}"));
        }
        let probs: Vec<f64> = {
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
            let t: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / t).collect()
        };
        let wn = weight_and_normalize(&probs, d).unwrap();
        if (wn.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err("weighted distribution not normalised".into());
        }

        let g: Vec<f64> = (0..k).map(|_| rng.random_range(-20.0..20.0)).collect();
        let mut prev = f64::NEG_INFINITY;
        for step in -40..=40 {
            let omega = step as f64 * 0.125;
            let pw = optimism_reweight(&probs, &g, omega).unwrap();
            if (pw.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err("tilted distribution not normalised".into());
            }
            let ev: f64 = pw.iter().zip(&g).map(|(a, b)| a * b).sum();
            if ev < prev - 1e-9 {
                return Err(format!("tilted expectation fell at omega {omega}: {prev} -> {ev}"));
            }
            prev = ev;
        }
    }
    let w = |p: f64| probability_weight(p, 0.65).unwrap();
    if !(w(0.1) > 0.1 && w(0.9) < 0.9) {
        return Err("weighting does not cross the diagonal".into());
    }
    Ok(())
}

// ---------------------------------------------------------------- planning

fn succ(next: Option<u32>, prob: f64, reward: f64) -> Successor {
    Successor { next, prob, reward }
}

/// Independent biased value iteration on an explicit MDP. Actions missing
/// from a state keep Q = 0, as with the planner's zero-initialised rows.
pub fn biased_value_iteration(mdp: &Mdp, gamma: f64, profile: &SubrationalityProfile, sweeps: usize) -> Vec<Vec<f64>> {
    let n = mdp.len();
    let mut v = vec![0.0; n];
    let mut q: Vec<Vec<f64>> = vec![vec![]; n];
    for _ in 0..sweeps {
        for s in 0..n {
            q[s] = mdp[s]
                .iter()
                .map(|succs| {
                    let g: Vec<f64> = succs
                        .iter()
                        .map(|&(_, r, nx)| {
                            let r = match profile {
                                SubrationalityProfile::Prospect { c, .. } => {
                                    if r > 0.0 {
                                        (1.0 + r).ln()
                                    } else if r < 0.0 {
                                        -c * (1.0 - r).ln()
                                    } else {
                                        0.0
                                    }
                                }
                                _ => r,
                            };
                            r + gamma * nx.map_or(0.0, |j| v[j])
                        })
                        .collect();
                    let p: Vec<f64> = match profile {
                        SubrationalityProfile::Prospect { delta, .. } => {
                            let d = *delta;
                            let w: Vec<f64> = succs
                                .iter()
                                .map(|&(p, _, _)| p.powf(d) / (p.powf(d) + (1.0 - p).powf(d)).powf(1.0 / d))
                                .collect();
                            let t: f64 = w.iter().sum();
                            w.iter().map(|x| x / t).collect()
                        }
                        SubrationalityProfile::Optimistic { omega } | SubrationalityProfile::Pessimistic { omega } => {
                            let w: Vec<f64> = succs.iter().zip(&g).map(|(&(p, _, _), x)| p * (omega * x).exp()).collect();
                            let t: f64 = w.iter().sum();
                            w.iter().map(|x| x / t).collect()
                        }
                        _ => succs.iter().map(|s| s.0).collect(),
                    };
                    p.iter().zip(&g).map(|(a, b)| a * b).sum()
                })
                .collect();
        }
        v = q
            .iter()
            .map(|row| {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if row.len() < N_ACTIONS {
                    m.max(0.0)
                } else {
                    m
                }
            })
            .collect();
    }
    q
}

pub fn random_mdp(rng: &mut ChaCha8Rng) -> Mdp {
    let n = rng.random_range(3..=5);
    (0..n)
        .map(|_| {
            (0..N_ACTIONS)
                .map(|_| {
                    let k = rng.random_range(1..=3);
                    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
                    let t: f64 = raw.iter().sum();
                    raw.iter()
                        .map(|p| {
                            let next = if rng.random_bool(0.15) { None } else { Some(rng.random_range(0..n)) };
                            (p / t, rng.random_range(-3.0..3.0), next)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn to_model(mdp: &Mdp) -> TabularModel {
    let mut m = TabularModel::new();
    for (s, acts) in mdp.iter().enumerate() {
        for (a, succs) in acts.iter().enumerate() {
            let v = succs.iter().map(|&(p, r, nx)| succ(nx.map(|j| j as u32), p, r)).collect();
            m.insert(s as u32, a, v).expect("valid toy distribution");
        }
    }
    m
}

fn max_gap(q: &QTable, oracle: &[Vec<f64>]) -> f64 {
    let mut gap: f64 = 0.0;
    for (s, row) in oracle.iter().enumerate() {
        for (a, v) in row.iter().enumerate() {
            gap = gap.max((q.get(s as u32, a) - v).abs());
        }
    }
    gap
}

pub fn planning_oracle(instances: usize, seed: u64) -> Check {
    let mut c = Check::new();
    let mut rng = seeded(seed);
    let fixed = PlanConfig { horizon: 0, tolerance: 1e-10, max_iterations: 100_000 };
    let horizon = 60;
    let finite = PlanConfig { horizon, ..PlanConfig::default() };
    let gamma = 0.9;
    let profiles = [
        SubrationalityProfile::Rational,
        SubrationalityProfile::Prospect { c: 2.5, delta: 0.65 },
        SubrationalityProfile::Optimistic { omega: 1.0 },
        SubrationalityProfile::Pessimistic { omega: -1.0 },
    ];
    let mut worst = [0.0f64; 4];
    let mut record = |i: usize, c: &mut Check, r: Result<(QTable, sublob::rl::PlanReport), sublob::rl::PlanError>, oracle: &[Vec<f64>]| {
        match r {
            Ok((q, _)) => worst[i] = worst[i].max(max_gap(&q, oracle)),
            Err(e) => {
                c.note(format!("{}: {e}", profiles[i]));
                worst[i] = f64::INFINITY
            }
        }
    };
    for _ in 0..instances {
        let mdp = random_mdp(&mut rng);
        let model = to_model(&mdp);
        for (i, prof) in profiles.iter().enumerate() {
            // Same number of backups on both sides.
            let oracle = biased_value_iteration(&mdp, gamma, prof, horizon);
            record(i, &mut c, plan_q(&model, prof, gamma, &finite), &oracle);
            // The tilted backup is not a contraction, so only the unbiased
            // and weighted operators are run to their fixed point.
            if prof.omega() == 0.0 {
                let oracle = biased_value_iteration(&mdp, gamma, prof, 2000);
                record(i, &mut c, plan_q(&model, prof, gamma, &fixed), &oracle);
            }
        }
        // The rational fixed point also against the plain oracle, which
        // knows nothing of bias.
        let plain = value_iteration(&mdp, gamma, 2000);
        record(0, &mut c, plan_q(&model, &SubrationalityProfile::Rational, gamma, &fixed), &plain);
    }
    for (i, name) in ["rational", "prospect delta 0.65", "optimistic omega 1", "pessimistic omega -1"].iter().enumerate() {
        c.clause(format!("{name} matches value iteration"), worst[i] <= 1e-6);
        c.note(format!("{name} max |dQ| {:.2e}", worst[i]));
    }
    let cfg = fixed;

    // Two steps: from 0 an even chance of a state worth 0 or 1.
    let mut m = TabularModel::new();
    m.insert(0, 0, vec![succ(Some(1), 0.5, 0.0), succ(Some(2), 0.5, 0.0)]).unwrap();
    m.insert(1, 0, vec![succ(None, 1.0, 0.0)]).unwrap();
    m.insert(2, 0, vec![succ(None, 1.0, 1.0)]).unwrap();
    let two_step = |omega: f64| {
        let t = (omega * gamma).exp();
        gamma * t / (1.0 + t)
    };
    let q2 = |p: SubrationalityProfile| plan_q(&m, &p, gamma, &cfg).unwrap().0.get(0, 0);
    c.clause(
        "hand backup two-step omega +-1",
        (q2(SubrationalityProfile::Optimistic { omega: 1.0 }) - two_step(1.0)).abs() <= 1e-6
            && (q2(SubrationalityProfile::Pessimistic { omega: -1.0 }) - two_step(-1.0)).abs() <= 1e-6,
    );

    // Hand backups on a one-step two-successor gamble.
    let mut m = TabularModel::new();
    m.insert(0, 0, vec![succ(None, 0.5, 0.0), succ(None, 0.5, 1.0)]).unwrap();
    let e = std::f64::consts::E;
    let q = |p: SubrationalityProfile| plan_q(&m, &p, gamma, &cfg).unwrap().0.get(0, 0);
    let opt = q(SubrationalityProfile::Optimistic { omega: 1.0 });
    let pes = q(SubrationalityProfile::Pessimistic { omega: -1.0 });
    c.clause("hand backup omega +1", (opt - e / (1.0 + e)).abs() <= 1e-6);
    c.clause("hand backup omega -1", (pes - 1.0 / (1.0 + e)).abs() <= 1e-6);

    // A rare jackpot: 0.1 for sure against 1.9 with probability 0.05.
    let mut m = TabularModel::new();
    m.insert(0, 0, vec![succ(None, 1.0, 0.1)]).unwrap();
    m.insert(0, 1, vec![succ(None, 0.05, 1.9), succ(None, 0.95, 0.0)]).unwrap();
    let plain = plan_q(&m, &SubrationalityProfile::Rational, gamma, &cfg).unwrap().0;
    let pros = plan_q(&m, &SubrationalityProfile::Prospect { c: 2.5, delta: 0.65 }, gamma, &cfg).unwrap().0;
    let d = 0.65f64;
    let wr = |p: f64| p.powf(d) / (p.powf(d) + (1.0 - p).powf(d)).powf(1.0 / d);
    let hand = wr(0.05) / (wr(0.05) + wr(0.95)) * (2.9f64).ln();
    c.clause(
        "hand backup delta 0.65",
        (pros.get(0, 1) - hand).abs() <= 1e-6
            && (pros.get(0, 0) - 1.1f64.ln()).abs() <= 1e-6
            && greedy_action(&plain.row(0)) == 0
            && greedy_action(&pros.row(0)) == 1,
    );
    c
}

// ---------------------------------------------------------------- boltzmann

pub fn blank_state(holdings: i64) -> StateVector {
    StateVector {
        cash: 0,
        holdings,
        last_price: 200_000,
        mid: 200_000.0,
        momentum_1: 1.0,
        momentum_10: 1.0,
        momentum_30: 1.0,
        spread: 2.0,
        depth: 10.0,
        volatility_30: 0.0,
        quote_open_orders: 0.0,
        quote_mean_distance: 0.0,
        quote_volume: 0.0,
        trade_volume: 0.0,
        trade_mean_distance: 0.0,
        trade_net_volume: 0.0,
    }
}

/// A one-state policy over `row`.
pub fn single_row_policy(row: [f64; N_ACTIONS], profile: SubrationalityProfile) -> (PolicyArtifact, StateVector) {
    let disc = Discretization::calibrate(&[BinRule::edges("holdings", &[0.0])], &[]).unwrap();
    let s = blank_state(0);
    let mut q = QTable::new();
    *q.row_mut(disc.index(&s)) = row;
    let manifest = TrainingManifest { config_hash: String::new(), episodes: 0, seed: 0 };
    (PolicyArtifact { profile, discretization: disc, q, manifest }, s)
}

/// Empirical action frequencies of an acting policy at `s`.
pub fn action_counts(art: &PolicyArtifact, s: &StateVector, draws: usize, seed: u64) -> [usize; N_ACTIONS] {
    let mut rng = seeded(seed);
    let mut counts = [0; N_ACTIONS];
    for _ in 0..draws {
        counts[art.act(s, &mut rng)] += 1;
    }
    counts
}

/// Acting-policy limits of the softmax on `art`'s table at `s`.
pub fn boltzmann_limits(art: &PolicyArtifact, s: &StateVector, seed: u64) -> Check {
    let mut c = Check::new();
    let draws = 10_000;
    let flat = art.with_profile(SubrationalityProfile::Bounded { beta: 0.0 });
    let counts = action_counts(&flat, s, draws, seed);
    let expect = draws as f64 / N_ACTIONS as f64;
    let chi2: f64 = counts.iter().map(|&k| (k as f64 - expect).powi(2) / expect).sum();
    let p = chi2_sf(chi2, N_ACTIONS - 1);
    c.clause("beta 0 uniform (chi-square p > 0.01)", p > 0.01);
    c.note(format!("beta 0 counts {counts:?}, chi2 {chi2:.2}, p {p:.3}"));

    let row = art.q.row(art.state_index(s));
    let best = greedy_action(&row);
    let sharp = art.with_profile(SubrationalityProfile::Bounded { beta: 1e3 });
    let counts = action_counts(&sharp, s, draws, mix(seed, 1));
    let freq = counts[best] as f64 / draws as f64;
    c.clause("beta 1000 argmax frequency >= 0.999", freq >= 0.999);
    c.note(format!("beta 1000 argmax {best} frequency {freq:.4}"));
    c
}

// ---------------------------------------------------------------- shapley

/// Nonlinear test policy on 8 features; feature 7 is a dummy. The sine
/// couples five features at once: with only pairwise terms, antithetic
/// permutation pairs would be exact and the Monte-Carlo check vacuous.
pub fn toy_policy(x: &[f64]) -> f64 {
    (x[0] * x[1]).tanh() + 0.5 * x[2] - 0.3 * x[3] * x[3]
        + (x[4] - x[5]).max(0.0)
        + 0.2 * x[6] * x[0]
        + (x[0] + x[2] * x[3] - x[5] * x[6]).sin()
}

/// Three features with a three-way interaction, so antithetic pairs alone
/// do not make the estimate exact.
pub fn small_policy(x: &[f64]) -> f64 {
    x[0] * x[1] * x[2] + (x[0] - x[1]).sin() * x[2] + 0.5 * x[0]
}

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, d: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn shapley_axioms(seed: u64) -> Check {
    let mut c = Check::new();
    let mut rng = seeded(seed);
    let n = 10_000;

    let background = random_rows(&mut rng, 20, 8);
    let base = background.iter().map(|b| toy_policy(b)).sum::<f64>() / background.len() as f64;
    let (mut eff, mut dummy, mut rel8, mut z8) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for x in random_rows(&mut rng, 5, 8) {
        let exact = shapley_exact(&toy_policy, &x, &background).unwrap();
        eff = eff.max((exact.iter().sum::<f64>() - (toy_policy(&x) - base)).abs());
        dummy = dummy.max(exact[7].abs());
        let mc = shapley_mc(&toy_policy, &x, &background, n, &mut rng).unwrap();
        dummy = dummy.max(mc[7].abs());
        rel8 = rel8.max(exact.iter().zip(&mc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / max_abs(&exact));
        // Standard error at n from the spread of twenty independent runs at n/20.
        let runs: Vec<Vec<f64>> =
            (0..20).map(|_| shapley_mc(&toy_policy, &x, &background, n / 20, &mut rng).unwrap()).collect();
        for j in 0..7 {
            let m = runs.iter().map(|r| r[j]).sum::<f64>() / 20.0;
            let sd = (runs.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / 19.0).sqrt();
            let err = (mc[j] - exact[j]).abs();
            // Pairwise-only features are estimated exactly and show no spread.
            let z = if sd > 1e-12 { err / (sd / 20.0f64.sqrt()) } else if err < 1e-9 { 0.0 } else { f64::INFINITY };
            z8 = z8.max(z);
        }
    }
    c.clause("exact efficiency", eff <= 1e-9);
    c.clause("dummy importance < 1e-3", dummy < 1e-3);
    c.clause("8-feature Monte-Carlo within 1% of exact", rel8 <= 0.01);
    c.clause("8-feature Monte-Carlo within 5 standard errors", z8 <= 5.0);

    let background = random_rows(&mut rng, 20, 3);
    let mut rel3 = 0.0f64;
    for x in random_rows(&mut rng, 5, 3) {
        let exact = shapley_exact(&small_policy, &x, &background).unwrap();
        let mc = shapley_mc(&small_policy, &x, &background, n, &mut rng).unwrap();
        rel3 = rel3.max(exact.iter().zip(&mc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / max_abs(&exact));
    }
    c.clause("3-feature Monte-Carlo within 1% of exact", rel3 <= 0.01);
    c.note(format!(
        "efficiency gap {eff:.1e}, dummy {dummy:.1e}; worst Monte-Carlo error relative to largest attribution: \
         3 features {:.3}%, 8 features {:.3}% ({z8:.2} standard errors)",
        rel3 * 100.0,
        rel8 * 100.0
    ));
    c
}

/// The 8-feature 1% bound is a worst case over 40 estimates a couple of
/// standard errors out, so a sweep counts the seeds meeting it and collects
/// any other clause failures.
pub fn shapley_seed_sweep(seeds: std::ops::Range<u64>) -> (usize, Vec<String>) {
    let mut within = 0;
    let mut failures = Vec::new();
    for seed in seeds {
        let c = shapley_axioms(seed);
        let failed = c.failed();
        for f in failed.iter().filter(|f| !f.starts_with("8-feature Monte-Carlo within 1%")) {
            failures.push(format!("seed {seed}: {f}"));
        }
        within += usize::from(failed.is_empty());
    }
    (within, failures)
}

// ---------------------------------------------------------------- ensemble

pub fn ensemble_calibration(seed: u64) -> Check {
    let mut c = Check::new();
    let mut rng = seeded(seed);
    let cfg = EnsembleConfig { seed, ..EnsembleConfig::default() };
    let xs: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.random_range(1.0..10.0)]).collect();

    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![2.0 * x[0]]).collect();
    let ens = Ensemble::fit(&xs, &ys, &cfg).unwrap();
    let (mut worst, mut var) = (0.0f64, 0.0f64);
    for i in 0..200 {
        let s = 1.5 + 8.0 * i as f64 / 199.0;
        let m = ens.predict(&[s]);
        worst = worst.max((m.mean()[0] - 2.0 * s).abs() / (2.0 * s));
        for (mu, _) in m.means.iter().zip(&m.variances) {
            worst = worst.max((mu[0] - 2.0 * s).abs() / (2.0 * s));
        }
        var = var.max(m.variance()[0]);
    }
    c.clause("deterministic 2s within 1%", worst <= 0.01);
    c.clause("deterministic variance small", var <= 0.01);
    c.note(format!("2s: worst relative error {:.3}%, max variance {var:.2e}", worst * 100.0));

    let normal = rand_distr::Normal::new(0.0, 2.0).unwrap();
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0] + rng.sample(normal)]).collect();
    let ens = Ensemble::fit(&xs, &ys, &cfg).unwrap();
    let held: Vec<f64> = (0..500).map(|_| rng.random_range(1.5..9.5)).collect();
    let v = held.iter().map(|s| ens.predict(&[*s]).variance()[0]).sum::<f64>() / held.len() as f64;
    c.clause("noisy variance within 25% of 4", (v - 4.0).abs() <= 1.0);
    c.note(format!("noisy: mean held-out variance {v:.3}"));

    let one = Ensemble::fit(&xs, &ys, &EnsembleConfig { members: 1, ..cfg.clone() }).unwrap();
    let m = one.predict(&[5.0]);
    c.clause("single member mixture", m.means.len() == 1 && m.mean() == m.means[0] && m.variance() == m.variances[0]);
    c
}
