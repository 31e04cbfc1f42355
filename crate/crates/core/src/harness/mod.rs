//! Experiment runner: trains or loads policies, runs the evaluation
//! experiments and writes their CSV outputs.
//!
//! Every random stream is derived from the base seed. Evaluation day `d`
//! uses the same seed for every profile and every market setting, so all
//! comparisons are paired.

pub mod config;
pub mod output;
pub mod report;

pub use config::{parse_config, ConfigError, ExperimentConfig, ImpactSetting, ScenarioRun};
pub use output::{RunManifest, Summary};
pub use report::{report, Report};

use crate::explain::{global_importance, ExplainError, GlobalImportance};
use crate::fundamental::{generate_crafted_path, generate_ou_path, FundamentalError, FundamentalPath, ScenarioKind};
use crate::metrics::{daily_quality_report, MarketQualityReport, StateVector};
use crate::model::{collect_transitions, discretize_model, evaluate_fidelity, FidelityReport, FitError, InternalModel};
use crate::model::{DiscretizedModel, TransitionSample};
use crate::rl::action::{ActionSpec, Direction};
use crate::rl::{
    learning_reward, plan_with_model, train_online, ArtifactError, Discretization, DiscretizeError, PlanError,
    PolicyArtifact, SubrationalityProfile, TrainConfig, TrainError, TrainingManifest,
};
use crate::sim::{Controller, DayLog, SimError, Simulation};
use crate::types::mix_seed;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no trained policy for {0} and on-demand training is disabled")]
    MissingArtifact(String),
    #[error("policy file {path} does not match the current training config")]
    StaleArtifact { path: PathBuf },
    #[error("unknown scenario kind `{0}`")]
    UnknownScenario(String),
    #[error("investor {investor} on day seed {seed}: rewards sum to {rewards} but PnL is {pnl}")]
    Accounting { seed: u64, investor: usize, rewards: i64, pnl: i64 },
    #[error("malformed CSV {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Fundamental(#[from] FundamentalError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl HarnessError {
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::UnknownScenario(_))
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

// Seed stream tags.
const WARMUP: u64 = 1;
const TRAIN: u64 = 2;
const EVAL: u64 = 3;
const FIDELITY: u64 = 4;
const SHAP: u64 = 5;
const MODEL: u64 = 6;
const SCENARIO: u64 = 7;

/// Random-action days shared by bin calibration and model fitting.
pub struct Warmup {
    pub transitions: Vec<TransitionSample>,
    pub discretization: Discretization,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PnlRow {
    pub setting: String,
    pub profile: String,
    pub day: usize,
    pub seed: u64,
    /// Cents.
    pub pnl: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QualityRow {
    pub setting: String,
    pub day: usize,
    pub seed: u64,
    pub report: MarketQualityReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub profile: String,
    pub minute: usize,
    pub fundamental: f64,
    pub price: i64,
    pub holdings: i64,
    /// Cents.
    pub portfolio_value: f64,
    pub action: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageRow {
    pub profile: String,
    pub stage: usize,
    pub buys: usize,
    pub sells: usize,
    pub holds: usize,
}

impl StageRow {
    /// Buys per sell; infinite when there were buys but no sells.
    pub fn buy_sell_ratio(&self) -> Option<f64> {
        match (self.buys, self.sells) {
            (0, 0) => None,
            (b, 0) => Some(if b > 0 { f64::INFINITY } else { 0.0 }),
            (b, s) => Some(b as f64 / s as f64),
        }
    }

    pub fn hold_fraction(&self) -> f64 {
        let n = self.buys + self.sells + self.holds;
        if n == 0 {
            0.0
        } else {
            self.holds as f64 / n as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioResult {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub traces: Vec<TraceRow>,
    pub stages: Vec<StageRow>,
}

impl ScenarioResult {
    pub fn stage(&self, profile: &SubrationalityProfile, stage: usize) -> Option<&StageRow> {
        let name = profile.to_string();
        self.stages.iter().find(|r| r.profile == name && r.stage == stage)
    }
}

#[derive(Clone, Debug)]
pub struct ShapResult {
    pub profile: SubrationalityProfile,
    pub states: Vec<Vec<f64>>,
    pub importance: GlobalImportance,
}

/// Stage windows of a crafted day, as minute ranges.
pub fn scenario_stages(kind: &ScenarioKind, day_minutes: usize) -> Vec<Range<usize>> {
    match *kind {
        ScenarioKind::TrendWithShock { shock_start, shock_end, .. } => {
            let a = shock_start.min(day_minutes);
            let b = shock_end.min(day_minutes);
            vec![0..a, a..b, b..day_minutes]
        }
        ScenarioKind::SineWave { .. } => vec![0..day_minutes / 2, day_minutes / 2..day_minutes],
        ScenarioKind::MonotoneDecline { .. } => vec![0..day_minutes],
    }
}

/// File-name form of a profile.
pub fn profile_slug(p: &SubrationalityProfile) -> String {
    let mut out = String::new();
    for ch in p.to_string().chars() {
        if ch.is_ascii_alphanumeric() || ch == '.' || ch == '-' {
            out.push(ch);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}

fn check_telescoping(log: &DayLog, seed: u64) -> Result<()> {
    for (investor, inv) in log.investors.iter().enumerate() {
        let (rewards, pnl) = (inv.total_reward(), inv.pnl());
        if rewards != pnl {
            return Err(HarnessError::Accounting { seed, investor, rewards, pnl });
        }
    }
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Harness {
    cfg: ExperimentConfig,
    out_dir: Option<PathBuf>,
    pool: rayon::ThreadPool,
    warmup: Option<Arc<Warmup>>,
    model: Option<Arc<InternalModel>>,
    tabular: Option<Arc<DiscretizedModel>>,
    policies: BTreeMap<String, Arc<PolicyArtifact>>,
    artifact_hashes: BTreeMap<String, String>,
}

impl Harness {
    /// `out_dir` holds policy files and CSV outputs; without one nothing
    /// is written and every policy is trained in memory.
    pub fn new(cfg: ExperimentConfig, out_dir: Option<&Path>) -> Result<Self> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| HarnessError::Pool(e.to_string()))?;
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Harness {
            cfg,
            out_dir: out_dir.map(Path::to_path_buf),
            pool,
            warmup: None,
            model: None,
            tabular: None,
            policies: BTreeMap::new(),
            artifact_hashes: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn out_dir(&self) -> Option<&Path> {
        self.out_dir.as_deref()
    }

    /// Manifest over the config and every policy used so far.
    pub fn manifest(&self) -> RunManifest {
        RunManifest::new(&self.cfg, self.artifact_hashes.clone())
    }

    fn day_len(&self) -> usize {
        self.cfg.market.day_minutes + 1
    }

    /// Seed of evaluation day `d`; identical across profiles and settings.
    pub fn eval_seed(&self, d: usize) -> u64 {
        mix_seed(mix_seed(self.cfg.seed, EVAL), d as u64)
    }

    /// A day on a fresh mean-reverting fundamental.
    pub fn ou_day(&self, seed: u64, investors: Vec<Controller>) -> Result<(Simulation, FundamentalPath)> {
        let path = generate_ou_path(&self.cfg.fundamental, self.day_len(), mix_seed(seed, 1))?;
        let sim = Simulation::new(self.cfg.market.clone(), path.clone(), investors, seed)?;
        Ok((sim, path))
    }

    /// Run evaluation day `d` with the given investors and check that each
    /// investor's rewards add up to its PnL.
    pub fn evaluate_day(&self, d: usize, investors: Vec<Controller>) -> Result<(DayLog, FundamentalPath)> {
        let seed = self.eval_seed(d);
        let (sim, path) = self.ou_day(seed, investors)?;
        let log = sim.run_day()?;
        check_telescoping(&log, seed)?;
        Ok((log, path))
    }

    pub fn warmup(&mut self) -> Result<Arc<Warmup>> {
        if let Some(w) = &self.warmup {
            return Ok(w.clone());
        }
        let this = &*self;
        let transitions = collect_transitions(
            |_, seed, inv| this.ou_day(seed, inv).map(|(s, _)| s).map_err(sim_error),
            self.cfg.warmup_days,
            mix_seed(self.cfg.seed, WARMUP),
        )?;
        let states: Vec<StateVector> = transitions.iter().map(|t| t.state.clone()).collect();
        let discretization = Discretization::calibrate(&self.cfg.discretization.rules, &states)?;
        log::info!("calibrated {} cells on {} warmup states", discretization.n_states(), states.len());
        let w = Arc::new(Warmup { transitions, discretization });
        self.warmup = Some(w.clone());
        Ok(w)
    }

    pub fn internal_model(&mut self) -> Result<Arc<InternalModel>> {
        if let Some(m) = &self.model {
            return Ok(m.clone());
        }
        let warmup = self.warmup()?;
        let mut ecfg = self.cfg.model.ensemble.clone();
        ecfg.seed = mix_seed(mix_seed(self.cfg.seed, MODEL), ecfg.seed);
        log::info!("fitting internal model on {} transitions", warmup.transitions.len());
        let m = Arc::new(InternalModel::fit(&warmup.transitions, &ecfg)?);
        self.model = Some(m.clone());
        Ok(m)
    }

    fn tabular_model(&mut self) -> Result<Arc<DiscretizedModel>> {
        if let Some(t) = &self.tabular {
            return Ok(t.clone());
        }
        let model = self.internal_model()?;
        let warmup = self.warmup()?;
        let states: Vec<StateVector> = warmup.transitions.iter().map(|t| t.state.clone()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(self.cfg.seed, MODEL), 1));
        let t = Arc::new(discretize_model(
            &model,
            &warmup.discretization,
            &states,
            self.cfg.model.samples_per_cell,
            &mut rng,
        ));
        self.tabular = Some(t.clone());
        Ok(t)
    }

    fn policy_path(&self, slug: &str) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| d.join("policies").join(format!("{slug}.policy")))
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: mix_seed(mix_seed(self.cfg.seed, TRAIN), self.cfg.train.seed), ..self.cfg.train.clone() }
    }

    fn build_policy(&mut self, base: SubrationalityProfile) -> Result<PolicyArtifact> {
        let warmup = self.warmup()?;
        let hash = self.cfg.training_hash();
        if base.is_model_based() {
            let tab = self.tabular_model()?;
            log::info!("planning {base} on {} tabulated entries", tab.model.len());
            let manifest = TrainingManifest {
                config_hash: hash,
                episodes: self.cfg.warmup_days,
                seed: mix_seed(self.cfg.seed, MODEL),
            };
            Ok(plan_with_model(&tab.model, &warmup.discretization, base, self.cfg.train.gamma, &self.cfg.plan, manifest)?)
        } else {
            let tcfg = self.train_config();
            log::info!("training {base} for {} days", tcfg.episodes);
            let this = &*self;
            Ok(train_online(
                |_, seed| this.ou_day(seed, vec![Controller::External]).map(|(s, _)| s).map_err(sim_error),
                &warmup.discretization,
                &tcfg,
                base,
                &hash,
            )?)
        }
    }

    /// Policy acting under `profile`, loaded from disk, taken from the
    /// cache, or trained. Bounded profiles share the rational table.
    pub fn policy(&mut self, profile: &SubrationalityProfile) -> Result<Arc<PolicyArtifact>> {
        let base = profile.training_profile();
        let slug = profile_slug(&base);
        let art = match self.policies.get(&slug) {
            Some(a) => a.clone(),
            None => {
                let art = self.load_or_build(base, &slug)?;
                self.policies.insert(slug.clone(), art.clone());
                art
            }
        };
        if *profile == base {
            Ok(art)
        } else {
            Ok(Arc::new(art.with_profile(*profile)))
        }
    }

    fn load_or_build(&mut self, base: SubrationalityProfile, slug: &str) -> Result<Arc<PolicyArtifact>> {
        let path = self.policy_path(slug);
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            let bytes = std::fs::read(p)?;
            let art = PolicyArtifact::read(bytes.as_slice())?;
            if art.manifest.config_hash == self.cfg.training_hash() && art.profile == base {
                log::info!("loaded {}", p.display());
                self.artifact_hashes.insert(slug.to_string(), sha256_hex(&bytes));
                return Ok(Arc::new(art));
            }
            if !self.cfg.train_missing {
                return Err(HarnessError::StaleArtifact { path: p.clone() });
            }
            log::warn!("{} was trained under another config; retraining", p.display());
        } else if !self.cfg.train_missing {
            return Err(HarnessError::MissingArtifact(base.to_string()));
        }
        let art = self.build_policy(base)?;
        let mut bytes = Vec::new();
        art.write(&mut bytes)?;
        if let Some(p) = path {
            std::fs::create_dir_all(p.parent().expect("policy dir"))?;
            std::fs::write(&p, &bytes)?;
        }
        self.artifact_hashes.insert(slug.to_string(), sha256_hex(&bytes));
        Ok(Arc::new(art))
    }

    /// Train (or load) every policy the config refers to.
    pub fn train_all(&mut self) -> Result<Vec<SubrationalityProfile>> {
        let c = &self.cfg;
        let mut wanted: Vec<SubrationalityProfile> = c
            .profiles
            .iter()
            .chain(c.impact.settings.iter().filter_map(|s| s.profile.as_ref()))
            .chain(c.scenario.runs.iter().flat_map(|r| &r.profiles))
            .chain(&c.shap.profiles)
            .map(SubrationalityProfile::training_profile)
            .collect();
        let mut seen = Vec::new();
        wanted.retain(|p| {
            let fresh = !seen.contains(p);
            seen.push(*p);
            fresh
        });
        for p in &wanted {
            self.policy(p)?;
        }
        Ok(wanted)
    }

    fn par_days<T, F>(&self, days: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync,
    {
        self.pool.install(|| (0..days).into_par_iter().map(&f).collect())
    }

    /// PnL of one investor per profile over the evaluation days, in cents.
    pub fn run_pnl(&mut self) -> Result<Vec<PnlRow>> {
        let profiles = self.cfg.profiles.clone();
        let mut rows = Vec::new();
        for p in &profiles {
            let art = self.policy(p)?;
            let name = p.to_string();
            let this = &*self;
            rows.extend(this.par_days(this.cfg.days, |d| {
                let (log, _) = this.evaluate_day(d, vec![Controller::Policy(art.clone())])?;
                Ok(PnlRow {
                    setting: this.cfg.setting.clone(),
                    profile: name.clone(),
                    day: d,
                    seed: this.eval_seed(d),
                    pnl: learning_reward(log.investors[0].pnl()),
                })
            })?);
        }
        Ok(rows)
    }

    /// Market quality per impact setting and day. Every setting sees the
    /// same day seeds.
    pub fn run_impact(&mut self) -> Result<Vec<QualityRow>> {
        let settings = self.cfg.impact.settings.clone();
        let mut rows = Vec::new();
        for s in &settings {
            let art = s.profile.as_ref().map(|p| self.policy(p)).transpose()?;
            let agents = self.cfg.impact.agents;
            let this = &*self;
            rows.extend(this.par_days(this.cfg.impact_days(), |d| {
                let investors = art
                    .as_ref()
                    .map(|a| (0..agents).map(|_| Controller::Policy(a.clone())).collect())
                    .unwrap_or_default();
                let (log, path) = this.evaluate_day(d, investors)?;
                Ok(QualityRow {
                    setting: s.name.clone(),
                    day: d,
                    seed: this.eval_seed(d),
                    report: daily_quality_report(&log, &path),
                })
            })?);
        }
        Ok(rows)
    }

    /// One crafted day per profile, all on the same seed.
    pub fn run_scenario(&mut self, kind: &ScenarioKind, profiles: &[SubrationalityProfile]) -> Result<ScenarioResult> {
        let path = generate_crafted_path(kind, self.cfg.scenario.base, self.day_len())?;
        let seed = mix_seed(self.cfg.seed, SCENARIO);
        let stages = scenario_stages(kind, self.cfg.market.day_minutes);
        let mut result = ScenarioResult { kind: kind.clone(), seed, traces: Vec::new(), stages: Vec::new() };
        for p in profiles {
            let art = self.policy(p)?;
            let sim = Simulation::new(self.cfg.market.clone(), path.clone(), vec![Controller::Policy(art)], seed)?;
            let log = sim.run_day()?;
            check_telescoping(&log, seed)?;
            let name = p.to_string();
            let mut counts: Vec<StageRow> = (0..stages.len())
                .map(|i| StageRow { profile: name.clone(), stage: i + 1, buys: 0, sells: 0, holds: 0 })
                .collect();
            for step in &log.investors[0].steps {
                let s = &step.state;
                result.traces.push(TraceRow {
                    profile: name.clone(),
                    minute: step.minute,
                    fundamental: path.at(step.minute),
                    price: s.last_price,
                    holdings: s.holdings,
                    portfolio_value: learning_reward(s.portfolio_value()),
                    action: step.action,
                });
                if let Some(i) = stages.iter().position(|r| r.contains(&step.minute)) {
                    let row = &mut counts[i];
                    match ActionSpec::from_index(step.action).map(|a| a.direction) {
                        Some(Direction::Buy) => row.buys += 1,
                        Some(Direction::Sell) => row.sells += 1,
                        _ => row.holds += 1,
                    }
                }
            }
            result.stages.extend(counts);
        }
        Ok(result)
    }

    pub fn scenario_kind(name: &str) -> Result<ScenarioKind> {
        ScenarioKind::from_name(name).ok_or_else(|| HarnessError::UnknownScenario(name.to_string()))
    }

    /// Scenario runs from the config, optionally restricted to one kind.
    pub fn run_scenarios(&mut self, only: Option<&str>) -> Result<Vec<ScenarioResult>> {
        let mut runs = self.cfg.scenario.runs.clone();
        if let Some(name) = only {
            let kind = Self::scenario_kind(name)?;
            runs.retain(|r| r.kind.name() == kind.name());
            if runs.is_empty() {
                let profiles = vec![SubrationalityProfile::Rational];
                runs.push(ScenarioRun { kind, profiles });
            }
        }
        runs.iter().map(|r| self.run_scenario(&r.kind, &r.profiles)).collect()
    }

    /// One-step fidelity of the internal model on held-out days.
    pub fn run_fidelity(&mut self) -> Result<FidelityReport> {
        let model = self.internal_model()?;
        let this = &*self;
        Ok(evaluate_fidelity(
            &model,
            |_, seed, inv| this.ou_day(seed, inv).map(|(s, _)| s).map_err(sim_error),
            self.cfg.model.fidelity_days,
            mix_seed(self.cfg.seed, FIDELITY),
        )?)
    }

    /// Shapley attributions of each configured profile's trade direction,
    /// on states the profile visits during evaluation.
    pub fn run_shap(&mut self) -> Result<Vec<ShapResult>> {
        let profiles = self.cfg.shap.profiles.clone();
        profiles.iter().map(|p| self.shap_for(p)).collect()
    }

    pub fn shap_for(&mut self, profile: &SubrationalityProfile) -> Result<ShapResult> {
        let art = self.policy(profile)?;
        let sc = self.cfg.shap.clone();
        let this = &*self;
        let visited: Vec<Vec<f64>> = this
            .par_days(sc.days, |d| {
                let (log, _) = this.evaluate_day(d, vec![Controller::Policy(art.clone())])?;
                Ok(log.investors[0].steps.iter().map(|s| s.state.features().to_vec()).collect::<Vec<_>>())
            })?
            .into_iter()
            .flatten()
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.cfg.seed, SHAP));
        let mut pick = |k: usize| -> Vec<Vec<f64>> {
            let n = visited.len();
            let mut idx = sample(&mut rng, n, k.min(n)).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| visited[i].clone()).collect()
        };
        let background = pick(sc.background);
        let states = pick(sc.states);
        let f = |x: &[f64]| art.decision_value_features(x);
        let importance = self.pool.install(|| {
            global_importance(&f, &states, &background, sc.permutations, mix_seed(self.cfg.seed, SHAP + 1))
        })?;
        Ok(ShapResult { profile: *profile, states, importance })
    }
}

fn sim_error(e: HarnessError) -> SimError {
    match e {
        HarnessError::Sim(s) => s,
        other => SimError::InvalidConfig(other.to_string()),
    }
}
