//! Experiment configuration: one TOML file with nested sections, parsed
//! strictly and echoed back with every default filled in.

use crate::fundamental::{OUParams, ScenarioKind};
use crate::metrics::FEATURE_NAMES;
use crate::model::EnsembleConfig;
use crate::rl::discretize::default_rules;
use crate::rl::{BinRule, PlanConfig, SubrationalityProfile, TrainConfig};
use crate::sim::MarketConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {0} not found")]
    Missing(PathBuf),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationSection {
    pub rules: Vec<BinRule>,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        DiscretizationSection { rules: default_rules() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub ensemble: EnsembleConfig,
    /// Ensemble draws per (cell, action) when tabulating the model.
    pub samples_per_cell: usize,
    /// Held-out random-action days for the fidelity report.
    pub fidelity_days: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { ensemble: EnsembleConfig::default(), samples_per_cell: 50, fidelity_days: 5 }
    }
}

/// One market-impact setting: `profile` absent means no RL agents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactSetting {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<SubrationalityProfile>,
}

impl ImpactSetting {
    fn with(name: &str, profile: SubrationalityProfile) -> Self {
        ImpactSetting { name: name.into(), profile: Some(profile) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpactSection {
    /// RL agents per setting.
    pub agents: usize,
    /// Overrides the top-level day count when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub days: Option<usize>,
    pub settings: Vec<ImpactSetting>,
}

impl Default for ImpactSection {
    fn default() -> Self {
        use SubrationalityProfile::*;
        ImpactSection {
            agents: 10,
            days: Some(30),
            settings: vec![
                ImpactSetting { name: "baseline".into(), profile: None },
                ImpactSetting::with("rational", Rational),
                ImpactSetting::with("bounded", Bounded { beta: 0.0 }),
                ImpactSetting::with("myopic", Myopic { gamma: 0.2 }),
                ImpactSetting::with("prospect", Prospect { c: 2.5, delta: 0.65 }),
                ImpactSetting::with("optimistic", Optimistic { omega: 1.0 }),
                ImpactSetting::with("pessimistic", Pessimistic { omega: -1.0 }),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRun {
    pub kind: ScenarioKind,
    pub profiles: Vec<SubrationalityProfile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    /// Price level the crafted paths are built around, in price units.
    pub base: f64,
    pub runs: Vec<ScenarioRun>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        use SubrationalityProfile::*;
        ScenarioSection {
            base: 200_000.0,
            runs: vec![
                ScenarioRun { kind: ScenarioKind::sine_wave(), profiles: vec![Rational] },
                ScenarioRun { kind: ScenarioKind::trend_with_shock(), profiles: vec![Rational, Myopic { gamma: 0.1 }] },
                ScenarioRun {
                    kind: ScenarioKind::monotone_decline(),
                    profiles: vec![Rational, Prospect { c: 2.5, delta: 0.65 }],
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapSection {
    pub profiles: Vec<SubrationalityProfile>,
    /// Evaluation days whose states feed the background and evaluation sets.
    pub days: usize,
    pub background: usize,
    pub states: usize,
    pub permutations: usize,
}

impl Default for ShapSection {
    fn default() -> Self {
        use SubrationalityProfile::*;
        ShapSection {
            profiles: vec![Rational, Bounded { beta: 0.0 }],
            days: 10,
            background: 500,
            states: 200,
            permutations: 56,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Free-form label written to every result row.
    pub setting: String,
    /// Base seed; every stream in a run is derived from it.
    pub seed: u64,
    /// Evaluation days per profile or setting.
    pub days: usize,
    /// Worker threads, 0 for one per core.
    pub threads: usize,
    /// Train missing policies on demand instead of failing.
    pub train_missing: bool,
    /// Random-action days used to calibrate bins and fit the internal model.
    pub warmup_days: usize,
    pub market: MarketConfig,
    pub fundamental: OUParams,
    pub train: TrainConfig,
    pub discretization: DiscretizationSection,
    pub model: ModelSection,
    pub plan: PlanConfig,
    /// Profiles evaluated by the PnL experiment.
    pub profiles: Vec<SubrationalityProfile>,
    pub impact: ImpactSection,
    pub scenario: ScenarioSection,
    pub shap: ShapSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        use SubrationalityProfile::*;
        ExperimentConfig {
            setting: "default".into(),
            seed: 0,
            days: 50,
            threads: 0,
            train_missing: true,
            warmup_days: 20,
            market: MarketConfig::default(),
            fundamental: OUParams::default(),
            train: TrainConfig::default(),
            discretization: DiscretizationSection::default(),
            model: ModelSection::default(),
            plan: PlanConfig::default(),
            profiles: vec![
                Rational,
                Prospect { c: 2.5, delta: 0.65 },
                Bounded { beta: 0.0 },
                Bounded { beta: 1.0 },
                Myopic { gamma: 0.0 },
                Myopic { gamma: 0.8 },
                Pessimistic { omega: -1.0 },
                Optimistic { omega: 1.0 },
            ],
            impact: ImpactSection::default(),
            scenario: ScenarioSection::default(),
            shap: ShapSection::default(),
        }
    }
}

/// Everything that determines a trained policy. Artifacts on disk are
/// reused only when this hash matches.
#[derive(Serialize)]
struct TrainingInputs<'a> {
    seed: u64,
    warmup_days: usize,
    market: &'a MarketConfig,
    fundamental: &'a OUParams,
    train: &'a TrainConfig,
    discretization: &'a DiscretizationSection,
    model: &'a ModelSection,
    plan: &'a PlanConfig,
}

fn sha256_json<T: Serialize>(v: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(v).expect("config serializes")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The config with all defaults made explicit.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Hash of everything that can change results; the thread count cannot.
    pub fn hash(&self) -> String {
        sha256_json(&ExperimentConfig { threads: 0, ..self.clone() })
    }

    pub fn training_hash(&self) -> String {
        sha256_json(&TrainingInputs {
            seed: self.seed,
            warmup_days: self.warmup_days,
            market: &self.market,
            fundamental: &self.fundamental,
            train: &self.train,
            discretization: &self.discretization,
            model: &self.model,
            plan: &self.plan,
        })
    }

    pub fn impact_days(&self) -> usize {
        self.impact.days.unwrap_or(self.days)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.market.validate().map_err(|m| ConfigError::Invalid(format!("market: {m}")))?;
        self.fundamental.validate().map_err(|e| ConfigError::Invalid(format!("fundamental: {e}")))?;
        self.train.validate().map_err(|m| ConfigError::Invalid(format!("train: {m}")))?;
        if self.train.episodes == 0 {
            return bad("train.episodes must be positive".into());
        }
        if self.days == 0 || self.impact_days() == 0 {
            return bad("days must be positive".into());
        }
        if self.warmup_days == 0 {
            return bad("warmup_days must be positive".into());
        }
        if self.discretization.rules.is_empty() {
            return bad("discretization.rules is empty".into());
        }
        for r in &self.discretization.rules {
            if !FEATURE_NAMES.contains(&r.feature.as_str()) {
                return bad(format!("discretization: unknown feature `{}`", r.feature));
            }
            if r.edges.is_some() == r.quantiles.is_some() {
                return bad(format!("discretization: `{}` needs exactly one of edges or quantiles", r.feature));
            }
        }
        let e = &self.model.ensemble;
        if e.members == 0 || e.hidden == 0 || e.epochs == 0 || e.batch_size == 0 || !(e.learning_rate > 0.0) {
            return bad("model.ensemble sizes and learning rate must be positive".into());
        }
        if self.model.samples_per_cell == 0 || self.model.fidelity_days == 0 {
            return bad("model.samples_per_cell and model.fidelity_days must be positive".into());
        }
        if self.plan.horizon == 0 && !(self.plan.tolerance > 0.0) {
            return bad("plan.tolerance must be positive".into());
        }
        let all_profiles = self
            .profiles
            .iter()
            .chain(self.impact.settings.iter().filter_map(|s| s.profile.as_ref()))
            .chain(self.scenario.runs.iter().flat_map(|r| &r.profiles))
            .chain(&self.shap.profiles);
        for p in all_profiles {
            p.validate().map_err(|m| ConfigError::Invalid(format!("profile {p}: {m}")))?;
        }
        if self.impact.agents == 0 {
            return bad("impact.agents must be positive".into());
        }
        let mut names: Vec<&str> = self.impact.settings.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("impact setting names must be unique".into());
        }
        if !(self.scenario.base > 0.0 && self.scenario.base.is_finite()) {
            return bad("scenario.base must be positive".into());
        }
        let s = &self.shap;
        if s.days == 0 || s.background == 0 || s.states == 0 || s.permutations == 0 {
            return bad("shap sizes must be positive".into());
        }
        Ok(())
    }
}

/// Read, parse and validate a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            ConfigError::Missing(path.to_path_buf())
        } else {
            ConfigError::Io { path: path.to_path_buf(), source }
        }
    })?;
    ExperimentConfig::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("setting = \"desk\"\nseed = 7\n").unwrap();
        assert_eq!(cfg.setting, "desk");
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.market, MarketConfig::default());
        assert_eq!(cfg.profiles.len(), 8);
        assert_eq!(cfg.impact.settings.len(), 7);
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_named() {
        let err = ExperimentConfig::from_toml("[train]\ngama = 0.9\n").unwrap_err();
        assert!(err.to_string().contains("gama"), "{err}");
    }

    #[test]
    fn training_hash_ignores_evaluation_knobs() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { days: 3, threads: 1, ..a.clone() };
        assert_eq!(a.training_hash(), b.training_hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), ExperimentConfig { threads: 3, ..a.clone() }.hash());
    }
}
