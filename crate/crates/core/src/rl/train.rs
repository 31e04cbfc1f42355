use super::artifact::{PolicyArtifact, TrainingManifest};
use super::discretize::Discretization;
use super::formulas::{greedy_action, prospect_utility};
use super::profile::SubrationalityProfile;
use super::qtable::{q_update, QTable};
use super::action::N_ACTIONS;
use crate::sim::{SimError, Simulation, Step};
use crate::types::{mix_seed, UNITS_PER_CENT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training needs at least one episode")]
    NoEpisodes,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Training days.
    pub episodes: usize,
    pub learning_rate: f64,
    /// When positive, the step size for a state-action pair decays as
    /// `learning_rate * (1 + visits)^-learning_rate_decay`.
    pub learning_rate_decay: f64,
    /// Lower bound on the decayed step size.
    pub min_learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of episodes over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Discount for the rational learner.
    pub gamma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 2000,
            learning_rate: 0.1,
            learning_rate_decay: 0.0,
            min_learning_rate: 0.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.8,
            gamma: 0.99,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(format!("learning_rate must lie in (0, 1], got {}", self.learning_rate));
        }
        for (name, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
            ("epsilon_decay_fraction", self.epsilon_decay_fraction),
            ("gamma", self.gamma),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }

    pub fn step_size(&self, visits: u32) -> f64 {
        if self.learning_rate_decay <= 0.0 {
            return self.learning_rate;
        }
        let a = self.learning_rate * (1.0 + visits as f64).powf(-self.learning_rate_decay);
        a.max(self.min_learning_rate)
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        let horizon = (self.episodes as f64 * self.epsilon_decay_fraction).max(1.0);
        let frac = (episode as f64 / horizon).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Reward in cents, the unit the learning parameters are expressed in.
pub fn learning_reward(units: i64) -> f64 {
    units as f64 / UNITS_PER_CENT as f64
}

/// Reward as seen by the learner under `profile`.
pub fn shaped_reward(units: i64, profile: &SubrationalityProfile) -> f64 {
    let r = learning_reward(units);
    match *profile {
        SubrationalityProfile::Prospect { c, .. } => prospect_utility(r, c),
        _ => r,
    }
}

/// Epsilon-greedy Q-learning over simulated days. `make_day(episode, seed)`
/// builds a day whose first investor is externally driven; any other
/// investors must carry their own policies.
pub fn train_online<F>(
    mut make_day: F,
    discretization: &Discretization,
    cfg: &TrainConfig,
    profile: SubrationalityProfile,
    config_hash: &str,
) -> Result<PolicyArtifact, TrainError>
where
    F: FnMut(usize, u64) -> Result<Simulation, SimError>,
{
    if cfg.episodes == 0 {
        return Err(TrainError::NoEpisodes);
    }
    cfg.validate().map_err(TrainError::Config)?;
    profile.validate().map_err(TrainError::Config)?;
    let learner = profile.training_profile();
    let gamma = learner.discount(cfg.gamma);
    let mut q = QTable::new();
    let mut visits: HashMap<(u32, usize), u32> = HashMap::new();
    let mut step = |q: &mut QTable, s: u32, a: usize, r: f64, next: Option<u32>| {
        let n = visits.entry((s, a)).or_insert(0);
        q_update(q, s, a, r, next, gamma, cfg.step_size(*n));
        *n += 1;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x7261_696e));

    for episode in 0..cfg.episodes {
        let eps = cfg.epsilon(episode);
        let mut sim = make_day(episode, mix_seed(cfg.seed, episode as u64))?;
        let mut prev: Option<(u32, usize)> = None;
        loop {
            match sim.advance()? {
                Step::Finished => break,
                Step::Terminal { investor: 0, reward } => {
                    if let Some((s, a)) = prev.take() {
                        let r = shaped_reward(reward, &learner);
                        step(&mut q, s, a, r, None);
                    }
                }
                Step::Terminal { .. } => {}
                Step::Decision { investor, state, reward, .. } => {
                    let s = discretization.index(&state);
                    if investor == 0 {
                        if let (Some((ps, pa)), Some(r)) = (prev, reward) {
                            let r = shaped_reward(r, &learner);
                            step(&mut q, ps, pa, r, Some(s));
                        }
                    }
                    let a = if rng.random::<f64>() < eps {
                        rng.random_range(0..N_ACTIONS)
                    } else {
                        greedy_action(&q.row(s))
                    };
                    if investor == 0 {
                        prev = Some((s, a));
                    }
                    sim.act(a)?;
                }
            }
        }
    }

    Ok(PolicyArtifact {
        profile,
        discretization: discretization.clone(),
        q,
        manifest: TrainingManifest {
            config_hash: config_hash.to_string(),
            episodes: cfg.episodes,
            seed: cfg.seed,
        },
    })
}
