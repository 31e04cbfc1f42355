//! Tabular Q-learning investors and the behavioural transforms that turn
//! a rational learner into a biased one.

pub mod action;
pub mod artifact;
pub mod discretize;
pub mod formulas;
pub mod plan;
pub mod profile;
pub mod qtable;
pub mod train;

pub use action::{ActionSpec, Direction, N_ACTIONS, ORDER_SIZE};
pub use discretize::{BinRule, Discretization, DiscretizeError};
pub use formulas::*;
pub use profile::SubrationalityProfile;
pub use plan::{plan_q, plan_with_model, PlanConfig, PlanError, PlanReport, Successor, TabularModel};
pub use qtable::{q_update, QRow, QTable};
pub use artifact::{ArtifactError, PolicyArtifact, TrainingManifest};
pub use train::{learning_reward, shaped_reward, train_online, TrainConfig, TrainError};
