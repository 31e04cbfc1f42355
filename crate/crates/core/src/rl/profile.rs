use serde::{Deserialize, Serialize};
use std::fmt;

/// Which behavioural bias an investor carries, with its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SubrationalityProfile {
    Rational,
    Bounded { beta: f64 },
    Myopic { gamma: f64 },
    Prospect { c: f64, delta: f64 },
    Optimistic { omega: f64 },
    Pessimistic { omega: f64 },
}

impl SubrationalityProfile {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            Self::Rational => Ok(()),
            Self::Bounded { beta } if beta >= 0.0 && beta.is_finite() => Ok(()),
            Self::Bounded { beta } => Err(format!("bounded beta must be >= 0, got {beta}")),
            Self::Myopic { gamma } if (0.0..=1.0).contains(&gamma) => Ok(()),
            Self::Myopic { gamma } => Err(format!("myopic gamma must lie in [0, 1], got {gamma}")),
            Self::Prospect { c, delta } if c > 1.0 && delta > 0.0 && delta <= 1.0 => Ok(()),
            Self::Prospect { c, delta } => {
                Err(format!("prospect needs c > 1 and delta in (0, 1], got c={c} delta={delta}"))
            }
            Self::Optimistic { omega } if omega > 0.0 && omega.is_finite() => Ok(()),
            Self::Optimistic { omega } => Err(format!("optimistic omega must be > 0, got {omega}")),
            Self::Pessimistic { omega } if omega < 0.0 && omega.is_finite() => Ok(()),
            Self::Pessimistic { omega } => Err(format!("pessimistic omega must be < 0, got {omega}")),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Rational => "rational",
            Self::Bounded { .. } => "bounded",
            Self::Myopic { .. } => "myopic",
            Self::Prospect { .. } => "prospect",
            Self::Optimistic { .. } => "optimistic",
            Self::Pessimistic { .. } => "pessimistic",
        }
    }

    /// Discount factor used for learning, given the rational default.
    pub fn discount(&self, rational_gamma: f64) -> f64 {
        match *self {
            Self::Myopic { gamma } => gamma,
            _ => rational_gamma,
        }
    }

    /// Tilt parameter for successor reweighting; zero when unbiased.
    pub fn omega(&self) -> f64 {
        match *self {
            Self::Optimistic { omega } | Self::Pessimistic { omega } => omega,
            _ => 0.0,
        }
    }

    /// Whether the policy is derived by planning on the internal model.
    pub fn is_model_based(&self) -> bool {
        matches!(self, Self::Optimistic { .. } | Self::Pessimistic { .. })
    }

    /// Profile whose Q-table this one acts on. Bounded agents act on the
    /// rational table.
    pub fn training_profile(&self) -> SubrationalityProfile {
        match self {
            Self::Bounded { .. } => Self::Rational,
            other => *other,
        }
    }
}

impl fmt::Display for SubrationalityProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Rational => write!(f, "rational"),
            Self::Bounded { beta } => write!(f, "bounded(beta={beta})"),
            Self::Myopic { gamma } => write!(f, "myopic(gamma={gamma})"),
            Self::Prospect { c, delta } => write!(f, "prospect(c={c},delta={delta})"),
            Self::Optimistic { omega } => write!(f, "optimistic(omega={omega})"),
            Self::Pessimistic { omega } => write!(f, "pessimistic(omega={omega})"),
        }
    }
}
