use super::action::N_ACTIONS;
use super::discretize::Discretization;
use super::formulas::{boltzmann_policy, expected_direction, greedy_action, sample_index};
use super::profile::SubrationalityProfile;
use super::qtable::QTable;
use crate::metrics::StateVector;
use crate::sim::InvestorPolicy;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use thiserror::Error;

const MAGIC: &str = "sublob-policy 1";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("not a policy file (bad first line)")]
    BadMagic,
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("malformed entry on line {line}: {text}")]
    Entry { line: usize, text: String },
    #[error("discretization hash mismatch: file says {stored}, table bins hash to {actual}")]
    HashMismatch { stored: String, actual: String },
    #[error("policy was trained with discretization {found}, expected {expected}")]
    WrongDiscretization { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub config_hash: String,
    pub episodes: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    profile: SubrationalityProfile,
    discretization: Discretization,
    discretization_hash: String,
    manifest: TrainingManifest,
}

/// A trained Q-table bundled with the profile that turns it into actions.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyArtifact {
    pub profile: SubrationalityProfile,
    pub discretization: Discretization,
    pub q: QTable,
    pub manifest: TrainingManifest,
}

impl PolicyArtifact {
    /// Same table, acted on under another profile.
    pub fn with_profile(&self, profile: SubrationalityProfile) -> PolicyArtifact {
        PolicyArtifact { profile, ..self.clone() }
    }

    pub fn state_index(&self, s: &StateVector) -> u32 {
        self.discretization.index(s)
    }

    /// Action distribution at `s`: softmax for bounded agents, a point
    /// mass on the greedy action otherwise.
    pub fn action_probs(&self, s: &StateVector) -> [f64; N_ACTIONS] {
        self.probs_for_row(&self.q.row(self.state_index(s)))
    }

    fn probs_for_row(&self, row: &[f64; N_ACTIONS]) -> [f64; N_ACTIONS] {
        let mut out = [0.0; N_ACTIONS];
        match self.profile {
            SubrationalityProfile::Bounded { beta } => {
                let p = boltzmann_policy(row, beta).expect("validated beta");
                out.copy_from_slice(&p);
            }
            _ => out[greedy_action(row)] = 1.0,
        }
        out
    }

    /// Expected trade direction in [-1, 1] at `s`.
    pub fn decision_value(&self, s: &StateVector) -> f64 {
        expected_direction(&self.action_probs(s))
    }

    /// Same as [`decision_value`](Self::decision_value) on a raw feature
    /// vector.
    pub fn decision_value_features(&self, x: &[f64]) -> f64 {
        let row = self.q.row(self.discretization.index_features(x));
        expected_direction(&self.probs_for_row(&row))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), ArtifactError> {
        let header = Header {
            profile: self.profile,
            discretization: self.discretization.clone(),
            discretization_hash: self.discretization.hash(),
            manifest: self.manifest.clone(),
        };
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for (s, row) in self.q.sorted_rows() {
            for (a, v) in row.iter().enumerate() {
                if *v != 0.0 {
                    writeln!(w, "{s},{a},{v:?}")?;
                }
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self, ArtifactError> {
        let mut lines = BufReader::new(r).lines();
        if lines.next().transpose()?.as_deref() != Some(MAGIC) {
            return Err(ArtifactError::BadMagic);
        }
        let header_line = lines.next().transpose()?.unwrap_or_default();
        let header: Header = serde_json::from_str(&header_line)?;
        let actual = header.discretization.hash();
        if actual != header.discretization_hash {
            return Err(ArtifactError::HashMismatch { stored: header.discretization_hash, actual });
        }
        let mut q = QTable::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = || ArtifactError::Entry { line: i + 3, text: line.clone() };
            let mut parts = line.split(',');
            let s: u32 = parts.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
            let a: usize = parts.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
            let v: f64 = parts.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
            if a >= N_ACTIONS || parts.next().is_some() || !v.is_finite() {
                return Err(bad());
            }
            q.set(s, a, v);
        }
        Ok(PolicyArtifact {
            profile: header.profile,
            discretization: header.discretization,
            q,
            manifest: header.manifest,
        })
    }

    /// Load and insist on a particular discretization.
    pub fn read_expecting<R: Read>(r: R, expected_hash: &str) -> Result<Self, ArtifactError> {
        let art = Self::read(r)?;
        let found = art.discretization.hash();
        if found != expected_hash {
            return Err(ArtifactError::WrongDiscretization { expected: expected_hash.into(), found });
        }
        Ok(art)
    }
}

impl InvestorPolicy for PolicyArtifact {
    fn act(&self, state: &StateVector, rng: &mut ChaCha8Rng) -> usize {
        match self.profile {
            SubrationalityProfile::Bounded { .. } => {
                let probs = self.action_probs(state);
                sample_index(&probs, rng.random::<f64>())
            }
            _ => greedy_action(&self.q.row(self.state_index(state))),
        }
    }
}
