use crate::metrics::{StateVector, FEATURE_NAMES};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiscretizeError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("bin edges for `{0}` must be finite and strictly increasing")]
    BadEdges(String),
    #[error("quantile binning of `{0}` needs calibration samples")]
    NoSamples(String),
    #[error("state space has more than 2^32 cells")]
    TooLarge,
}

/// How one feature is cut into bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinRule {
    pub feature: String,
    /// Fixed interior edges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<f64>>,
    /// Equal-mass bins calibrated on sample states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<usize>,
}

impl BinRule {
    pub fn edges(feature: &str, edges: &[f64]) -> Self {
        BinRule { feature: feature.into(), edges: Some(edges.to_vec()), quantiles: None }
    }

    pub fn quantiles(feature: &str, n: usize) -> Self {
        BinRule { feature: feature.into(), edges: None, quantiles: Some(n) }
    }
}

/// Default binning rules.
pub fn default_rules() -> Vec<BinRule> {
    vec![
        BinRule::edges("holdings", &[-5.5, -0.5, 0.5, 5.5]),
        BinRule::quantiles("momentum_1", 5),
        BinRule::quantiles("momentum_10", 5),
        BinRule::quantiles("momentum_30", 5),
        BinRule::quantiles("spread", 3),
        BinRule::quantiles("volatility_30", 3),
        BinRule::quantiles("quote_volume", 2),
        BinRule::quantiles("trade_net_volume", 2),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    pub feature: String,
    pub index: usize,
    pub edges: Vec<f64>,
}

impl FeatureBins {
    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    /// Bin of `x`: the number of edges not above it.
    pub fn bin(&self, x: f64) -> usize {
        self.edges.partition_point(|e| *e <= x)
    }
}

/// Total mapping from observations to table rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub features: Vec<FeatureBins>,
}

fn feature_index(name: &str) -> Result<usize, DiscretizeError> {
    FEATURE_NAMES
        .iter()
        .position(|f| *f == name)
        .ok_or_else(|| DiscretizeError::UnknownFeature(name.to_string()))
}

fn quantile_edges(values: &mut [f64], n: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = Vec::new();
    for k in 1..n {
        let pos = (k * values.len()) / n;
        // Edge just above the repeated run so ties share a bin.
        let e = values[pos.min(values.len() - 1)];
        if edges.last().is_none_or(|last| e > *last) && e > values[0] {
            edges.push(e);
        }
    }
    edges
}

impl Discretization {
    /// Build from rules, fitting quantile edges on `samples`.
    pub fn calibrate(rules: &[BinRule], samples: &[StateVector]) -> Result<Self, DiscretizeError> {
        let mut features = Vec::with_capacity(rules.len());
        for rule in rules {
            let index = feature_index(&rule.feature)?;
            let edges = match (&rule.edges, rule.quantiles) {
                (Some(e), _) => e.clone(),
                (None, Some(n)) => {
                    if samples.is_empty() {
                        return Err(DiscretizeError::NoSamples(rule.feature.clone()));
                    }
                    let mut xs: Vec<f64> = samples.iter().map(|s| s.features()[index]).collect();
                    quantile_edges(&mut xs, n.max(1))
                }
                (None, None) => Vec::new(),
            };
            if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
                return Err(DiscretizeError::BadEdges(rule.feature.clone()));
            }
            features.push(FeatureBins { feature: rule.feature.clone(), index, edges });
        }
        let d = Discretization { features };
        if d.n_states() > u32::MAX as u64 {
            return Err(DiscretizeError::TooLarge);
        }
        Ok(d)
    }

    pub fn n_states(&self) -> u64 {
        self.features.iter().map(|f| f.n_bins() as u64).product()
    }

    pub fn bins(&self, features: &[f64]) -> Vec<usize> {
        self.features.iter().map(|f| f.bin(features[f.index])).collect()
    }

    /// Mixed-radix row index of a feature vector.
    pub fn index_features(&self, features: &[f64]) -> u32 {
        let mut idx = 0u64;
        for f in &self.features {
            idx = idx * f.n_bins() as u64 + f.bin(features[f.index]) as u64;
        }
        idx as u32
    }

    pub fn index(&self, s: &StateVector) -> u32 {
        self.index_features(&s.features())
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("discretization serializes");
        hex::encode(Sha256::digest(json))
    }
}
