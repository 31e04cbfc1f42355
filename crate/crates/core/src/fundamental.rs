//! Exogenous fundamental value series.
//!
//! Training and evaluation days use a discrete-time mean-reverting
//! Ornstein-Uhlenbeck path. Behavioural demonstrations use deterministic
//! hand-crafted paths (sine wave, trend with a temporary shock, monotone
//! decline).

use crate::types::{Price, TRADING_MINUTES};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FundamentalError {
    #[error("parameter `{0}` must be finite")]
    NonFinite(&'static str),
    #[error("reversion rate {0} outside [0, 1]")]
    Reversion(f64),
    #[error("negative shock stddev {0}")]
    NegativeSigma(f64),
    #[error("degenerate scenario: {0}")]
    Degenerate(String),
    #[error("path value {value} at minute {minute} is not positive")]
    NonPositive { minute: usize, value: f64 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("path file is empty")]
    Empty,
}

/// Discrete-time OU parameters, all in price units per minute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OUParams {
    pub mean: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub initial: f64,
}

impl Default for OUParams {
    fn default() -> Self {
        OUParams { mean: 200_000.0, kappa: 0.05, sigma: 20.0, initial: 200_000.0 }
    }
}

impl OUParams {
    pub fn validate(&self) -> Result<(), FundamentalError> {
        for (name, v) in [
            ("mean", self.mean),
            ("kappa", self.kappa),
            ("sigma", self.sigma),
            ("initial", self.initial),
        ] {
            if !v.is_finite() {
                return Err(FundamentalError::NonFinite(name));
            }
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(FundamentalError::Reversion(self.kappa));
        }
        if self.sigma < 0.0 {
            return Err(FundamentalError::NegativeSigma(self.sigma));
        }
        Ok(())
    }
}

/// Per-minute fundamental value in (fractional) price units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FundamentalPath {
    values: Vec<f64>,
}

impl FundamentalPath {
    pub fn new(values: Vec<f64>) -> Result<Self, FundamentalError> {
        if values.is_empty() {
            return Err(FundamentalError::Empty);
        }
        if let Some((minute, &value)) =
            values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(FundamentalError::NonPositive { minute, value });
        }
        Ok(FundamentalPath { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at `minute`, holding the last value past the end.
    pub fn at(&self, minute: usize) -> f64 {
        self.values[minute.min(self.values.len() - 1)]
    }

    pub fn opening_price(&self) -> Price {
        Price::round_positive(self.values[0])
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), FundamentalError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["fundamental"])?;
        for v in &self.values {
            out.write_record([v.to_string()])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, FundamentalError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut values = Vec::new();
        for rec in rdr.deserialize::<(f64,)>() {
            values.push(rec?.0);
        }
        FundamentalPath::new(values)
    }
}

pub fn generate_ou_path(
    params: &OUParams,
    len: usize,
    seed: u64,
) -> Result<FundamentalPath, FundamentalError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(len);
    let mut r = params.initial;
    for _ in 0..len {
        values.push(r.max(1.0));
        let eps: f64 = StandardNormal.sample(&mut rng);
        r = r + params.kappa * (params.mean - r) + params.sigma * eps;
    }
    FundamentalPath::new(values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioKind {
    /// `base * (1 + amplitude * sin(2 pi periods t / (len - 1)))`.
    SineWave { amplitude: f64, periods: f64 },
    /// Linear rise of `slope` (fraction of base over the day) with a
    /// multiplicative dip of depth `shock_depth` across `[shock_start, shock_end)`.
    TrendWithShock { slope: f64, shock_depth: f64, shock_start: usize, shock_end: usize },
    /// Linear decay losing `total_drop` of base by the close.
    MonotoneDecline { total_drop: f64 },
}

impl ScenarioKind {
    pub fn sine_wave() -> Self {
        ScenarioKind::SineWave { amplitude: 0.01, periods: 1.0 }
    }

    pub fn trend_with_shock() -> Self {
        ScenarioKind::TrendWithShock {
            slope: 0.01,
            shock_depth: 0.01,
            shock_start: TRADING_MINUTES / 3,
            shock_end: 2 * TRADING_MINUTES / 3,
        }
    }

    pub fn monotone_decline() -> Self {
        ScenarioKind::MonotoneDecline { total_drop: 0.02 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::SineWave { .. } => "sine_wave",
            ScenarioKind::TrendWithShock { .. } => "trend_with_shock",
            ScenarioKind::MonotoneDecline { .. } => "monotone_decline",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sine_wave" | "sine" => Some(Self::sine_wave()),
            "trend_with_shock" | "shock" => Some(Self::trend_with_shock()),
            "monotone_decline" | "decline" => Some(Self::monotone_decline()),
            _ => None,
        }
    }
}

pub fn generate_crafted_path(
    kind: &ScenarioKind,
    base: f64,
    len: usize,
) -> Result<FundamentalPath, FundamentalError> {
    if len < 2 {
        return Err(FundamentalError::Degenerate(format!("path length {len}")));
    }
    if !(base.is_finite() && base > 0.0) {
        return Err(FundamentalError::Degenerate(format!("base {base}")));
    }
    let last = (len - 1) as f64;
    let values: Vec<f64> = match *kind {
        ScenarioKind::SineWave { amplitude, periods } => {
            if !(amplitude.abs() < 1.0) || periods <= 0.0 {
                return Err(FundamentalError::Degenerate(format!(
                    "sine amplitude {amplitude}, periods {periods}"
                )));
            }
            (0..len)
                .map(|t| {
                    let phase = 2.0 * PI * periods * t as f64 / last;
                    // Snap whole periods so the open and close coincide exactly.
                    let s = if t == len - 1 && periods.fract() == 0.0 { 0.0 } else { phase.sin() };
                    base * (1.0 + amplitude * s)
                })
                .collect()
        }
        ScenarioKind::TrendWithShock { slope, shock_depth, shock_start, shock_end } => {
            if shock_end <= shock_start || shock_end > len || !(0.0..1.0).contains(&shock_depth) {
                return Err(FundamentalError::Degenerate(format!(
                    "shock window [{shock_start}, {shock_end}) depth {shock_depth}"
                )));
            }
            let width = (shock_end - shock_start) as f64;
            (0..len)
                .map(|t| {
                    let trend = base * (1.0 + slope * t as f64 / last);
                    if (shock_start..shock_end).contains(&t) {
                        let x = (t - shock_start) as f64 / width;
                        trend * (1.0 - shock_depth * (PI * x).sin())
                    } else {
                        trend
                    }
                })
                .collect()
        }
        ScenarioKind::MonotoneDecline { total_drop } => {
            if !(total_drop > 0.0 && total_drop < 1.0) {
                return Err(FundamentalError::Degenerate(format!("total drop {total_drop}")));
            }
            (0..len).map(|t| base * (1.0 - total_drop * t as f64 / last)).collect()
        }
    };
    FundamentalPath::new(values)
}

/// Noisy observation rounded to a whole price unit, never below 1.
pub fn observe_noisy<R: Rng + ?Sized>(
    path: &FundamentalPath,
    minute: usize,
    obs_stddev: f64,
    rng: &mut R,
) -> Price {
    let noise: f64 = if obs_stddev > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        z * obs_stddev
    } else {
        0.0
    };
    Price::round_positive(path.at(minute) + noise)
}
