//! Run manifests and CSV writers. Every row ends with the manifest hash.

use super::{ExperimentConfig, PnlRow, QualityRow, Result, ScenarioResult, ShapResult};
use crate::metrics::{MarketQualityReport, FEATURE_NAMES};
use crate::model::FidelityReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    /// Policy slug to SHA-256 of the policy file.
    pub artifact_hashes: BTreeMap<String, String>,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig, artifact_hashes: BTreeMap<String, String>) -> Self {
        RunManifest {
            config_hash: cfg.hash(),
            artifact_hashes,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: now_unix(),
            finished_unix: None,
        }
    }

    /// Hash of everything but the timestamps.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.config_hash.as_bytes());
        for (k, v) in &self.artifact_hashes {
            h.update(format!("\n{k}={v}").as_bytes());
        }
        h.update(format!("\nversion={}", self.version).as_bytes());
        hex::encode(h.finalize())
    }

    pub fn write(&mut self, path: &Path) -> Result<()> {
        self.finished_unix = Some(now_unix());
        #[derive(Serialize)]
        struct Out<'a> {
            hash: String,
            #[serde(flatten)]
            manifest: &'a RunManifest,
        }
        let text = serde_json::to_string_pretty(&Out { hash: self.hash(), manifest: self })?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Mean, sample standard deviation and quartiles (linear interpolation).
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Option<Summary> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (n - 1) as f64;
            let (lo, frac) = (h.floor() as usize, h.fract());
            if lo + 1 < n {
                s[lo] + frac * (s[lo + 1] - s[lo])
            } else {
                s[lo]
            }
        };
        Some(Summary { n, mean, std, q1: q(0.25), median: q(0.5), q3: q(0.75) })
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_pnl<W: Write>(w: W, rows: &[PnlRow], hash: &str) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["setting", "profile", "day", "seed", "pnl", "manifest_hash"])?;
    for r in rows {
        out.write_record([&r.setting, &r.profile, &r.day.to_string(), &r.seed.to_string(), &r.pnl.to_string(), hash])?;
    }
    out.flush()?;
    Ok(())
}

/// Per-profile summary rows, in first-appearance order.
pub fn pnl_summaries(rows: &[PnlRow]) -> Vec<(String, String, Summary)> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.setting.clone(), r.profile.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .filter_map(|(s, p)| {
            let xs: Vec<f64> = rows.iter().filter(|r| r.setting == s && r.profile == p).map(|r| r.pnl).collect();
            Summary::of(&xs).map(|sum| (s, p, sum))
        })
        .collect()
}

pub fn write_summary<W: Write>(w: W, summaries: &[(String, String, Summary)], hash: &str) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["setting", "profile", "n", "mean", "std", "q1", "median", "q3", "manifest_hash"])?;
    for (s, p, m) in summaries {
        out.write_record([
            s.as_str(),
            p,
            &m.n.to_string(),
            &m.mean.to_string(),
            &m.std.to_string(),
            &m.q1.to_string(),
            &m.median.to_string(),
            &m.q3.to_string(),
            hash,
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_quality<W: Write>(w: W, rows: &[QualityRow], hash: &str) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["setting", "day", "seed"];
    header.extend(MarketQualityReport::METRIC_NAMES);
    header.push("manifest_hash");
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.setting.clone(), r.day.to_string(), r.seed.to_string()];
        rec.extend(r.report.values().into_iter().map(fmt_opt));
        rec.push(hash.to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_scenario<W: Write>(w: W, res: &ScenarioResult, hash: &str) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "kind",
        "profile",
        "minute",
        "fundamental",
        "price",
        "holdings",
        "portfolio_value",
        "action",
        "manifest_hash",
    ])?;
    for t in &res.traces {
        out.write_record([
            res.kind.name(),
            &t.profile,
            &t.minute.to_string(),
            &t.fundamental.to_string(),
            &t.price.to_string(),
            &t.holdings.to_string(),
            &t.portfolio_value.to_string(),
            &t.action.to_string(),
            hash,
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_stages<W: Write>(w: W, res: &ScenarioResult, hash: &str) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "kind",
        "profile",
        "stage",
        "buys",
        "sells",
        "holds",
        "buy_sell_ratio",
        "hold_fraction",
        "manifest_hash",
    ])?;
    for s in &res.stages {
        out.write_record([
            res.kind.name(),
            &s.profile,
            &s.stage.to_string(),
            &s.buys.to_string(),
            &s.sells.to_string(),
            &s.holds.to_string(),
            &fmt_opt(s.buy_sell_ratio()),
            &s.hold_fraction().to_string(),
            hash,
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_fidelity<W: Write>(w: W, rep: &FidelityReport, hash: &str) -> Result<()> {
    rep.write_csv(w, hash)?;
    Ok(())
}

/// Long-format local attributions of every profile.
pub fn write_shap_local<W: Write>(w: W, results: &[ShapResult], hash: &str) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["profile", "state_id", "feature", "shap_value", "feature_value", "manifest_hash"])?;
    for r in results {
        let name = r.profile.to_string();
        for (i, (row, x)) in r.importance.local.iter().zip(&r.states).enumerate() {
            for (j, v) in row.iter().enumerate() {
                out.write_record([&name, &i.to_string(), FEATURE_NAMES[j], &v.to_string(), &x[j].to_string(), hash])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_shap_global<W: Write>(w: W, results: &[ShapResult], hash: &str) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["profile", "rank", "feature", "importance", "manifest_hash"])?;
    for r in results {
        let name = r.profile.to_string();
        for (k, (j, v)) in r.importance.ranking.iter().enumerate() {
            out.write_record([&name, &(k + 1).to_string(), FEATURE_NAMES[*j], &v.to_string(), hash])?;
        }
    }
    out.flush()?;
    Ok(())
}
