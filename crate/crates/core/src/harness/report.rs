//! Summaries recomputed from the raw result CSVs.

use super::output::Summary;
use super::{HarnessError, Result};
use crate::metrics::MarketQualityReport;
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    /// (setting, profile, summary) in first-appearance order.
    pub pnl: Vec<(String, String, Summary)>,
    /// Settings in first-appearance order.
    pub settings: Vec<String>,
    /// One row per metric: the metric name and a summary per setting.
    pub quality: Vec<(String, Vec<Option<Summary>>)>,
    /// Manifest hashes found in the inputs.
    pub sources: Vec<String>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn col(&self, name: &str, path: &Path) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| HarnessError::Malformed {
            path: path.to_path_buf(),
            message: format!("missing column `{name}`"),
        })
    }
}

/// Missing or empty files read as an empty table.
fn read_table(path: &Path) -> Result<Option<Table>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Ok(None);
    }
    let bad = |e: csv::Error| HarnessError::Malformed { path: path.to_path_buf(), message: e.to_string() };
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(bad)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        rows.push(rec.map_err(bad)?.iter().map(str::to_string).collect());
    }
    Ok(Some(Table { header, rows }))
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| HarnessError::Malformed {
        path: path.to_path_buf(),
        message: format!("row {line}: `{s}` is not a number"),
    })
}

fn push_unique(v: &mut Vec<String>, s: &str) {
    if !v.iter().any(|x| x == s) {
        v.push(s.to_string());
    }
}

/// Summaries of `pnl.csv` and `quality.csv` in `dir`; absent files give
/// empty sections. Writes `report_pnl.csv` and `report_quality.csv`.
pub fn report(dir: &Path) -> Result<Report> {
    let mut rep = Report::default();
    let mut sources = BTreeSet::new();

    let pnl_path = dir.join("pnl.csv");
    if let Some(t) = read_table(&pnl_path)? {
        let (cs, cp, cv) = (t.col("setting", &pnl_path)?, t.col("profile", &pnl_path)?, t.col("pnl", &pnl_path)?);
        let ch = t.col("manifest_hash", &pnl_path).ok();
        let mut keys: Vec<(String, String)> = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        for (i, r) in t.rows.iter().enumerate() {
            let v = parse_f64(&r[cv], &pnl_path, i + 2)?.ok_or_else(|| HarnessError::Malformed {
                path: pnl_path.clone(),
                message: format!("row {}: empty pnl", i + 2),
            })?;
            let k = (r[cs].clone(), r[cp].clone());
            match keys.iter().position(|x| *x == k) {
                Some(j) => values[j].push(v),
                None => {
                    keys.push(k);
                    values.push(vec![v]);
                }
            }
            if let Some(c) = ch {
                sources.insert(r[c].clone());
            }
        }
        for ((s, p), xs) in keys.into_iter().zip(values) {
            rep.pnl.push((s, p, Summary::of(&xs).expect("non-empty group")));
        }
    }

    let q_path = dir.join("quality.csv");
    if let Some(t) = read_table(&q_path)? {
        let cs = t.col("setting", &q_path)?;
        let ch = t.col("manifest_hash", &q_path).ok();
        let metric_cols: Vec<(String, usize)> = MarketQualityReport::METRIC_NAMES
            .iter()
            .filter_map(|m| t.col(m, &q_path).ok().map(|c| (m.to_string(), c)))
            .collect();
        for r in &t.rows {
            push_unique(&mut rep.settings, &r[cs]);
            if let Some(c) = ch {
                sources.insert(r[c].clone());
            }
        }
        for (m, c) in &metric_cols {
            let mut per = Vec::new();
            for s in &rep.settings {
                let mut xs = Vec::new();
                for (i, r) in t.rows.iter().enumerate().filter(|(_, r)| &r[cs] == s) {
                    if let Some(v) = parse_f64(&r[*c], &q_path, i + 2)? {
                        xs.push(v);
                    }
                }
                per.push(Summary::of(&xs));
            }
            rep.quality.push((m.clone(), per));
        }
    }
    rep.sources = sources.into_iter().collect();
    write_report(dir, &rep)?;
    Ok(rep)
}

fn write_report(dir: &Path, rep: &Report) -> Result<()> {
    let source = rep.sources.join(";");
    let mut out = csv::Writer::from_path(dir.join("report_pnl.csv"))?;
    out.write_record(["setting", "profile", "n", "mean", "std", "q1", "median", "q3", "manifest_hash"])?;
    for (s, p, m) in &rep.pnl {
        out.write_record([
            s.as_str(),
            p,
            &m.n.to_string(),
            &m.mean.to_string(),
            &m.std.to_string(),
            &m.q1.to_string(),
            &m.median.to_string(),
            &m.q3.to_string(),
            &source,
        ])?;
    }
    out.flush()?;

    let mut out = csv::Writer::from_path(dir.join("report_quality.csv"))?;
    let mut header = vec!["metric".to_string()];
    for s in &rep.settings {
        header.push(format!("{s}_mean"));
        header.push(format!("{s}_std"));
    }
    header.push("manifest_hash".into());
    out.write_record(&header)?;
    for (m, per) in &rep.quality {
        let mut rec = vec![m.clone()];
        for s in per {
            rec.push(s.as_ref().map(|x| x.mean.to_string()).unwrap_or_default());
            rec.push(s.as_ref().map(|x| x.std.to_string()).unwrap_or_default());
        }
        rec.push(source.clone());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

impl Report {
    /// Plain-text tables for the terminal.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<12} {:<28} {:>4} {:>10} {:>10} {:>10} {:>10} {:>10}\n", "setting", "profile", "n", "mean", "std", "q1", "median", "q3"));
        for (set, p, m) in &self.pnl {
            s.push_str(&format!(
                "{set:<12} {p:<28} {:>4} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2}\n",
                m.n, m.mean, m.std, m.q1, m.median, m.q3
            ));
        }
        if !self.quality.is_empty() {
            s.push('\n');
            s.push_str(&format!("{:<20}", "metric"));
            for set in &self.settings {
                s.push_str(&format!(" {set:>14}"));
            }
            s.push('\n');
            for (m, per) in &self.quality {
                s.push_str(&format!("{m:<20}"));
                for x in per {
                    match x {
                        Some(x) => s.push_str(&format!(" {:>14.6e}", x.mean)),
                        None => s.push_str(&format!(" {:>14}", "-")),
                    }
                }
                s.push('\n');
            }
        }
        s
    }
}
