use sublob::harness::output::{pnl_summaries, write_pnl, write_quality};
use sublob::harness::{report, ExperimentConfig, Harness, ImpactSetting, PnlRow, Summary};
use sublob::metrics::MarketQualityReport;

fn baseline_only(threads: usize, settings: &[&str]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { days: 3, threads, ..ExperimentConfig::default() };
    cfg.impact.days = None;
    cfg.impact.settings = settings.iter().map(|s| ImpactSetting { name: s.to_string(), profile: None }).collect();
    cfg
}

#[test]
fn unknown_key_is_named() {
    let err = ExperimentConfig::from_toml("[train]\ngama = 0.9\n").unwrap_err();
    assert!(err.to_string().contains("gama"), "{err}");
}

#[test]
fn echo_round_trips() {
    let cfg = ExperimentConfig::from_toml("seed = 4\ndays = 7\n").unwrap();
    let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.hash(), again.hash());
}

#[test]
fn baseline_impact_is_deterministic_across_thread_counts() {
    let a = Harness::new(baseline_only(1, &["baseline"]), None).unwrap().run_impact().unwrap();
    let b = Harness::new(baseline_only(2, &["baseline"]), None).unwrap().run_impact().unwrap();
    assert_eq!(a.len(), 3);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    write_quality(&mut x, &a, "h").unwrap();
    write_quality(&mut y, &b, "h").unwrap();
    assert_eq!(x, y);
}

#[test]
fn report_of_empty_inputs_has_no_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pnl.csv"), "").unwrap();
    let rep = report(dir.path()).unwrap();
    assert!(rep.pnl.is_empty() && rep.quality.is_empty());
    assert!(dir.path().join("report_pnl.csv").exists());
}

#[test]
fn report_compares_settings_per_metric() {
    let dir = tempfile::tempdir().unwrap();
    let rows = Harness::new(baseline_only(1, &["baseline", "again"]), None).unwrap().run_impact().unwrap();
    write_quality(std::fs::File::create(dir.path().join("quality.csv")).unwrap(), &rows, "abc").unwrap();
    let rep = report(dir.path()).unwrap();
    assert_eq!(rep.settings, vec!["baseline", "again"]);
    assert_eq!(rep.quality.len(), MarketQualityReport::METRIC_NAMES.len());
    // Identical seeds and no RL agents: both settings see the same market.
    for (_, per) in &rep.quality {
        assert_eq!(per[0], per[1]);
    }
    let text = std::fs::read_to_string(dir.path().join("report_quality.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + MarketQualityReport::METRIC_NAMES.len());
    assert_eq!(rep.sources, vec!["abc"]);
}

#[test]
fn report_recomputes_pnl_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<PnlRow> = (0..9)
        .map(|d| PnlRow {
            setting: "s".into(),
            profile: if d % 3 == 0 { "a" } else { "b" }.into(),
            day: d,
            seed: d as u64,
            pnl: (d as f64 - 4.0) * 12.5,
        })
        .collect();
    write_pnl(std::fs::File::create(dir.path().join("pnl.csv")).unwrap(), &rows, "h").unwrap();
    let rep = report(dir.path()).unwrap();
    assert_eq!(rep.pnl, pnl_summaries(&rows));
    let a = Summary::of(&[-50.0, -12.5, 25.0]).unwrap();
    assert_eq!(rep.pnl[0], ("s".to_string(), "a".to_string(), a));
}

#[test]
fn malformed_pnl_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pnl.csv"), "setting,profile,pnl\ns,a,lots\n").unwrap();
    assert!(report(dir.path()).is_err());
}
