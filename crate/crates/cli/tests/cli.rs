use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
days = 2
warmup_days = 3
profiles = [{ kind = "rational" }, { kind = "bounded", beta = 0.0 }]

[train]
episodes = 4
"#;

fn sublob(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sublob"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_config_key_exits_1_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[train]\ngama = 0.5\n").unwrap();
    let o = sublob(dir.path(), &["--config", "bad.toml", "config"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gama"), "{}", stderr(&o));
}

#[test]
fn missing_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = sublob(dir.path(), &["--config", "nowhere.toml", "pnl"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_error_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sublob(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(sublob(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn unknown_scenario_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = sublob(dir.path(), &["--out-dir", "out", "scenario", "--kind", "moon_landing"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn report_on_empty_pnl_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("out")).unwrap();
    std::fs::write(dir.path().join("out/pnl.csv"), "").unwrap();
    let o = sublob(dir.path(), &["--out-dir", "out", "report"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = std::fs::read_to_string(dir.path().join("out/report_pnl.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1);
}

#[test]
fn config_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    let o = sublob(dir.path(), &["--config", "tiny.toml", "config"]);
    assert_eq!(o.status.code(), Some(0));
    std::fs::write(dir.path().join("echo.toml"), &o.stdout).unwrap();
    let again = sublob(dir.path(), &["--config", "echo.toml", "config"]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn tiny_pnl_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    for (out, threads) in [("a", "1"), ("b", "2")] {
        let o = sublob(dir.path(), &["--config", "tiny.toml", "--out-dir", out, "--threads", threads, "pnl"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let read = |d: &str, f: &str| std::fs::read_to_string(dir.path().join(d).join(f)).unwrap();
    for f in ["pnl.csv", "pnl_summary.csv"] {
        assert_eq!(read("a", f), read("b", f), "{f} differs");
    }
    let echo = |d: &str| read(d, "config.echo.toml").lines().filter(|l| !l.starts_with("threads")).collect::<Vec<_>>().join("\n");
    assert_eq!(echo("a"), echo("b"));
    let pnl = std::fs::read_to_string(dir.path().join("a/pnl.csv")).unwrap();
    assert_eq!(pnl.lines().count(), 1 + 2 * 2);
    assert!(dir.path().join("a/policies/rational.policy").exists());
    assert!(dir.path().join("a/manifest_pnl.json").exists());
}
