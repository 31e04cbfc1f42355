//! `sublob`: train policies and run the market experiments.
//!
//! Exit codes: 0 on success, 1 for configuration or usage errors, 2 for
//! failures while running.

use clap::{Parser, Subcommand};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use sublob::harness::output::{pnl_summaries, write_fidelity, write_pnl, write_quality, write_scenario};
use sublob::harness::output::{write_shap_global, write_shap_local, write_stages, write_summary};
use sublob::harness::{parse_config, report, ExperimentConfig, Harness, HarnessError};

#[derive(Parser, Debug)]
#[command(name = "sublob", version, about = "Market simulator with sub-rational RL investors")]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for policies, CSVs and manifests.
    #[arg(long, global = true, default_value = "results")]
    out_dir: PathBuf,
    /// Override the number of evaluation days.
    #[arg(long, global = true)]
    days: Option<usize>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train or load every policy the config refers to.
    Train,
    /// Per-day PnL of each profile (pnl.csv, pnl_summary.csv).
    Pnl,
    /// Market quality under each impact setting (quality.csv).
    Impact,
    /// Crafted-fundamental days (scenario_<kind>.csv, scenario_<kind>_stages.csv).
    Scenario {
        /// sine_wave, trend_with_shock or monotone_decline; all configured runs when omitted.
        #[arg(long)]
        kind: Option<String>,
    },
    /// Internal-model fidelity on held-out days (fidelity.csv).
    Fidelity,
    /// Shapley attributions (shap_local.csv, shap_global.csv).
    Shap,
    /// Summaries of pnl.csv and quality.csv found in the output directory.
    Report,
    /// Print the effective config with all defaults filled in.
    Config,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Pnl => "pnl",
            Command::Impact => "impact",
            Command::Scenario { .. } => "scenario",
            Command::Fidelity => "fidelity",
            Command::Shap => "shap",
            Command::Report => "report",
            Command::Config => "config",
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = cli.days {
        cfg.days = d;
        cfg.impact.days = None;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, HarnessError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    if let Command::Report = cli.command {
        let rep = report(&cli.out_dir)?;
        print!("{}", rep.render());
        return Ok(());
    }
    let cfg = load_config(cli)?;
    if let Command::Config = cli.command {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let dir = cli.out_dir.as_path();
    let mut h = Harness::new(cfg, Some(dir))?;
    std::fs::write(dir.join("config.echo.toml"), h.config().to_toml())?;
    match &cli.command {
        Command::Train => {
            for p in h.train_all()? {
                println!("{p}");
            }
        }
        Command::Pnl => {
            let rows = h.run_pnl()?;
            let hash = h.manifest().hash();
            write_pnl(create(dir, "pnl.csv")?, &rows, &hash)?;
            let sums = pnl_summaries(&rows);
            write_summary(create(dir, "pnl_summary.csv")?, &sums, &hash)?;
            for (_, p, s) in &sums {
                println!("{p:<28} n={} mean={:.2} std={:.2}", s.n, s.mean, s.std);
            }
        }
        Command::Impact => {
            let rows = h.run_impact()?;
            write_quality(create(dir, "quality.csv")?, &rows, &h.manifest().hash())?;
            println!("{} rows", rows.len());
        }
        Command::Scenario { kind } => {
            let results = h.run_scenarios(kind.as_deref())?;
            let hash = h.manifest().hash();
            for r in &results {
                let name = r.kind.name();
                write_scenario(create(dir, &format!("scenario_{name}.csv"))?, r, &hash)?;
                write_stages(create(dir, &format!("scenario_{name}_stages.csv"))?, r, &hash)?;
                for s in &r.stages {
                    let ratio = s.buy_sell_ratio().map_or("-".to_string(), |x| format!("{x:.2}"));
                    println!("{name} {} stage {}: buy/sell {ratio} hold {:.2}", s.profile, s.stage, s.hold_fraction());
                }
            }
        }
        Command::Fidelity => {
            let rep = h.run_fidelity()?;
            write_fidelity(create(dir, "fidelity.csv")?, &rep, &h.manifest().hash())?;
            for r in &rep.rows {
                println!("{:<14} emd={:.4} rmse={:.4}", r.variable, r.emd, r.rmse);
            }
        }
        Command::Shap => {
            let results = h.run_shap()?;
            let hash = h.manifest().hash();
            write_shap_local(create(dir, "shap_local.csv")?, &results, &hash)?;
            write_shap_global(create(dir, "shap_global.csv")?, &results, &hash)?;
            for r in &results {
                let top: Vec<String> = r
                    .importance
                    .ranking
                    .iter()
                    .take(5)
                    .map(|(j, v)| format!("{}={v:.3}", sublob::metrics::FEATURE_NAMES[*j]))
                    .collect();
                println!("{}: {}", r.profile, top.join(" "));
            }
        }
        Command::Report | Command::Config => unreachable!("handled above"),
    }
    h.manifest().write(&dir.join(format!("manifest_{}.json", cli.command.name())))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
