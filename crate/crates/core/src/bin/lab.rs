use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use convexity_lab::gauss::rng::with_workers;
use convexity_lab::lab::{run, ExperimentConfig, Format};
use convexity_lab::Result;

/// Monte Carlo laboratory for lower bounds on testing convexity.
///
/// The worker count comes from `LAB_WORKERS` (default: all cores).
#[derive(Parser, Debug)]
#[command(name = "lab", version)]
struct Cli {
    /// Experiment name; `lab manifest` lists them.
    experiment: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "N")]
    big_n: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Required unless given in --config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<Format>,
    /// Constant override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Calibration record for tolerant experiments [default: calibration.json].
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// JSON file mirroring the command-line options.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn build_config(cli: Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => {
            let name = cli
                .experiment
                .clone()
                .ok_or_else(|| convexity_lab::LabError::param("experiment", "missing experiment name"))?;
            let seed = cli
                .seed
                .ok_or_else(|| convexity_lab::LabError::param("seed", "--seed is required"))?;
            ExperimentConfig::new(&name, seed)
        }
    };
    if let Some(e) = cli.experiment {
        cfg.experiment = e;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.n {
        cfg.n = n;
    }
    cfg.big_n = cli.big_n.or(cfg.big_n);
    cfg.q = cli.q.or(cfg.q);
    cfg.trials = cli.trials.or(cfg.trials);
    cfg.out = cli.out.or(cfg.out);
    cfg.calibration = cli.calibration.or(cfg.calibration);
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    for kv in &cli.set {
        cfg.push_override(kv)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match build_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let workers = std::env::var("LAB_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let report = match with_workers(workers, || run(&cfg)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let body = match cfg.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    match &cfg.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &body) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => print!("{body}"),
    }
    for line in report.summary_lines() {
        eprintln!("{line}");
    }
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
