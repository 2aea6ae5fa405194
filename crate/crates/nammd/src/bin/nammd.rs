//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use clap::Parser;
use nammd::harness::{
    emit_results, render_results, run_experiment, ExperimentConfig, ExperimentKind, OutputFormat,
};
use nammd::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "nammd",
    about = "Kernel closeness and two-sample testing experiments",
    version
)]
struct Cli {
    /// Experiment kind (power_dct, power_tst, type1_dct, type1_tst,
    /// closeness_sweep, figure1_sweep, oracle_check). Overrides the
    /// config file's kind.
    #[arg(long)]
    experiment: Option<String>,

    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output format.
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,

    /// Worker threads for the Monte Carlo loops (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            ExperimentConfig::from_json(&text)?
        }
        None => {
            let kind: ExperimentKind = cli
                .experiment
                .as_deref()
                .ok_or_else(|| Error::Config("pass --experiment or --config".into()))?
                .parse()?;
            ExperimentConfig::new(kind)
        }
    };
    if let Some(kind) = &cli.experiment {
        cfg.experiment = kind.parse()?;
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure thread pool: {e}")))?;
    }
    let cfg = build_config(cli)?;
    let started = std::time::Instant::now();
    let rows = run_experiment(&cfg)?;
    let elapsed = started.elapsed().as_secs_f64();

    let out_path = cli
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from));
    match out_path {
        Some(path) => {
            emit_results(&rows, cli.format, &path)?;
            eprintln!(
                "{}: {} rows -> {} ({elapsed:.2}s)",
                cfg.experiment,
                rows.len(),
                path.display()
            );
        }
        None => {
            print!("{}", render_results(&rows, cli.format)?);
            eprintln!("{}: {} rows ({elapsed:.2}s)", cfg.experiment, rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) | Err(e @ Error::InvalidInput(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
