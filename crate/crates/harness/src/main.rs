use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use dsgld::theory::ComplexityVariant;
use dsgld_harness::config::ExperimentConfig;
use dsgld_harness::experiment::{run_experiment, RunArtifact};
use dsgld_harness::figures::{reproduce_to, ReproduceOptions, DEFAULT_TUNE_TRIALS};
use dsgld_harness::report::{build_report, ReportOptions, DEFAULT_INIT_TRIALS};
use dsgld_harness::tune::tune_stepsize;
use dsgld_harness::{output_root, OUTPUT_ROOT_ENV};

/// Decentralized Langevin sampling experiments.
#[derive(Parser)]
#[command(name = "dsgld", version, after_help = format!("Outputs go below ${OUTPUT_ROOT_ENV} (default: current directory)."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the output directory below the output root.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Tune and run one of the pinned figure configurations.
    Reproduce {
        /// fig2a, fig2b, fig2c, fig3a, fig3b or fig3c.
        figure: String,
        /// Breast-cancer CSV (required for fig3c).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Trials per grid point while tuning.
        #[arg(long, default_value_t = DEFAULT_TUNE_TRIALS)]
        tune_trials: usize,
        /// Skip tuning and use 0.2/L for every sampler.
        #[arg(long)]
        no_tune: bool,
    },
    /// Grid-search the stepsize of every configured sampler.
    Tune {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated stepsizes.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Evaluate the convergence-bound constants for a config, as JSON.
    TheoryReport {
        #[arg(long)]
        config: PathBuf,
        /// Target accuracy for the explicit stepsize/iteration schedule.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Use the factor-4 complexity constant instead of 3.
        #[arg(long)]
        statement_constant: bool,
        #[arg(long, default_value_t = DEFAULT_INIT_TRIALS)]
        init_trials: usize,
    },
}

fn summarize(artifact: &RunArtifact) -> bool {
    for r in &artifact.results {
        println!("{}  eta={:.6e}  final mean={:.6}", r.kind.name(), r.eta, r.curve.final_mean());
    }
    let mut ok = true;
    for c in &artifact.provenance.self_checks {
        if !c.passed {
            ok = false;
            eprintln!("self-check {} failed: {}", c.name, c.detail);
        }
    }
    if let Some(dir) = &artifact.directory {
        println!("wrote {}", dir.display());
    }
    ok
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    let root = output_root();
    match cli.command {
        Command::Run { config, trials, output } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            let artifact = run_experiment(&cfg, &root)?;
            Ok(summarize(&artifact))
        }
        Command::Reproduce { figure, data, trials, tune_trials, no_tune } => {
            let opts = ReproduceOptions { data, trials, tune_trials, tune: !no_tune };
            let rep = reproduce_to(&figure, &opts, &root).with_context(|| format!("reproducing {figure}"))?;
            if let Some(t) = &rep.tuning {
                for (kind, s) in &t.samplers {
                    println!("tuned {}: eta={:.6e} ({:.3}/L)", kind.name(), s.best_eta, s.best_eta * rep.lips);
                }
            }
            Ok(summarize(&rep.artifact))
        }
        Command::Tune { config, grid, trials } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let outcome = tune_stepsize(&cfg, &grid, trials)?;
            println!("{}", serde_json::to_string_pretty(&outcome)?);
            Ok(true)
        }
        Command::TheoryReport { config, epsilon, statement_constant, init_trials } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let variant = if statement_constant { ComplexityVariant::Statement } else { ComplexityVariant::Proof };
            let report = build_report(&cfg, &ReportOptions { epsilon, variant, init_trials })?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }
    }
}
