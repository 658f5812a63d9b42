//! Pinned configurations for the six reproduction figures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dsgld::samplers::SamplerKind;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, GraphConfig, InitConfig, ModelConfig};
use crate::experiment::{build_setup, execute_with_setup, write_artifact, RunArtifact};
use crate::tune::{tune_stepsize, TuneOutcome};
use crate::HarnessError;

pub const FIGURES: [&str; 6] = ["fig2a", "fig2b", "fig2c", "fig3a", "fig3b", "fig3c"];

/// Stepsize grid as multiples of `1/L`.
pub const GRID_MULTIPLIERS: [f64; 12] = [0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.75, 1.0];

/// Trials per grid point when tuning.
pub const DEFAULT_TUNE_TRIALS: usize = 50;

/// Stepsize multiple of `1/L` used when tuning is skipped.
pub const UNTUNED_MULTIPLIER: f64 = 0.2;

fn barbell(agents: usize) -> GraphConfig {
    GraphConfig::Barbell { agents, period: 50, seed: 0, eps_hat: 1e-6, window: None }
}

fn lollipop(agents: usize) -> GraphConfig {
    GraphConfig::Lollipop {
        agents,
        period: 50,
        seed: 0,
        eps_hat: 1e-6,
        window: None,
        branch_min: 3,
        branch_max: 4,
        attach: 3,
    }
}

fn linear(batch: Option<usize>) -> ModelConfig {
    ModelConfig::LinearSynthetic { samples: 100, dim: 5, reg: 0.1, noise_var: 1.0, batch, data_seed: 0 }
}

fn logistic() -> ModelConfig {
    ModelConfig::LogisticSynthetic {
        samples: 600,
        dim: 5,
        reg: 0.1,
        train_fraction: 0.7,
        balanced_train: Some(380),
        batch: Some(1),
        data_seed: 0,
    }
}

/// The pinned configuration for `figure`; stepsizes are placeholders until tuned.
pub fn figure_config(figure: &str, data: Option<&Path>) -> Result<ExperimentConfig, HarnessError> {
    let (experiment, graph, model) = match figure {
        "fig2a" => (ExperimentKind::LinregW2, barbell(20), linear(None)),
        "fig2b" => (ExperimentKind::LinregW2, barbell(20), linear(Some(3))),
        "fig2c" => (ExperimentKind::LinregW2, lollipop(20), linear(None)),
        "fig3a" => (ExperimentKind::LogregAccuracy, barbell(20), logistic()),
        "fig3b" => (ExperimentKind::LogregAccuracy, lollipop(20), logistic()),
        "fig3c" => {
            let path = data.ok_or_else(|| {
                dsgld::Error::Data("fig3c needs the breast-cancer CSV; pass it with --data".into())
            })?;
            let model = ModelConfig::LogisticCsv {
                path: path.to_path_buf(),
                reg: 0.3,
                train_fraction: 0.09,
                balanced_train: 30,
                has_header: false,
                batch: Some(1),
                data_seed: 0,
            };
            (ExperimentKind::LogregAccuracy, barbell(30), model)
        }
        other => return Err(HarnessError::UnknownFigure(other.to_string())),
    };
    let samplers = vec![SamplerKind::Diging, SamplerKind::DeSgld];
    let eta = samplers.iter().map(|&k| (k, 1e-3)).collect();
    Ok(ExperimentConfig {
        experiment,
        samplers,
        graph,
        model,
        eta,
        iterations: 100,
        trials: 200,
        base_seed: 0,
        output_dir: PathBuf::from(figure),
        threads: 0,
        init: InitConfig::default(),
        plots: true,
    })
}

#[derive(Clone, Debug)]
pub struct ReproduceOptions {
    pub data: Option<PathBuf>,
    pub trials: Option<usize>,
    pub tune_trials: usize,
    pub tune: bool,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        Self { data: None, trials: None, tune_trials: DEFAULT_TUNE_TRIALS, tune: true }
    }
}

#[derive(Debug, Serialize)]
pub struct Reproduction {
    #[serde(skip)]
    pub artifact: RunArtifact,
    pub lips: f64,
    pub tuning: Option<TuneOutcome>,
}

/// Tunes (unless disabled) and runs the pinned configuration for `figure`.
///
/// The tuned configuration is what the artifact's provenance echoes, so a
/// `run` of it reproduces the same CSVs.
pub fn reproduce(figure: &str, opts: &ReproduceOptions) -> Result<Reproduction, HarnessError> {
    let mut cfg = figure_config(figure, opts.data.as_deref())?;
    if let Some(t) = opts.trials {
        cfg.trials = t;
    }
    let setup = build_setup(&cfg)?;
    let lips = setup.model.lips;
    let tuning = if opts.tune {
        let grid: Vec<f64> = GRID_MULTIPLIERS.iter().map(|m| m / lips).collect();
        let outcome = tune_stepsize(&cfg, &grid, Some(opts.tune_trials))?;
        cfg.eta = outcome.best();
        Some(outcome)
    } else {
        cfg.eta = cfg.samplers.iter().map(|&k| (k, UNTUNED_MULTIPLIER / lips)).collect::<BTreeMap<_, _>>();
        None
    };
    let artifact = execute_with_setup(&cfg, &setup)?;
    Ok(Reproduction { artifact, lips, tuning })
}

/// [`reproduce`] and write into `root / figure`, plus `tuning.json` when tuned.
pub fn reproduce_to(figure: &str, opts: &ReproduceOptions, root: &Path) -> Result<Reproduction, HarnessError> {
    let mut rep = reproduce(figure, opts)?;
    let dir = root.join(&rep.artifact.provenance.config.output_dir);
    write_artifact(&mut rep.artifact, &dir)?;
    if let Some(t) = &rep.tuning {
        let json = serde_json::to_string_pretty(t).map_err(dsgld::Error::from)?;
        std::fs::write(dir.join("tuning.json"), json + "\n")?;
    }
    Ok(rep)
}
