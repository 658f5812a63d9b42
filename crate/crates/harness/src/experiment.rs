//! Trial orchestration, metric curves, self-checks and run artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dsgld::data::{
    load_real_csv, partition, synth_linear, synth_logistic, Dataset, RealCsvOptions,
};
use dsgld::metrics::{accuracy_curve, w2_to_posterior_curve, MetricCurve, TrialEnsemble};
use dsgld::models::{
    estimate_gradient_noise, gaussian_toy_model, linear_regression_model, logistic_regression_model, GradientMode,
    ModelSpec,
};
use dsgld::network::{
    barbell_schedule_with, lollipop_schedule_with, spectral_diagnostics, static_complete_schedule, GraphSchedule,
};
use dsgld::rng::{StreamDigest, TrialStreams};
use dsgld::samplers::{run_with_observer, SamplerConfig, SamplerKind, Trajectory};
use dsgld::theory::lemma_bound_params;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind, GraphConfig, ModelConfig};
use crate::{plot, HarnessError};

/// Data-seed attempts when class balancing is infeasible for a seed.
const DATA_SEED_ATTEMPTS: u64 = 100;
const TRACKING_TOL: f64 = 1e-10;

/// Everything shared by every trial of an experiment.
#[derive(Clone, Debug)]
pub struct Setup {
    pub schedule: GraphSchedule,
    pub delta: f64,
    pub model: ModelSpec,
    pub mode: GradientMode,
    pub test: Option<Dataset>,
    pub data_seed: Option<u64>,
    /// Estimated gradient-noise bound `σ²`.
    pub sigma_sq: f64,
}

pub fn build_schedule(graph: &GraphConfig) -> Result<GraphSchedule, HarnessError> {
    Ok(match *graph {
        GraphConfig::Barbell { agents, period, seed, eps_hat, window } => {
            let s = barbell_schedule_with(agents, period, seed, eps_hat)?;
            s.with_window(window.unwrap_or(period))
        }
        GraphConfig::Lollipop { agents, period, seed, eps_hat, window, branch_min, branch_max, attach } => {
            let s = lollipop_schedule_with(agents, (branch_min, branch_max), attach, period, seed, eps_hat)?;
            s.with_window(window.unwrap_or(period))
        }
        GraphConfig::Complete { agents, eps_hat } => static_complete_schedule(agents, eps_hat)?,
    })
}

fn gradient_mode(batch: Option<usize>, model: &ModelSpec) -> Result<GradientMode, HarnessError> {
    let local_n = model.local_n();
    match batch {
        None => Ok(GradientMode::Exact),
        Some(b) if b == 0 || b > local_n => {
            Err(HarnessError::Config(format!("batch size {b} outside [1, {local_n}]")))
        }
        Some(b) => Ok(GradientMode::for_batch(b, local_n)),
    }
}

pub fn build_setup(cfg: &ExperimentConfig) -> Result<Setup, HarnessError> {
    let schedule = build_schedule(&cfg.graph)?;
    let agents = schedule.num_agents();
    let delta = spectral_diagnostics(&schedule, schedule.window())?.delta;
    let (model, batch, test, data_seed) = match &cfg.model {
        ModelConfig::LinearSynthetic { samples, dim, reg, noise_var, batch, data_seed } => {
            let (data, _) = synth_linear(*samples, *dim, *reg, *noise_var, *data_seed)?;
            let part = partition(data.len(), agents, *data_seed)?;
            (linear_regression_model(&data.blocks(&part), *reg)?, *batch, None, Some(*data_seed))
        }
        ModelConfig::LogisticSynthetic { samples, dim, reg, train_fraction, balanced_train, batch, data_seed } => {
            let mut attempt = 0;
            let (train, test, used) = loop {
                let seed = data_seed + attempt;
                match synth_logistic(*samples, *dim, *reg, *train_fraction, *balanced_train, seed) {
                    Ok((train, test)) => break (train, test, seed),
                    Err(dsgld::Error::Data(msg)) if attempt + 1 < DATA_SEED_ATTEMPTS => {
                        log::info!("data seed {seed} rejected ({msg}); retrying");
                        attempt += 1;
                    }
                    Err(e) => return Err(e.into()),
                }
            };
            let part = partition(train.len(), agents, used)?;
            (logistic_regression_model(&train.blocks(&part), *reg)?, *batch, Some(test), Some(used))
        }
        ModelConfig::LogisticCsv { path, reg, train_fraction, balanced_train, has_header, batch, data_seed } => {
            if !path.exists() {
                return Err(dsgld::Error::Data(format!("dataset {} not found", path.display())).into());
            }
            let opts = RealCsvOptions {
                train_fraction: *train_fraction,
                balanced_train: *balanced_train,
                seed: *data_seed,
                has_header: *has_header,
            };
            let (train, test) = load_real_csv(path, &opts)?;
            let part = partition(train.len(), agents, *data_seed)?;
            (logistic_regression_model(&train.blocks(&part), *reg)?, *batch, Some(test), Some(*data_seed))
        }
        ModelConfig::GaussianToy { centers } => {
            let centers: Vec<DVector<f64>> = centers.iter().map(|c| DVector::from_column_slice(c)).collect();
            (gaussian_toy_model(&centers)?, None, None, None)
        }
    };
    if model.num_agents() != agents {
        return Err(HarnessError::Config(format!(
            "model has {} agents, graph has {agents}",
            model.num_agents()
        )));
    }
    let mode = gradient_mode(batch, &model)?;
    let points = [DVector::zeros(model.dim), model.minimizer.clone()];
    let sigma_sq = estimate_gradient_noise(&model, mode, &points, 2000, cfg.base_seed, 1.5)?;
    Ok(Setup { schedule, delta, model, mode, test, data_seed, sigma_sq })
}

pub fn sampler_config(cfg: &ExperimentConfig, setup: &Setup, eta: f64) -> SamplerConfig {
    SamplerConfig::new(eta, cfg.iterations)
        .with_gradient_mode(setup.mode)
        .with_init(cfg.init.law.clone())
        .with_tracker_init(cfg.init.tracker)
}

/// Trials of one sampler at one stepsize.
#[derive(Clone, Debug)]
pub struct SamplerRun {
    pub kind: SamplerKind,
    pub eta: f64,
    pub trajectories: Vec<Trajectory>,
    pub digest: StreamDigest,
    /// Largest `‖ȳ − mean_i g̃_i(x_i)‖ / (1 + ‖ȳ‖)` over trials and iterations.
    pub tracking_deviation: f64,
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))
}

pub fn execute_sampler(
    cfg: &ExperimentConfig,
    setup: &Setup,
    kind: SamplerKind,
    eta: f64,
    trials: usize,
) -> Result<SamplerRun, HarnessError> {
    let sampler_cfg = sampler_config(cfg, setup, eta);
    let window_end = cfg.iterations.saturating_sub(1);
    let one_trial = |t: usize| -> Result<(Trajectory, StreamDigest, f64), HarnessError> {
        let mut streams =
            TrialStreams::new(cfg.base_seed.wrapping_add(t as u64), 0).with_digest(StreamDigest::new(1, window_end));
        let mut worst = 0.0f64;
        let traj = run_with_observer(kind, &setup.schedule, &setup.model, &sampler_cfg, &streams, |s| {
            if kind == SamplerKind::Diging {
                let ybar = s.mean_y();
                let gbar = s.prev_grad.row_mean().transpose();
                worst = worst.max((&ybar - gbar).norm() / (1.0 + ybar.norm()));
            }
        })
        .map_err(|source| HarnessError::Trial { sampler: kind.name().into(), trial: t as u64, source })?;
        let digest = streams.take_digest().expect("digest was attached");
        Ok((traj, digest, worst))
    };
    let results: Vec<_> = thread_pool(cfg.threads)?.install(|| (0..trials).into_par_iter().map(one_trial).collect());
    let mut trajectories = Vec::with_capacity(trials);
    let mut digest = StreamDigest::new(1, window_end);
    let mut tracking_deviation = 0.0f64;
    for r in results {
        let (traj, d, w) = r?;
        trajectories.push(traj);
        digest.merge(&d);
        tracking_deviation = tracking_deviation.max(w);
    }
    Ok(SamplerRun { kind, eta, trajectories, digest, tracking_deviation })
}

/// W₂-to-posterior or accuracy curve, depending on the experiment.
pub fn metric_curve(cfg: &ExperimentConfig, setup: &Setup, run: &SamplerRun) -> Result<MetricCurve, HarnessError> {
    let ensemble = TrialEnsemble::from_trajectories(&run.trajectories)?;
    Ok(match cfg.experiment {
        ExperimentKind::LinregW2 => {
            let target = setup
                .model
                .target
                .as_ref()
                .ok_or_else(|| HarnessError::Config("model has no closed-form target".into()))?;
            w2_to_posterior_curve(&ensemble, target)?
        }
        ExperimentKind::LogregAccuracy => {
            let test = setup.test.as_ref().ok_or_else(|| HarnessError::Config("no test set".into()))?;
            accuracy_curve(&ensemble, test)?
        }
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelfCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl SelfCheck {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSummary {
    pub dim: usize,
    pub agents: usize,
    pub local_n: usize,
    pub mu: f64,
    pub lips: f64,
    pub sigma_sq: f64,
    pub gradient_mode: GradientMode,
    pub data_seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config: ExperimentConfig,
    pub schedule_hash: String,
    pub period: usize,
    pub window: usize,
    pub delta: f64,
    pub model: ModelSummary,
    /// Iteration window covered by the stream digests.
    pub digest_window: (usize, usize),
    pub stream_digests: BTreeMap<String, String>,
    pub eta_bar: Option<f64>,
    /// Samplers whose stepsize exceeds the explicit bound `η̄`.
    pub beyond_eta_bar: Vec<String>,
    pub self_checks: Vec<SelfCheck>,
}

#[derive(Clone, Debug)]
pub struct SamplerResult {
    pub kind: SamplerKind,
    pub eta: f64,
    pub curve: MetricCurve,
}

#[derive(Clone, Debug)]
pub struct RunArtifact {
    pub provenance: Provenance,
    pub results: Vec<SamplerResult>,
    pub directory: Option<PathBuf>,
}

impl RunArtifact {
    pub fn all_checks_passed(&self) -> bool {
        self.provenance.self_checks.iter().all(|c| c.passed)
    }

    pub fn result(&self, kind: SamplerKind) -> Option<&SamplerResult> {
        self.results.iter().find(|r| r.kind == kind)
    }
}

fn schedule_checks(setup: &Setup) -> Vec<SelfCheck> {
    let s = &setup.schedule;
    let mut bad = Vec::new();
    for k in 0..s.period() {
        if let Err(e) = s.at(k).validate(s.topology_at(k), 1e-12) {
            bad.push(format!("entry {k}: {e}"));
        }
    }
    vec![
        SelfCheck::new(
            "mixing_matrices",
            bad.is_empty(),
            if bad.is_empty() { format!("{} entries valid", s.period()) } else { bad.join("; ") },
        ),
        SelfCheck::new("joint_spectral", setup.delta < 1.0, format!("delta = {} over window {}", setup.delta, s.window())),
    ]
}

/// Runs every configured sampler and assembles curves and provenance.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunArtifact, HarnessError> {
    cfg.validate()?;
    let setup = build_setup(cfg)?;
    execute_with_setup(cfg, &setup)
}

pub fn execute_with_setup(cfg: &ExperimentConfig, setup: &Setup) -> Result<RunArtifact, HarnessError> {
    let mut checks = schedule_checks(setup);
    let mut digests = BTreeMap::new();
    let mut raw_digests = BTreeMap::new();
    let mut results = Vec::new();
    for &kind in &cfg.samplers {
        let eta = cfg.eta[&kind];
        let started = std::time::Instant::now();
        let run = execute_sampler(cfg, setup, kind, eta, cfg.trials)?;
        log::info!("{}: {} trials x {} iterations in {:.2?}", kind.name(), cfg.trials, cfg.iterations, started.elapsed());
        if kind == SamplerKind::Diging {
            checks.push(SelfCheck::new(
                "tracking_identity",
                run.tracking_deviation <= TRACKING_TOL,
                format!("max relative deviation {:e}", run.tracking_deviation),
            ));
        }
        let curve = metric_curve(cfg, setup, &run)?;
        let finite = curve.per_agent.iter().flatten().all(|v| v.is_finite());
        checks.push(SelfCheck::new(
            &format!("finite_metrics_{}", kind.name()),
            finite,
            if finite { "all metric values finite".into() } else { "non-finite metric values (divergence)".into() },
        ));
        digests.insert(kind.name().to_string(), run.digest.hex());
        raw_digests.insert(kind, (run.digest.value(), run.digest.count()));
        results.push(SamplerResult { kind, eta, curve });
    }
    if let (Some(a), Some(b)) = (raw_digests.get(&SamplerKind::Diging), raw_digests.get(&SamplerKind::DeSgld)) {
        checks.push(SelfCheck::new(
            "paired_streams",
            a == b,
            format!("diging {:016x}/{} vs de_sgld {:016x}/{}", a.0, a.1, b.0, b.1),
        ));
    }
    let m = &setup.model;
    let eta_bar = lemma_bound_params(m.mu, m.lips, m.num_agents(), setup.schedule.window(), setup.delta)
        .ok()
        .map(|l| l.eta_bar);
    let beyond_eta_bar = match eta_bar {
        Some(bar) => cfg.samplers.iter().filter(|k| cfg.eta[k] > bar).map(|k| k.name().to_string()).collect(),
        None => Vec::new(),
    };
    let provenance = Provenance {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        schedule_hash: setup.schedule.content_hash(),
        period: setup.schedule.period(),
        window: setup.schedule.window(),
        delta: setup.delta,
        model: ModelSummary {
            dim: m.dim,
            agents: m.num_agents(),
            local_n: m.local_n(),
            mu: m.mu,
            lips: m.lips,
            sigma_sq: setup.sigma_sq,
            gradient_mode: setup.mode,
            data_seed: setup.data_seed,
        },
        digest_window: (1, cfg.iterations.saturating_sub(1)),
        stream_digests: digests,
        eta_bar,
        beyond_eta_bar,
        self_checks: checks,
    };
    Ok(RunArtifact { provenance, results, directory: None })
}

fn metric_label(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::LinregW2 => "w2",
        ExperimentKind::LogregAccuracy => "accuracy",
    }
}

/// Writes CSVs, provenance and optional plots under `dir`.
pub fn write_artifact(artifact: &mut RunArtifact, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let cfg = &artifact.provenance.config;
    for r in &artifact.results {
        r.curve.write_summary_csv(dir.join(format!("metrics_{}.csv", r.kind.name())), 1)?;
        r.curve.write_per_agent_csv(dir.join(format!("metrics_{}_agents.csv", r.kind.name())), 1)?;
    }
    let json = serde_json::to_string_pretty(&artifact.provenance).map_err(dsgld::Error::from)?;
    std::fs::write(dir.join("provenance.json"), json + "\n")?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    if cfg.plots {
        let label = metric_label(cfg.experiment);
        let series: Vec<plot::Series> = artifact
            .results
            .iter()
            .map(|r| plot::Series::from_curve(r.kind.name(), &r.curve, 1))
            .collect();
        std::fs::create_dir_all(dir.join("plots"))?;
        let svg = plot::line_chart(&format!("{label} by iteration"), "iteration", label, &series);
        std::fs::write(dir.join("plots").join(format!("{label}.svg")), svg)?;
    }
    artifact.directory = Some(dir.to_path_buf());
    Ok(())
}

/// [`execute`] followed by [`write_artifact`] into `root / output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<RunArtifact, HarnessError> {
    let mut artifact = execute(cfg)?;
    write_artifact(&mut artifact, &root.join(&cfg.output_dir))?;
    Ok(artifact)
}
