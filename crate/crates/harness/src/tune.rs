//! Grid search of the per-sampler stepsize on the final-iteration metric.

use std::collections::BTreeMap;

use dsgld::samplers::SamplerKind;
use dsgld::theory::lemma_bound_params;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::experiment::{build_setup, execute_sampler, metric_curve, Setup};
use crate::HarnessError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridPoint {
    pub eta: f64,
    /// Final-iteration cross-agent mean, `None` when the run failed or diverged.
    pub metric: Option<f64>,
    pub error: Option<String>,
    pub beyond_eta_bar: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplerTuning {
    pub best_eta: f64,
    pub best_metric: f64,
    pub points: Vec<GridPoint>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub trials: usize,
    pub eta_bar: Option<f64>,
    pub samplers: BTreeMap<SamplerKind, SamplerTuning>,
}

impl TuneOutcome {
    pub fn best(&self) -> BTreeMap<SamplerKind, f64> {
        self.samplers.iter().map(|(k, t)| (*k, t.best_eta)).collect()
    }
}

fn better(kind: ExperimentKind, candidate: f64, incumbent: f64) -> bool {
    match kind {
        ExperimentKind::LinregW2 => candidate < incumbent,
        ExperimentKind::LogregAccuracy => candidate > incumbent,
    }
}

fn evaluate(cfg: &ExperimentConfig, setup: &Setup, kind: SamplerKind, eta: f64, trials: usize) -> Result<f64, HarnessError> {
    let run = execute_sampler(cfg, setup, kind, eta, trials)?;
    Ok(metric_curve(cfg, setup, &run)?.final_mean())
}

/// Evaluates every grid stepsize for every configured sampler.
///
/// Points that error or end non-finite are recorded and skipped. Stepsizes
/// above the explicit bound `η̄` are still evaluated but flagged.
pub fn tune_stepsize(cfg: &ExperimentConfig, grid: &[f64], trials: Option<usize>) -> Result<TuneOutcome, HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::Config("empty stepsize grid".into()));
    }
    if let Some(bad) = grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(HarnessError::Config(format!("grid stepsizes must be positive, got {bad}")));
    }
    cfg.validate()?;
    let setup = build_setup(cfg)?;
    let trials = trials.unwrap_or(cfg.trials);
    let m = &setup.model;
    let eta_bar = lemma_bound_params(m.mu, m.lips, m.num_agents(), setup.schedule.window(), setup.delta)
        .ok()
        .map(|l| l.eta_bar);
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let mut samplers = BTreeMap::new();
    for &kind in &cfg.samplers {
        let mut points = Vec::with_capacity(sorted.len());
        let mut best: Option<(f64, f64)> = None;
        for &eta in &sorted {
            let beyond_eta_bar = eta_bar.is_some_and(|bar| eta > bar);
            let (metric, error) = match evaluate(cfg, &setup, kind, eta, trials) {
                Ok(v) if v.is_finite() => (Some(v), None),
                Ok(v) => (None, Some(format!("non-finite final metric {v}"))),
                Err(e) => (None, Some(e.to_string())),
            };
            log::info!("tune {} eta={eta:e}: {:?}", kind.name(), metric);
            if let Some(v) = metric {
                // ascending grid: strict improvement keeps ties at the smaller stepsize
                if best.is_none_or(|(_, b)| better(cfg.experiment, v, b)) {
                    best = Some((eta, v));
                }
            }
            points.push(GridPoint { eta, metric, error, beyond_eta_bar });
        }
        let (best_eta, best_metric) = best.ok_or_else(|| HarnessError::AllGridPointsFailed(kind.name().into()))?;
        samplers.insert(kind, SamplerTuning { best_eta, best_metric, points });
    }
    Ok(TuneOutcome { trials, eta_bar, samplers })
}
