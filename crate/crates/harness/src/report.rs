//! Theory report for an experiment configuration.

use dsgld::samplers::SamplerKind;
use dsgld::theory::{estimate_init_stats, theory_report, ComplexityVariant, ProblemConstants, TheoryReport};

use crate::config::ExperimentConfig;
use crate::experiment::{build_setup, sampler_config, Setup};
use crate::HarnessError;

pub const DEFAULT_INIT_TRIALS: usize = 200;

#[derive(Clone, Debug)]
pub struct ReportOptions {
    pub epsilon: Option<f64>,
    pub variant: ComplexityVariant,
    pub init_trials: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { epsilon: None, variant: ComplexityVariant::default(), init_trials: DEFAULT_INIT_TRIALS }
    }
}

/// Problem constants (`μ`, `L`, `σ`, `δ`, `B`) of a configuration.
pub fn problem_constants(cfg: &ExperimentConfig) -> Result<ProblemConstants, HarnessError> {
    Ok(constants_of(&build_setup(cfg)?))
}

fn constants_of(setup: &Setup) -> ProblemConstants {
    ProblemConstants {
        mu: setup.model.mu,
        lips: setup.model.lips,
        num_agents: setup.model.num_agents(),
        dim: setup.model.dim,
        sigma: setup.sigma_sq.sqrt(),
        delta: setup.delta,
        window: setup.schedule.window(),
    }
}

/// Evaluates every bound at the tracking sampler's configured stepsize
/// (or the first configured stepsize when it is absent).
pub fn build_report(cfg: &ExperimentConfig, opts: &ReportOptions) -> Result<TheoryReport, HarnessError> {
    cfg.validate()?;
    let setup = build_setup(cfg)?;
    let eta = cfg
        .eta
        .get(&SamplerKind::Diging)
        .or_else(|| cfg.eta.values().next())
        .copied()
        .ok_or_else(|| HarnessError::Config("no stepsize configured".into()))?;
    let problem = constants_of(&setup);
    let init = estimate_init_stats(
        &setup.schedule,
        &setup.model,
        &sampler_config(cfg, &setup, eta),
        opts.init_trials,
        cfg.base_seed,
    )?;
    let k = cfg.iterations;
    let ks = [0, k / 4, k / 2, k];
    Ok(theory_report(&problem, &init, eta, &ks, opts.epsilon, opts.variant)?)
}
