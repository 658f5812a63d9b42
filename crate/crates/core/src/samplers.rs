//! Decentralized Langevin samplers.
//!
//! All three samplers read their randomness from [`TrialStreams`]:
//! Langevin noise for the step `k → k+1` is keyed `(agent, k+1)` and the
//! minibatch for a gradient evaluated at `x^{(k)}` is keyed `(agent, k)`.
//! The tracking sampler and the plain decentralized baseline therefore see the
//! same noise whenever they evaluate the same quantity.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::models::{GradientMode, ModelSpec};
use crate::network::{GraphSchedule, MixingMatrix};
use crate::rng::TrialStreams;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Gradient-tracking SGLD.
    Diging,
    /// Decentralized SGLD without tracking.
    DeSgld,
    /// Centralized Langevin chain on `f / N` driven by the averaged noise.
    UlaReference,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Diging => "diging",
            SamplerKind::DeSgld => "de_sgld",
            SamplerKind::UlaReference => "ula_reference",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "diging" => Some(SamplerKind::Diging),
            "de_sgld" => Some(SamplerKind::DeSgld),
            "ula_reference" | "ula" => Some(SamplerKind::UlaReference),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    LangevinOn,
    /// Optimization mode: no injected Gaussian noise.
    LangevinOff,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitLaw {
    /// `x_i^{(0)} ~ N(0, I)` i.i.d. per agent and trial.
    StandardNormal,
    Zero,
    /// Explicit `N × dim` starting point, shared by every trial.
    Fixed(DMatrix<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerInit {
    /// `y_i^{(0)} = ∇f_i(x_i^{(0)})`.
    Exact,
    /// `y_i^{(0)}` uses the run's gradient mode.
    Stochastic,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub eta: f64,
    pub iterations: usize,
    pub noise: NoiseMode,
    pub gradient_mode: GradientMode,
    pub init: InitLaw,
    pub tracker_init: TrackerInit,
    /// Snapshot every `stride` iterations; the final iterate is always kept.
    pub stride: usize,
    pub record_trackers: bool,
}

impl SamplerConfig {
    pub fn new(eta: f64, iterations: usize) -> Self {
        Self {
            eta,
            iterations,
            noise: NoiseMode::LangevinOn,
            gradient_mode: GradientMode::Exact,
            init: InitLaw::StandardNormal,
            tracker_init: TrackerInit::Exact,
            stride: 1,
            record_trackers: false,
        }
    }

    pub fn with_noise(mut self, noise: NoiseMode) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_gradient_mode(mut self, mode: GradientMode) -> Self {
        self.gradient_mode = mode;
        self
    }

    pub fn with_init(mut self, init: InitLaw) -> Self {
        self.init = init;
        self
    }

    pub fn with_tracker_init(mut self, t: TrackerInit) -> Self {
        self.tracker_init = t;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn recording_trackers(mut self) -> Self {
        self.record_trackers = true;
        self
    }

    /// `η = 0` is allowed and gives pure consensus steps.
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("stepsize must be finite and nonnegative, got {}", self.eta)));
        }
        if self.stride == 0 {
            return Err(Error::Config("snapshot stride must be positive".into()));
        }
        if let GradientMode::Minibatch(b) = self.gradient_mode {
            if b == 0 || b > model.local_n() {
                return Err(Error::Model(format!(
                    "batch size {b} outside [1, {}]",
                    model.local_n()
                )));
            }
        }
        if let InitLaw::Fixed(x0) = &self.init {
            if x0.ncols() != model.dim {
                return Err(Error::State(format!("initial point has {} columns, model dim is {}", x0.ncols(), model.dim)));
            }
        }
        Ok(())
    }
}

/// Stacked per-agent iterates (rows are agents).
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Gradient estimate last evaluated at each row of `x`.
    pub prev_grad: DMatrix<f64>,
    pub iteration: usize,
}

fn local_estimate(
    model: &ModelSpec,
    agent: usize,
    mode: GradientMode,
    x: &DVector<f64>,
    streams: &TrialStreams,
    point: usize,
) -> DVector<f64> {
    let oracle = model.oracle(agent, mode);
    match mode {
        GradientMode::Minibatch(b) if b < oracle.potential.local_n() => {
            let idx = streams.minibatch(agent, point, b, oracle.potential.local_n());
            oracle.gradient_from_indices(x, &idx)
        }
        _ => oracle.exact_gradient(x),
    }
}

fn gradients_at(model: &ModelSpec, mode: GradientMode, x: &DMatrix<f64>, streams: &TrialStreams, point: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        let xi = x.row(i).transpose();
        g.set_row(i, &local_estimate(model, i, mode, &xi, streams, point).transpose());
    }
    g
}

fn add_langevin(x: &mut DMatrix<f64>, eta: f64, noise: NoiseMode, streams: &TrialStreams, iteration: usize) {
    if noise == NoiseMode::LangevinOff {
        return;
    }
    let scale = (2.0 * eta).sqrt();
    for i in 0..x.nrows() {
        let w = streams.langevin(i, iteration, x.ncols());
        let mut row = x.row_mut(i);
        for (v, wv) in row.iter_mut().zip(w.iter()) {
            *v += scale * wv;
        }
    }
}

impl NetworkState {
    /// `x^{(0)}` from the init law; `y^{(0)}` and the gradient cache from the
    /// tracker-init rule.
    pub fn initial(model: &ModelSpec, config: &SamplerConfig, streams: &TrialStreams) -> Result<Self> {
        let n = model.num_agents();
        let dim = model.dim;
        let x = match &config.init {
            InitLaw::StandardNormal => {
                let mut x = DMatrix::zeros(n, dim);
                for i in 0..n {
                    x.set_row(i, &streams.init(i, dim).transpose());
                }
                x
            }
            InitLaw::Zero => DMatrix::zeros(n, dim),
            InitLaw::Fixed(x0) => {
                if x0.shape() != (n, dim) {
                    return Err(Error::State(format!("initial point is {:?}, expected ({n}, {dim})", x0.shape())));
                }
                x0.clone()
            }
        };
        let mode = match config.tracker_init {
            TrackerInit::Exact => GradientMode::Exact,
            TrackerInit::Stochastic => config.gradient_mode,
        };
        let y = gradients_at(model, mode, &x, streams, 0);
        Ok(Self { prev_grad: y.clone(), x, y, iteration: 0 })
    }

    pub fn num_agents(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Network average `x̄`.
    pub fn mean_x(&self) -> DVector<f64> {
        self.x.row_mean().transpose()
    }

    pub fn mean_y(&self) -> DVector<f64> {
        self.y.row_mean().transpose()
    }

    fn check(&self, w: &MixingMatrix, model: &ModelSpec) -> Result<()> {
        let n = self.num_agents();
        if w.num_agents() != n || model.num_agents() != n || self.dim() != model.dim {
            return Err(Error::State(format!(
                "state is {n}x{}, mixing matrix has {} agents, model has {} agents of dim {}",
                self.dim(),
                w.num_agents(),
                model.num_agents(),
                model.dim
            )));
        }
        if self.y.shape() != self.x.shape() || self.prev_grad.shape() != self.x.shape() {
            return Err(Error::State("tracker or cache shape differs from iterates".into()));
        }
        Ok(())
    }
}

/// One gradient-tracking step:
///
/// ```text
/// x_i ← Σ_j W_ij x_j − η y_i + √(2η) w_i
/// y_i ← Σ_j W_ij y_j + g̃_i(x_i^new) − g̃_i(x_i^old)
/// ```
///
/// `g̃_i(x_i^old)` is the cached estimate from the previous step, not a redraw.
pub fn diging_sgld_step(
    state: &NetworkState,
    w: &MixingMatrix,
    model: &ModelSpec,
    config: &SamplerConfig,
    streams: &TrialStreams,
) -> Result<NetworkState> {
    state.check(w, model)?;
    let k = state.iteration;
    let mut x = w.entries() * &state.x - &state.y * config.eta;
    add_langevin(&mut x, config.eta, config.noise, streams, k + 1);
    let g = gradients_at(model, config.gradient_mode, &x, streams, k + 1);
    let y = w.entries() * &state.y + &g - &state.prev_grad;
    Ok(NetworkState { x, y, prev_grad: g, iteration: k + 1 })
}

/// One decentralized SGLD step: `x_i ← Σ_j W_ij x_j − η g̃_i(x_i) + √(2η) w_i`.
pub fn de_sgld_step(
    state: &NetworkState,
    w: &MixingMatrix,
    model: &ModelSpec,
    config: &SamplerConfig,
    streams: &TrialStreams,
) -> Result<NetworkState> {
    state.check(w, model)?;
    let k = state.iteration;
    let g = gradients_at(model, config.gradient_mode, &state.x, streams, k);
    let mut x = w.entries() * &state.x - &g * config.eta;
    add_langevin(&mut x, config.eta, config.noise, streams, k + 1);
    Ok(NetworkState { x, y: g.clone(), prev_grad: g, iteration: k + 1 })
}

/// Centralized chain `x ← x − (η/N) ∇f(x) + √(2η) w̄` with `w̄` the average of
/// the agents' Langevin draws for the same iteration. Gradients follow `mode`,
/// so `Exact` is the unadjusted Langevin algorithm.
pub fn ula_reference_step(
    x: &DVector<f64>,
    model: &ModelSpec,
    eta: f64,
    noise: NoiseMode,
    mode: GradientMode,
    streams: &TrialStreams,
    iteration: usize,
) -> DVector<f64> {
    let n = model.num_agents();
    let mut grad = DVector::zeros(x.len());
    for i in 0..n {
        grad += local_estimate(model, i, mode, x, streams, iteration);
    }
    let mut next = x - grad * (eta / n as f64);
    if noise == NoiseMode::LangevinOn {
        let mut wbar = DVector::zeros(x.len());
        for i in 0..n {
            wbar += streams.langevin(i, iteration + 1, x.len());
        }
        next += wbar * ((2.0 * eta).sqrt() / n as f64);
    }
    next
}

/// Largest stepsize accepted by the reference chain, `2N / (μ + L)`.
pub fn ula_max_stepsize(model: &ModelSpec) -> f64 {
    2.0 * model.num_agents() as f64 / (model.mu + model.lips)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub x: DMatrix<f64>,
    pub y: Option<DMatrix<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub kind: SamplerKind,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn iterations(&self) -> Vec<usize> {
        self.snapshots.iter().map(|s| s.iteration).collect()
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory always holds x^(0)")
    }

    pub fn num_agents(&self) -> usize {
        self.snapshots[0].x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.snapshots[0].x.ncols()
    }
}

/// Runs `config.iterations` steps, calling `observe` on every state including
/// `x^{(0)}`. The reference chain is reported as a one-row state.
pub fn run_with_observer<F>(
    kind: SamplerKind,
    schedule: &GraphSchedule,
    model: &ModelSpec,
    config: &SamplerConfig,
    streams: &TrialStreams,
    mut observe: F,
) -> Result<Trajectory>
where
    F: FnMut(&NetworkState),
{
    config.validate(model)?;
    if kind != SamplerKind::UlaReference && schedule.num_agents() != model.num_agents() {
        return Err(Error::State(format!(
            "schedule has {} agents, model has {}",
            schedule.num_agents(),
            model.num_agents()
        )));
    }
    let mut state = NetworkState::initial(model, config, streams)?;
    if kind == SamplerKind::UlaReference {
        let limit = ula_max_stepsize(model);
        if config.eta > limit {
            log::warn!("reference chain stepsize {} exceeds 2N/(mu+L) = {limit}", config.eta);
            return Err(Error::Config(format!("reference stepsize {} exceeds 2N/(mu+L) = {limit}", config.eta)));
        }
        let xbar = DMatrix::from_row_slice(1, model.dim, state.mean_x().as_slice());
        state = NetworkState { x: xbar.clone(), y: xbar.clone(), prev_grad: xbar, iteration: 0 };
    }
    let keep = |k: usize| k.is_multiple_of(config.stride) || k == config.iterations;
    let snap = |s: &NetworkState| Snapshot {
        iteration: s.iteration,
        x: s.x.clone(),
        y: config.record_trackers.then(|| s.y.clone()),
    };
    let mut snapshots = vec![snap(&state)];
    observe(&state);
    for k in 0..config.iterations {
        state = match kind {
            SamplerKind::Diging => diging_sgld_step(&state, schedule.at(k), model, config, streams)?,
            SamplerKind::DeSgld => de_sgld_step(&state, schedule.at(k), model, config, streams)?,
            SamplerKind::UlaReference => {
                let x = state.x.row(0).transpose();
                let next = ula_reference_step(&x, model, config.eta, config.noise, config.gradient_mode, streams, k);
                let next = DMatrix::from_row_slice(1, model.dim, next.as_slice());
                NetworkState { x: next.clone(), y: next.clone(), prev_grad: next, iteration: k + 1 }
            }
        };
        observe(&state);
        if keep(state.iteration) {
            snapshots.push(snap(&state));
        }
    }
    Ok(Trajectory { kind, snapshots })
}

/// Deterministic given `(streams, config, schedule)`.
pub fn run(
    kind: SamplerKind,
    schedule: &GraphSchedule,
    model: &ModelSpec,
    config: &SamplerConfig,
    streams: &TrialStreams,
) -> Result<Trajectory> {
    run_with_observer(kind, schedule, model, config, streams, |_| {})
}

/// Long-format export: `trial,iteration,agent,coordinate,value`.
pub fn write_trajectories_csv(path: impl AsRef<Path>, trajectories: &[Trajectory]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "trial,iteration,agent,coordinate,value")?;
    for (t, traj) in trajectories.iter().enumerate() {
        for s in &traj.snapshots {
            for i in 0..s.x.nrows() {
                for c in 0..s.x.ncols() {
                    writeln!(out, "{t},{},{i},{c},{:e}", s.iteration, s.x[(i, c)])?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}
