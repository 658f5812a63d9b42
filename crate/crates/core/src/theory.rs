//! Numerical evaluation of the convergence constants, the explicit parameter
//! choice for the stepsize and `λ`, and the iteration-complexity schedule.
//!
//! Quantities close to one (`λ`, `λ^B`, `δ^{1/B}`) are carried through their
//! logarithms so that `1 − λ` keeps full relative precision even when
//! `ημ ≈ 1e-12`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::consensus_error;
use crate::models::ModelSpec;
use crate::network::GraphSchedule;
use crate::rng::TrialStreams;
use crate::samplers::{run_with_observer, SamplerConfig, SamplerKind};
use crate::{Error, Result};

const NEAR_SINGULAR: f64 = 1e8;

/// Problem-level constants shared by every stepsize.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub mu: f64,
    pub lips: f64,
    pub num_agents: usize,
    pub dim: usize,
    /// Gradient-noise bound `σ` (not squared).
    pub sigma: f64,
    pub delta: f64,
    pub window: usize,
}

impl ProblemConstants {
    pub fn kappa(&self) -> f64 {
        self.lips / self.mu
    }

    fn validate(&self) -> Result<()> {
        let positive = [self.mu, self.lips].iter().all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.num_agents == 0 || self.dim == 0 || self.window == 0 {
            return Err(Error::Domain("mu, L, N, d and B must be positive".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma must be finite and nonnegative, got {}", self.sigma)));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::Domain(format!("delta must lie in [0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    fn root_n(&self) -> f64 {
        (self.num_agents as f64).sqrt()
    }

    /// `ln δ`, `1 − δ^{1/B}` and `1 − δ^{2/B}`.
    fn delta_terms(&self) -> Result<(f64, f64, f64)> {
        if !(self.delta > 0.0) {
            return Err(Error::Domain("the error bounds need delta > 0".into()));
        }
        let ln_d = self.delta.ln();
        let b = self.window as f64;
        Ok((ln_d, -(ln_d / b).exp_m1(), -(2.0 * ln_d / b).exp_m1()))
    }
}

/// Moments of the first `B` iterates entering the constants.
///
/// All norms are `L₂` norms, `(E‖·‖²)^{1/2}`, of stacked vectors.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct InitStats {
    pub x0_norm: f64,
    pub x0_norm_se: f64,
    /// `‖x̄⁽⁰⁾ − x_*‖_{L₂}`.
    pub mean_gap: f64,
    pub mean_gap_se: f64,
    /// `‖x̃⁽ᵗ⁾‖_{L₂}` for `t = 0..B`.
    pub x_consensus: Vec<f64>,
    pub x_consensus_se: Vec<f64>,
    /// `‖ỹ⁽ᵗ⁾‖_{L₂}` for `t = 0..B`.
    pub y_consensus: Vec<f64>,
    pub y_consensus_se: Vec<f64>,
    pub trials: usize,
}

impl InitStats {
    /// Known (non-random) statistics, standard errors zero.
    pub fn exact(x0_norm: f64, mean_gap: f64, x_consensus: Vec<f64>, y_consensus: Vec<f64>) -> Self {
        let b = x_consensus.len();
        Self {
            x0_norm,
            mean_gap,
            x_consensus_se: vec![0.0; b],
            y_consensus_se: vec![0.0; y_consensus.len()],
            x_consensus,
            y_consensus,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub problem: ProblemConstants,
    pub eta: f64,
    /// `ln λ`; use [`TheoryInputs::lambda`] for `λ` itself.
    pub log_lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub init: InitStats,
}

impl TheoryInputs {
    pub fn new(problem: ProblemConstants, eta: f64, lambda: f64, alpha: f64, beta: f64, init: InitStats) -> Self {
        Self { problem, eta, log_lambda: lambda.ln(), alpha, beta, init }
    }

    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }
}

/// `(1 − λ^B)/(1 − λ)` from `ln λ`, with the `λ = 1` limit.
fn geometric_ratio(log_lambda: f64, b: f64) -> f64 {
    if log_lambda == 0.0 {
        b
    } else {
        (b * log_lambda).exp_m1() / log_lambda.exp_m1()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Omegas {
    pub tracker_start: f64,
    pub tracker_noise: f64,
    pub mean_start: f64,
    pub mean_noise: f64,
    pub iterate_start: f64,
    pub iterate_noise: f64,
}

impl Omegas {
    fn tracker(&self) -> f64 {
        self.tracker_start + self.tracker_noise
    }
    fn mean(&self) -> f64 {
        self.mean_start + self.mean_noise
    }
    fn iterate(&self) -> f64 {
        self.iterate_start + self.iterate_noise
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Feasibility {
    /// `√(1 − ημβ/(β+1)) ≤ λ < 1`.
    pub lambda_range: bool,
    /// `η ≤ 1/((1+α)L)`.
    pub stepsize: bool,
    /// `γ₁γ₂γ₃γ₄ ∈ (0, 1)`.
    pub contraction: bool,
}

impl Feasibility {
    pub fn all(&self) -> bool {
        self.lambda_range && self.stepsize && self.contraction
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Constants {
    pub lambda: f64,
    pub one_minus_lambda: f64,
    pub gammas: [f64; 4],
    pub contraction: f64,
    pub omegas: Omegas,
    /// `D`, evaluated literally; only meaningful when `feasibility.contraction`.
    pub d_const: f64,
    /// `λ^B / (λ^B − δ)`, the amplification of every `ω` term.
    pub window_condition: f64,
    pub feasibility: Feasibility,
    pub feasible: bool,
    pub warnings: Vec<String>,
}

/// `γ₁..γ₄`, the six `ω` terms, `D` and the three feasibility conditions.
pub fn evaluate_constants(inputs: &TheoryInputs) -> Result<Constants> {
    let p = &inputs.problem;
    p.validate()?;
    if !(inputs.eta > 0.0 && inputs.eta.is_finite()) {
        return Err(Error::Domain(format!("eta must be positive, got {}", inputs.eta)));
    }
    if !(inputs.alpha > 0.0 && inputs.beta > 0.0) {
        return Err(Error::Domain("alpha and beta must be positive".into()));
    }
    let b = p.window;
    let bf = b as f64;
    if inputs.init.x_consensus.len() != b || inputs.init.y_consensus.len() != b {
        return Err(Error::Config(format!("init stats must hold {b} consensus norms")));
    }
    let ll = inputs.log_lambda;
    let lam = ll.exp();
    let one_minus_lam_b = -(bf * ll).exp_m1();
    let gap = (1.0 - p.delta) - one_minus_lam_b;
    if !(gap > 0.0) {
        return Err(Error::Domain(format!(
            "lambda = {lam} does not exceed delta^(1/B) = {}",
            p.delta.powf(1.0 / bf)
        )));
    }
    let lam_b = 1.0 - one_minus_lam_b;
    let ratio = geometric_ratio(ll, bf);
    let (mu, l, eta) = (p.mu, p.lips, inputs.eta);
    let root_n = p.root_n();
    let coupling = (l * (1.0 + inputs.alpha) / (mu * inputs.alpha) + inputs.beta).sqrt();

    let g1 = lam * ratio / gap;
    let g2 = l * (1.0 + 1.0 / lam);
    let g3 = 1.0 + root_n / lam * coupling;
    let g4 = eta * ratio / gap;
    let contraction = g1 * g2 * g3 * g4;

    let pre = lam_b / gap;
    let weighted = |norms: &[f64]| -> f64 {
        norms.iter().enumerate().map(|(t, v)| (-(t as f64) * ll).exp() * v).sum::<f64>() * pre
    };
    let omegas = Omegas {
        tracker_start: weighted(&inputs.init.y_consensus),
        tracker_noise: pre * 2.0 * bf * p.sigma * root_n,
        mean_start: 2.0 * root_n * inputs.init.mean_gap,
        mean_noise: root_n / lam * coupling / mu * (p.sigma + (2.0 * p.dim as f64 / eta).sqrt()),
        iterate_start: weighted(&inputs.init.x_consensus),
        iterate_noise: pre * bf * (2.0 * eta * p.num_agents as f64 * p.dim as f64).sqrt(),
    };

    let mut warnings = Vec::new();
    let slack = 1.0 - contraction;
    let a = g1 * g2 * g3 * omegas.iterate() + g1 * g2 * omegas.mean() + omegas.tracker();
    let c = g3 * g4 * omegas.tracker() + g3 * omegas.iterate() + omegas.mean();
    let n = p.num_agents as f64;
    if !(slack > 0.0) {
        warnings.push(format!("contraction product {contraction} is not below one; D is outside its range"));
    } else if slack < 1.0 / NEAR_SINGULAR {
        warnings.push(format!("contraction product {contraction} is within {slack:e} of one"));
    }
    let d_const = (2.0 * (a / slack).powi(2) + 4.0 * l * l / n * (c / slack).powi(2) + 4.0 / n * p.sigma.powi(2)).sqrt();
    if pre > NEAR_SINGULAR {
        warnings.push(format!("lambda^B - delta = {gap:e} is nearly singular"));
    }
    for (name, v) in [("gamma_1", g1), ("gamma_4", g4), ("D", d_const)] {
        if !v.is_finite() {
            warnings.push(format!("{name} is not finite"));
        }
    }

    // Compared through logarithms; the lemma's choice meets the bound with
    // equality when B = 1 and κ = 1.
    let floor = 0.5 * (-eta * mu * inputs.beta / (inputs.beta + 1.0)).ln_1p();
    let feasibility = Feasibility {
        lambda_range: floor <= ll + 1e-12 * ll.abs() && ll < 0.0,
        stepsize: eta <= 1.0 / ((1.0 + inputs.alpha) * l),
        contraction: contraction > 0.0 && contraction < 1.0,
    };
    Ok(Constants {
        lambda: lam,
        one_minus_lambda: -ll.exp_m1(),
        gammas: [g1, g2, g3, g4],
        contraction,
        omegas,
        d_const,
        window_condition: pre,
        feasible: feasibility.all(),
        feasibility,
        warnings,
    })
}

/// Bound on the averaged-iterate distance to the centralized Langevin chain.
pub fn e1(problem: &ProblemConstants, init: &InitStats, eta: f64, k: usize) -> f64 {
    let (mu, l) = (problem.mu, problem.lips);
    let (n, d) = (problem.num_agents as f64, problem.dim as f64);
    let decay = (k as f64 * (-mu * eta).ln_1p()).exp();
    decay * (init.mean_gap + (2.0 * d / (mu * n)).sqrt()) + 1.65 * l / mu * (eta * d / n).sqrt()
}

/// `(aᵏ − bᵏ)/(a − b)` from logarithms, with the `a = b` limit `k·b^{k−1}`.
fn power_difference_quotient(ln_a: f64, ln_b: f64, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let kf = k as f64;
    let diff = ln_a - ln_b;
    let base = ((kf - 1.0) * ln_b).exp();
    if diff.abs() < 1e-300 {
        return kf * base;
    }
    base * (kf * diff).exp_m1() / diff.exp_m1()
}

/// Bound on the distance between the network average and the centralized chain.
pub fn e2(problem: &ProblemConstants, init: &InitStats, eta: f64, d_const: f64, k: usize) -> Result<f64> {
    let (ln_d, one_minus_d1, one_minus_d2) = problem.delta_terms()?;
    let (mu, l, sigma) = (problem.mu, problem.lips, problem.sigma);
    let (n, d) = (problem.num_agents as f64, problem.dim as f64);
    let bf = problem.window as f64;
    let damp = 1.0 - eta * l / 2.0;
    if !(damp > 0.0) {
        return Err(Error::Domain(format!("eta L / 2 = {} must stay below one", eta * l / 2.0)));
    }
    let inv_d2 = 1.0 / (problem.delta * problem.delta);
    let lead = (eta / (mu * damp) + (1.0 + eta * l).powi(2) / (mu * damp).powi(2)).sqrt();
    let network = (3.0 * l * l * d_const * d_const * eta * inv_d2 / (n * one_minus_d1.powi(2))
        + 6.0 * d * l * l * inv_d2 / one_minus_d2)
        .sqrt();
    let noise = eta.sqrt() * sigma / (mu * damp * n).sqrt();
    let ln_rho = (-eta * mu * damp).ln_1p();
    let transient = power_difference_quotient(2.0 * ln_d / bf, ln_rho, k).sqrt()
        * 3f64.sqrt()
        * l
        / problem.delta
        * (ln_d / bf).exp()
        * init.x0_norm
        / n.sqrt();
    Ok(eta.sqrt() * lead * network + noise + transient)
}

fn e3_parts(problem: &ProblemConstants, init: &InitStats, eta: f64, d_const: f64, k: usize) -> Result<(f64, f64)> {
    let (ln_d, one_minus_d1, one_minus_d2) = problem.delta_terms()?;
    let (n, d) = (problem.num_agents as f64, problem.dim as f64);
    let root3 = 3f64.sqrt();
    let inv_delta = 1.0 / problem.delta;
    let transient = root3 * inv_delta * (k as f64 * ln_d / problem.window as f64).exp() * init.x0_norm / n.sqrt();
    let steady = root3 * d_const * eta * inv_delta / (n.sqrt() * one_minus_d1)
        + (6.0 * d * eta).sqrt() * inv_delta / one_minus_d2.sqrt();
    Ok((transient, steady))
}

/// Bound on the averaged per-agent distance to the network average.
pub fn e3(problem: &ProblemConstants, init: &InitStats, eta: f64, d_const: f64, k: usize) -> Result<f64> {
    let (t, s) = e3_parts(problem, init, eta, d_const, k)?;
    Ok(t + s)
}

/// The `k`-independent part of [`e3`].
pub fn e3_steady(problem: &ProblemConstants, eta: f64, d_const: f64) -> Result<f64> {
    Ok(e3_parts(problem, &InitStats::default(), eta, d_const, 0)?.1)
}

/// Explicit stepsize range and `λ(η)` that satisfy the feasibility conditions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LemmaParams {
    pub j1: f64,
    pub eta_bar: f64,
    pub check_eta: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `λ̲ = inf λ(η)`.
    pub lambda_low: f64,
    pub log_lambda_low: f64,
    /// The three closed forms of `λ̲`, evaluated literally.
    pub lambda_low_forms: [f64; 3],
    mu: f64,
    delta: f64,
    window: usize,
}

impl LemmaParams {
    /// `ln λ(η)`.
    pub fn log_lambda_of(&self, eta: f64) -> f64 {
        let bf = self.window as f64;
        if eta <= self.check_eta {
            (-eta * self.mu / 1.5).ln_1p() / (2.0 * bf)
        } else {
            let shift = (eta * self.mu * self.j1 / 1.5).sqrt();
            (shift - (1.0 - self.delta)).ln_1p() / bf
        }
    }

    pub fn lambda_of(&self, eta: f64) -> f64 {
        self.log_lambda_of(eta).exp()
    }

    /// Deviation between the three closed forms of `λ̲`.
    pub fn lambda_low_spread(&self) -> f64 {
        let [a, b, c] = self.lambda_low_forms;
        (a - b).abs().max((a - c).abs()).max((b - c).abs())
    }

    pub fn inputs_at(&self, problem: &ProblemConstants, eta: f64, init: &InitStats) -> TheoryInputs {
        TheoryInputs {
            problem: problem.clone(),
            eta,
            log_lambda: self.log_lambda_of(eta),
            alpha: self.alpha,
            beta: self.beta,
            init: init.clone(),
        }
    }
}

pub fn lemma_bound_params(mu: f64, lips: f64, num_agents: usize, window: usize, delta: f64) -> Result<LemmaParams> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Domain(format!("delta must lie in [0, 1), got {delta}")));
    }
    if !(mu > 0.0 && lips > 0.0) || num_agents == 0 || window == 0 {
        return Err(Error::Domain("mu, L, N and B must be positive".into()));
    }
    let kappa = lips / mu;
    let bf = window as f64;
    let j1 = 3.0 * kappa * bf * bf * (1.0 + 4.0 * (num_agents as f64).sqrt() * kappa.sqrt());
    let contraction_room = 1.0 - delta * delta;
    let eta_bar = 3.0 * contraction_room / (mu * j1);
    let s = (j1 * j1 + contraction_room * j1).sqrt();
    // (s − δJ₁)² / (J₁(J₁+1)²), rewritten without cancellation.
    let q = contraction_room.powi(2) * j1 / (s + delta * j1).powi(2);
    let check_eta = 1.5 * q / mu;
    let log_lambda_low = (-q).ln_1p() / (2.0 * bf);
    let forms = [
        (1.0 - (s - delta * j1).powi(2) / (j1 * (j1 + 1.0).powi(2))).powf(1.0 / (2.0 * bf)),
        ((check_eta * mu * j1 / 1.5).sqrt() + delta).powf(1.0 / bf),
        ((s + delta) / (j1 + 1.0)).powf(1.0 / bf),
    ];
    Ok(LemmaParams {
        j1,
        eta_bar,
        check_eta,
        alpha: 1.0,
        beta: 2.0 * kappa,
        lambda_low: log_lambda_low.exp(),
        log_lambda_low,
        lambda_low_forms: forms,
        mu,
        delta,
        window,
    })
}

/// `D̄` together with the contraction product it was evaluated at.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BarredBound {
    pub value: f64,
    pub contraction: f64,
    /// The barred contraction product lies in `(0, 1)`.
    pub valid: bool,
}

/// `D̄`: `D` evaluated at `(λ̲, η̄)` and scaled by `√η̄`; bounds `D√η` on `(0, η̄]`.
pub fn d_bar(problem: &ProblemConstants, lemma: &LemmaParams, init: &InitStats) -> Result<BarredBound> {
    let inputs = TheoryInputs {
        problem: problem.clone(),
        eta: lemma.eta_bar,
        log_lambda: lemma.log_lambda_low,
        alpha: lemma.alpha,
        beta: lemma.beta,
        init: init.clone(),
    };
    let c = evaluate_constants(&inputs)?;
    Ok(BarredBound {
        value: c.d_const * lemma.eta_bar.sqrt(),
        contraction: c.contraction,
        valid: c.feasibility.contraction,
    })
}

/// Which constant multiplies `C̄₁ + C̄₂` inside the logarithm of `k*`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityVariant {
    /// Factor 3.
    #[default]
    Proof,
    /// Factor 4.
    Statement,
}

impl ComplexityVariant {
    fn factor(self) -> f64 {
        match self {
            ComplexityVariant::Proof => 3.0,
            ComplexityVariant::Statement => 4.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorollarySchedule {
    pub epsilon: f64,
    pub c_bars: [f64; 4],
    pub eta_noise: f64,
    pub eta_star: f64,
    /// `η*` was clamped to `η̄`.
    pub clamped: bool,
    pub k_star: u64,
    pub variant: ComplexityVariant,
}

pub fn corollary_schedule(
    problem: &ProblemConstants,
    lemma: &LemmaParams,
    init: &InitStats,
    d_bar: f64,
    epsilon: f64,
    variant: ComplexityVariant,
) -> Result<CorollarySchedule> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let (ln_d, one_minus_d1, one_minus_d2) = problem.delta_terms()?;
    let (mu, l, sigma) = (problem.mu, problem.lips, problem.sigma);
    let (n, d) = (problem.num_agents as f64, problem.dim as f64);
    let bf = problem.window as f64;
    let root3 = 3f64.sqrt();
    let inv_delta = 1.0 / problem.delta;
    let inv_d2 = inv_delta * inv_delta;

    let c1 = init.mean_gap + (2.0 * d / (mu * n)).sqrt();
    let room = one_minus_d2 - lemma.eta_bar * mu / 1.5;
    if !(room > 0.0) {
        return Err(Error::Domain(format!("1 - eta_bar mu / 1.5 - delta^(2/B) = {room:e} is not positive")));
    }
    let c2 = root3 * l * inv_delta * (ln_d / bf).exp() * init.x0_norm / (room.sqrt() * n.sqrt())
        + root3 * inv_delta * init.x0_norm / n.sqrt();
    let noise_term = (6.0 * d * l * l * inv_d2 / one_minus_d2).sqrt();
    let network_term = (3.0 * l * l * inv_d2 / (n * one_minus_d1.powi(2))).sqrt();
    let c3 = 1.65 * l / mu * (d / n).sqrt()
        + (6.0 * d).sqrt() * inv_delta / one_minus_d2.sqrt()
        + 2.0 * sigma / (3.0 * mu * n).sqrt()
        + 2.0 / mu * noise_term
        + root3 * inv_delta * d_bar / (n.sqrt() * one_minus_d1)
        + 2.0 * d_bar / mu * network_term;
    let scale = 2.0 / (3.0 * mu).sqrt();
    let c4 = scale * noise_term + scale * network_term * d_bar;

    let eta_noise = (epsilon * epsilon / (9.0 * c3 * c3)).min(epsilon / (3.0 * c4));
    let clamped = lemma.eta_bar <= eta_noise;
    let eta_star = lemma.eta_bar.min(eta_noise);
    let horizon = 3.0 / (mu * eta_star) * (variant.factor() * (c1 + c2) / epsilon).ln();
    if !horizon.is_finite() {
        return Err(Error::Domain("iteration complexity is not finite".into()));
    }
    Ok(CorollarySchedule {
        epsilon,
        c_bars: [c1, c2, c3, c4],
        eta_noise,
        eta_star,
        clamped,
        k_star: horizon.max(0.0).ceil() as u64,
        variant,
    })
}

/// `E‖X − x_*‖² ≤ 2d/(Nμ)` under the target.
pub fn gibbs_second_moment_bound(mu: f64, dim: usize, num_agents: usize) -> f64 {
    2.0 * dim as f64 / (num_agents as f64 * mu)
}

fn mean_and_sqrt_se(values: &[f64]) -> (f64, f64) {
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
    let root = mean.sqrt();
    // delta method for the square root of a sample mean
    let se = if root > 0.0 { (var / t).sqrt() / (2.0 * root) } else { 0.0 };
    (root, se)
}

/// Monte-Carlo `L₂` norms of the first `B` tracking-sampler iterates over
/// `trials` fresh trials.
pub fn estimate_init_stats(
    schedule: &GraphSchedule,
    model: &ModelSpec,
    config: &SamplerConfig,
    trials: usize,
    seed: u64,
) -> Result<InitStats> {
    if trials < 30 {
        return Err(Error::Config(format!("init-stat estimation needs at least 30 trials, got {trials}")));
    }
    let b = schedule.window();
    let mut cfg = config.clone();
    cfg.iterations = b.saturating_sub(1);
    let per_trial: Vec<Result<WarmupTrial>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let streams = TrialStreams::new(seed, t as u64);
            let mut start = (0.0, 0.0);
            let mut xs = Vec::with_capacity(b);
            let mut ys = Vec::with_capacity(b);
            run_with_observer(SamplerKind::Diging, schedule, model, &cfg, &streams, |s| {
                if s.iteration == 0 {
                    start = (s.x.norm_squared(), (s.mean_x() - &model.minimizer).norm_squared());
                }
                xs.push(consensus_error(&s.x).powi(2));
                ys.push(consensus_error(&s.y).powi(2));
            })?;
            Ok(WarmupTrial { x0_sq: start.0, gap_sq: start.1, x_consensus: xs, y_consensus: ys })
        })
        .collect();
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    let column = |f: &dyn Fn(&WarmupTrial) -> f64| -> (f64, f64) {
        mean_and_sqrt_se(&per_trial.iter().map(f).collect::<Vec<_>>())
    };
    let (x0_norm, x0_norm_se) = column(&|r| r.x0_sq);
    let (mean_gap, mean_gap_se) = column(&|r| r.gap_sq);
    let (x_consensus, x_consensus_se): (Vec<f64>, Vec<f64>) = (0..b).map(|t| column(&|r| r.x_consensus[t])).unzip();
    let (y_consensus, y_consensus_se): (Vec<f64>, Vec<f64>) = (0..b).map(|t| column(&|r| r.y_consensus[t])).unzip();
    Ok(InitStats {
        x0_norm,
        x0_norm_se,
        mean_gap,
        mean_gap_se,
        x_consensus,
        x_consensus_se,
        y_consensus,
        y_consensus_se,
        trials,
    })
}

struct WarmupTrial {
    x0_sq: f64,
    gap_sq: f64,
    x_consensus: Vec<f64>,
    y_consensus: Vec<f64>,
}

/// One row of the evaluated bound curves.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundPoint {
    pub k: usize,
    pub e1: f64,
    pub e2: Option<f64>,
    pub e3: Option<f64>,
}

/// Everything the `theory-report` command emits.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TheoryReport {
    pub problem: ProblemConstants,
    pub init: InitStats,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lemma: LemmaParams,
    pub lambda_of_eta: f64,
    pub constants: Constants,
    /// `D√η`.
    pub d_scaled: f64,
    pub d_bar: BarredBound,
    pub bounds: Vec<BoundPoint>,
    pub schedule: Option<CorollarySchedule>,
    pub gibbs_second_moment_bound: f64,
    pub feasible: bool,
    pub warnings: Vec<String>,
}

/// Full report at stepsize `eta` with the lemma's `(α, β, λ(η))`.
pub fn theory_report(
    problem: &ProblemConstants,
    init: &InitStats,
    eta: f64,
    ks: &[usize],
    epsilon: Option<f64>,
    variant: ComplexityVariant,
) -> Result<TheoryReport> {
    problem.validate()?;
    let lemma = lemma_bound_params(problem.mu, problem.lips, problem.num_agents, problem.window, problem.delta)?;
    let inputs = lemma.inputs_at(problem, eta, init);
    let constants = evaluate_constants(&inputs)?;
    let mut warnings = constants.warnings.clone();
    if eta > lemma.eta_bar {
        warnings.push(format!("eta = {eta:e} exceeds eta_bar = {:e}", lemma.eta_bar));
    }
    let barred = d_bar(problem, &lemma, init)?;
    if !barred.valid {
        warnings.push(format!(
            "barred contraction product {} is not below one; D_bar does not bound D sqrt(eta)",
            barred.contraction
        ));
    }
    let d = constants.d_const;
    let bounds = ks
        .iter()
        .map(|&k| BoundPoint {
            k,
            e1: e1(problem, init, eta, k),
            e2: e2(problem, init, eta, d, k).ok(),
            e3: e3(problem, init, eta, d, k).ok(),
        })
        .collect();
    let schedule = match epsilon {
        Some(eps) => Some(corollary_schedule(problem, &lemma, init, barred.value, eps, variant)?),
        None => None,
    };
    Ok(TheoryReport {
        problem: problem.clone(),
        init: init.clone(),
        eta,
        alpha: lemma.alpha,
        beta: lemma.beta,
        lambda_of_eta: lemma.lambda_of(eta),
        d_scaled: d * eta.sqrt(),
        d_bar: barred,
        bounds,
        schedule,
        gibbs_second_moment_bound: gibbs_second_moment_bound(problem.mu, problem.dim, problem.num_agents),
        feasible: constants.feasible,
        constants,
        lemma,
        warnings,
    })
}
