//! Decomposed potentials `f(x) = Σ_i f_i(x)` with per-agent gradient oracles.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::eigen_range;
use crate::rng::{keyed_rng, Purpose};
use crate::{Error, Result};

/// Data term of one agent's potential. The ridge part lives in [`LocalPotential`].
#[derive(Clone, Debug)]
pub enum LocalTerm {
    /// `½‖x − center‖²`, one pseudo-sample.
    Quadratic { center: DVector<f64> },
    /// `½‖Z x − y‖²`.
    LeastSquares { features: DMatrix<f64>, responses: DVector<f64> },
    /// `Σ_i log(1 + exp(z_iᵀx)) − y_i z_iᵀx`, labels in `{0, 1}`.
    Logistic { features: DMatrix<f64>, labels: DVector<f64> },
}

/// One agent's `f_i(x) = data(x) + (ridge/2)‖x‖²`, where `ridge = λ_reg / N`.
#[derive(Clone, Debug)]
pub struct LocalPotential {
    term: LocalTerm,
    ridge: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl LocalPotential {
    pub fn new(term: LocalTerm, ridge: f64) -> Self {
        Self { term, ridge }
    }

    pub fn term(&self) -> &LocalTerm {
        &self.term
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        match &self.term {
            LocalTerm::Quadratic { center } => center.len(),
            LocalTerm::LeastSquares { features, .. } | LocalTerm::Logistic { features, .. } => features.ncols(),
        }
    }

    /// Number of local samples `n̄`.
    pub fn local_n(&self) -> usize {
        match &self.term {
            LocalTerm::Quadratic { .. } => 1,
            LocalTerm::LeastSquares { features, .. } | LocalTerm::Logistic { features, .. } => features.nrows(),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let data = match &self.term {
            LocalTerm::Quadratic { center } => 0.5 * (x - center).norm_squared(),
            LocalTerm::LeastSquares { features, responses } => 0.5 * (features * x - responses).norm_squared(),
            LocalTerm::Logistic { features, labels } => {
                let t = features * x;
                t.iter().zip(labels.iter()).map(|(&t, &y)| softplus(t) - y * t).sum()
            }
        };
        data + 0.5 * self.ridge * x.norm_squared()
    }

    /// Exact `∇f_i(x)`.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let data = match &self.term {
            LocalTerm::Quadratic { center } => x - center,
            LocalTerm::LeastSquares { features, responses } => features.tr_mul(&(features * x - responses)),
            LocalTerm::Logistic { features, labels } => {
                let t = features * x;
                let resid = DVector::from_iterator(
                    t.len(),
                    t.iter().zip(labels.iter()).map(|(&t, &y)| sigmoid(t) - y),
                );
                features.tr_mul(&resid)
            }
        };
        data + x * self.ridge
    }

    /// Data-term gradient of local sample `i`, without the ridge part.
    pub fn sample_gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        match &self.term {
            LocalTerm::Quadratic { center } => x - center,
            LocalTerm::LeastSquares { features, responses } => {
                let z = features.row(i).transpose();
                &z * (z.dot(x) - responses[i])
            }
            LocalTerm::Logistic { features, labels } => {
                let z = features.row(i).transpose();
                &z * (sigmoid(z.dot(x)) - labels[i])
            }
        }
    }

    /// Strong convexity and smoothness constants of this local term.
    fn curvature_bounds(&self) -> (f64, f64) {
        match &self.term {
            LocalTerm::Quadratic { .. } => (1.0 + self.ridge, 1.0 + self.ridge),
            LocalTerm::LeastSquares { features, .. } => {
                let (lo, hi) = eigen_range(&features.tr_mul(features));
                (lo.max(0.0) + self.ridge, hi + self.ridge)
            }
            LocalTerm::Logistic { features, .. } => {
                let (_, hi) = eigen_range(&features.tr_mul(features));
                (self.ridge, 0.25 * hi + self.ridge)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    Exact,
    /// Batch size `b`, indices drawn with replacement, scaled by `n̄ / b`.
    Minibatch(usize),
}

impl GradientMode {
    /// `Minibatch(n̄)` collapses to the exact full-batch gradient.
    pub fn for_batch(batch: usize, local_n: usize) -> Self {
        if batch >= local_n {
            GradientMode::Exact
        } else {
            GradientMode::Minibatch(batch)
        }
    }
}

/// An agent's potential paired with the way its gradient is estimated.
#[derive(Clone, Copy, Debug)]
pub struct GradientOracle<'a> {
    pub potential: &'a LocalPotential,
    pub mode: GradientMode,
}

impl GradientOracle<'_> {
    pub fn exact_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.potential.gradient(x)
    }

    /// Unbiased estimate from explicit sample indices.
    pub fn gradient_from_indices(&self, x: &DVector<f64>, indices: &[usize]) -> DVector<f64> {
        let local_n = self.potential.local_n();
        let mut acc = DVector::zeros(x.len());
        for &i in indices {
            acc += self.potential.sample_gradient(i, x);
        }
        acc * (local_n as f64 / indices.len() as f64) + x * self.potential.ridge()
    }
}

/// Minibatch gradient estimate; `Exact` and `b = n̄` bypass sampling.
pub fn stochastic_gradient<R: Rng + ?Sized>(
    oracle: &GradientOracle<'_>,
    x: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    match oracle.mode {
        GradientMode::Exact => Ok(oracle.exact_gradient(x)),
        GradientMode::Minibatch(0) => Err(Error::Model("minibatch size must be positive".into())),
        GradientMode::Minibatch(b) => {
            let local_n = oracle.potential.local_n();
            if b > local_n {
                return Err(Error::Model(format!("batch {b} exceeds local sample count {local_n}")));
            }
            if b == local_n {
                return Ok(oracle.exact_gradient(x));
            }
            let idx: Vec<usize> = (0..b).map(|_| rng.random_range(0..local_n)).collect();
            Ok(oracle.gradient_from_indices(x, &idx))
        }
    }
}

/// Closed-form Gaussian posterior / target.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianPosterior {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `count` exact draws, keyed by `(seed, index)`.
    pub fn draw(&self, count: usize, seed: u64) -> Vec<DVector<f64>> {
        let root = crate::linalg::psd_sqrt(&self.covariance);
        (0..count)
            .map(|t| {
                let mut rng = keyed_rng(seed, Purpose::Direct, t as u64, 0, 0);
                &self.mean + &root * crate::rng::standard_normal_vector(&mut rng, self.dim())
            })
            .collect()
    }
}

/// `Σ̂ = (ZᵀZ + λI)⁻¹`, `m̂ = Σ̂ Zᵀ y`.
pub fn gaussian_posterior(features: &DMatrix<f64>, responses: &DVector<f64>, lam: f64) -> Result<GaussianPosterior> {
    if features.nrows() != responses.len() {
        return Err(Error::Model("feature and response counts differ".into()));
    }
    let dim = features.ncols();
    let precision = features.tr_mul(features) + DMatrix::identity(dim, dim) * lam;
    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::Model("ZᵀZ + λI is not positive definite".into()))?;
    let covariance = crate::linalg::symmetrize(&chol.inverse());
    let mean = chol.solve(&features.tr_mul(responses));
    Ok(GaussianPosterior { mean, covariance })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    GaussianToy,
    LinearRegression,
    LogisticRegression,
}

#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub dim: usize,
    pub agents: Vec<LocalPotential>,
    /// Common strong convexity constant of every `f_i`.
    pub mu: f64,
    /// Common smoothness constant of every `f_i`.
    pub lips: f64,
    /// Prior precision `λ_reg`.
    pub reg: f64,
    /// Minimizer `x_*` of `f`.
    pub minimizer: DVector<f64>,
    /// Exact target `π`, when it is Gaussian.
    pub target: Option<GaussianPosterior>,
}

impl ModelSpec {
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn kappa(&self) -> f64 {
        self.lips / self.mu
    }

    pub fn oracle(&self, agent: usize, mode: GradientMode) -> GradientOracle<'_> {
        GradientOracle { potential: &self.agents[agent], mode }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.agents.iter().map(|a| a.value(x)).sum()
    }

    /// `∇f(x) = Σ_i ∇f_i(x)`.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        for a in &self.agents {
            g += a.gradient(x);
        }
        g
    }

    /// Smallest local sample count over agents.
    pub fn local_n(&self) -> usize {
        self.agents.iter().map(LocalPotential::local_n).min().unwrap_or(0)
    }
}

/// Per-agent blocks `(Z_j, y_j)`.
pub type AgentBlocks = Vec<(DMatrix<f64>, DVector<f64>)>;

fn check_blocks(blocks: &AgentBlocks, lam: f64) -> Result<usize> {
    if !(lam > 0.0) {
        return Err(Error::Model(format!("regularization must be positive, got {lam}")));
    }
    let dim = blocks
        .first()
        .map(|(z, _)| z.ncols())
        .ok_or_else(|| Error::Model("no agents".into()))?;
    for (j, (z, y)) in blocks.iter().enumerate() {
        if z.ncols() != dim || z.nrows() != y.len() || z.nrows() == 0 {
            return Err(Error::Model(format!("agent {j} has an inconsistent data block")));
        }
    }
    Ok(dim)
}

fn stack_blocks(blocks: &AgentBlocks) -> (DMatrix<f64>, DVector<f64>) {
    let dim = blocks[0].0.ncols();
    let rows: usize = blocks.iter().map(|(z, _)| z.nrows()).sum();
    let mut z_all = DMatrix::zeros(rows, dim);
    let mut y_all = DVector::zeros(rows);
    let mut r = 0;
    for (z, y) in blocks {
        z_all.rows_mut(r, z.nrows()).copy_from(z);
        y_all.rows_mut(r, y.len()).copy_from(y);
        r += z.nrows();
    }
    (z_all, y_all)
}

fn constants(agents: &[LocalPotential]) -> (f64, f64) {
    agents
        .iter()
        .map(LocalPotential::curvature_bounds)
        .fold((f64::INFINITY, 0.0f64), |(mu, l), (m, h)| (mu.min(m), l.max(h)))
}

/// `f_j(x) = ½‖Z_j x − y_j‖² + λ‖x‖²/(2N)`; minimizer is the posterior mean.
pub fn linear_regression_model(blocks: &AgentBlocks, lam: f64) -> Result<ModelSpec> {
    let dim = check_blocks(blocks, lam)?;
    let n_agents = blocks.len();
    let ridge = lam / n_agents as f64;
    let agents: Vec<LocalPotential> = blocks
        .iter()
        .map(|(z, y)| LocalPotential::new(LocalTerm::LeastSquares { features: z.clone(), responses: y.clone() }, ridge))
        .collect();
    let (mu, lips) = constants(&agents);
    let (z_all, y_all) = stack_blocks(blocks);
    let posterior = gaussian_posterior(&z_all, &y_all, lam)?;
    Ok(ModelSpec {
        kind: ModelKind::LinearRegression,
        dim,
        agents,
        mu,
        lips,
        reg: lam,
        minimizer: posterior.mean.clone(),
        target: Some(posterior),
    })
}

/// Bayesian logistic regression with Gaussian prior `N(0, λ⁻¹ I)`.
pub fn logistic_regression_model(blocks: &AgentBlocks, lam: f64) -> Result<ModelSpec> {
    let dim = check_blocks(blocks, lam)?;
    for (j, (_, y)) in blocks.iter().enumerate() {
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Model(format!("agent {j} has non-binary labels")));
        }
    }
    let n_agents = blocks.len();
    let ridge = lam / n_agents as f64;
    let agents: Vec<LocalPotential> = blocks
        .iter()
        .map(|(z, y)| LocalPotential::new(LocalTerm::Logistic { features: z.clone(), labels: y.clone() }, ridge))
        .collect();
    let (mu, lips) = constants(&agents);
    let mut model = ModelSpec {
        kind: ModelKind::LogisticRegression,
        dim,
        agents,
        mu,
        lips,
        reg: lam,
        minimizer: DVector::zeros(dim),
        target: None,
    };
    model.minimizer = minimize_by_gradient_descent(&model, 1e-10, 5_000_000)?;
    Ok(model)
}

/// `f_i(x) = ½‖x − a_i‖²`, target `N(mean(a), I/N)`.
pub fn gaussian_toy_model(centers: &[DVector<f64>]) -> Result<ModelSpec> {
    let n = centers.len();
    if n == 0 {
        return Err(Error::Model("toy model needs at least one agent".into()));
    }
    let dim = centers[0].len();
    if centers.iter().any(|c| c.len() != dim) {
        return Err(Error::Model("toy centers disagree on dimension".into()));
    }
    let mean = centers.iter().fold(DVector::zeros(dim), |acc, c| acc + c) / n as f64;
    let agents = centers
        .iter()
        .map(|c| LocalPotential::new(LocalTerm::Quadratic { center: c.clone() }, 0.0))
        .collect();
    Ok(ModelSpec {
        kind: ModelKind::GaussianToy,
        dim,
        agents,
        mu: 1.0,
        lips: 1.0,
        reg: 0.0,
        minimizer: mean.clone(),
        target: Some(GaussianPosterior { mean, covariance: DMatrix::identity(dim, dim) / n as f64 }),
    })
}

/// Deterministic full-gradient descent on `f` with step `1 / Σ_i L_i`.
pub fn minimize_by_gradient_descent(model: &ModelSpec, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    let global_l: f64 = model.agents.iter().map(|a| a.curvature_bounds().1).sum();
    let step = 1.0 / global_l;
    let mut x = DVector::zeros(model.dim);
    for _ in 0..max_iter {
        let g = model.gradient(&x);
        if g.norm() <= tol {
            return Ok(x);
        }
        x -= g * step;
    }
    Err(Error::Model(format!("gradient descent did not reach ‖∇f‖ ≤ {tol} in {max_iter} steps")))
}

/// Empirical gradient-noise bound `σ²`.
///
/// Max over agents and evaluation points of the Monte-Carlo estimate of
/// `E‖g̃_i(x) − ∇f_i(x)‖²`, times `safety`. Exact gradients give zero.
pub fn estimate_gradient_noise(
    model: &ModelSpec,
    mode: GradientMode,
    points: &[DVector<f64>],
    draws: usize,
    seed: u64,
    safety: f64,
) -> Result<f64> {
    if mode == GradientMode::Exact {
        return Ok(0.0);
    }
    let mut worst = 0.0f64;
    for (agent, _) in model.agents.iter().enumerate() {
        let oracle = model.oracle(agent, mode);
        for (p, x) in points.iter().enumerate() {
            let exact = oracle.exact_gradient(x);
            let mut rng = keyed_rng(seed, Purpose::Estimate, agent as u64, p as u64, 0);
            let mut acc = 0.0;
            for _ in 0..draws {
                acc += (stochastic_gradient(&oracle, x, &mut rng)? - &exact).norm_squared();
            }
            worst = worst.max(acc / draws as f64);
        }
    }
    Ok(worst * safety)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_blocks() -> AgentBlocks {
        vec![(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 2.0))]
    }

    #[test]
    fn scalar_linear_regression() {
        let m = linear_regression_model(&scalar_blocks(), 1.0).unwrap();
        let post = m.target.as_ref().unwrap();
        assert!((post.covariance[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((post.mean[0] - 1.0).abs() < 1e-15);
        assert_eq!(m.gradient(&DVector::zeros(1))[0], -2.0);
        assert!(m.gradient(&m.minimizer).norm() < 1e-12);
    }

    #[test]
    fn nonpositive_regularization_rejected() {
        assert!(matches!(linear_regression_model(&scalar_blocks(), 0.0), Err(Error::Model(_))));
        assert!(matches!(logistic_regression_model(&scalar_blocks(), -1.0), Err(Error::Model(_))));
    }

    #[test]
    fn posterior_identity_design() {
        let z = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![1.0, -4.0, 2.0]);
        let p = gaussian_posterior(&z, &y, 1.0).unwrap();
        assert!((p.covariance.clone() - DMatrix::identity(3, 3) * 0.5).amax() < 1e-15);
        assert!((p.mean.clone() - &y * 0.5).amax() < 1e-15);
    }

    #[test]
    fn posterior_shrinks_with_lambda() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 1.0, 2.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 0.2, -1.0]);
        let norms: Vec<f64> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&l| gaussian_posterior(&z, &y, l).unwrap().mean.norm())
            .collect();
        assert!(norms[0] > norms[1] && norms[1] > norms[2]);
    }

    #[test]
    fn singular_posterior_rejected() {
        let z = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0]);
        assert!(gaussian_posterior(&z, &y, 0.0).is_err());
    }

    #[test]
    fn logistic_gradient_at_zero() {
        let blocks = vec![(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 1.0))];
        let m = logistic_regression_model(&blocks, 1e-3).unwrap();
        let data_only = LocalPotential::new(m.agents[0].term().clone(), 0.0);
        assert_eq!(data_only.gradient(&DVector::zeros(1))[0], -0.5);
    }

    #[test]
    fn logistic_rejects_non_binary() {
        let blocks = vec![(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 0.5))];
        assert!(matches!(logistic_regression_model(&blocks, 1.0), Err(Error::Model(_))));
    }

    #[test]
    fn logistic_minimizer_is_stationary() {
        let z = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, -0.5, 1.0, 2.0, 1.0, 0.3, 1.0]);
        let y = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
        let blocks = vec![(z.rows(0, 2).into_owned(), y.rows(0, 2).into_owned()), (z.rows(2, 2).into_owned(), y.rows(2, 2).into_owned())];
        let m = logistic_regression_model(&blocks, 0.5).unwrap();
        assert!(m.gradient(&m.minimizer).norm() <= 1e-10);
        assert_eq!(m.mu, 0.25);
    }

    #[test]
    fn toy_model_targets() {
        let m = gaussian_toy_model(&[DVector::from_element(1, 1.0), DVector::from_element(1, 3.0)]).unwrap();
        assert_eq!(m.minimizer[0], 2.0);
        assert_eq!(m.target.as_ref().unwrap().covariance[(0, 0)], 0.5);
        let c = DVector::from_vec(vec![0.7, -1.2]);
        let m = gaussian_toy_model(&[c.clone(), c.clone(), c.clone()]).unwrap();
        assert!((m.minimizer.clone() - c).amax() < 1e-15);
    }

    #[test]
    fn full_batch_minibatch_is_exact() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -0.5, 1.0, 2.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 0.2, -1.0]);
        let m = linear_regression_model(&vec![(z, y)], 0.1).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.7]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = stochastic_gradient(&m.oracle(0, GradientMode::Minibatch(3)), &x, &mut rng).unwrap();
        assert_eq!(g, m.agents[0].gradient(&x));
        assert!(stochastic_gradient(&m.oracle(0, GradientMode::Minibatch(0)), &x, &mut rng).is_err());
        assert!(stochastic_gradient(&m.oracle(0, GradientMode::Minibatch(4)), &x, &mut rng).is_err());
    }

    #[test]
    fn batch_mode_collapses() {
        assert_eq!(GradientMode::for_batch(5, 5), GradientMode::Exact);
        assert_eq!(GradientMode::for_batch(3, 5), GradientMode::Minibatch(3));
    }
}
