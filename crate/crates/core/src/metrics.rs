//! Gaussian 2-Wasserstein distances, ensemble moments, consensus error and
//! classification accuracy.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{DataKind, Dataset};
use crate::linalg::{clamp_psd, psd_sqrt, symmetry_deviation, trace_sqrt};
use crate::models::GaussianPosterior;
use crate::samplers::Trajectory;
use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-8;

/// `W₂` between `N(m1, s1)` and `N(m2, s2)`.
pub fn gaussian_w2(m1: &DVector<f64>, s1: &DMatrix<f64>, m2: &DVector<f64>, s2: &DMatrix<f64>) -> Result<f64> {
    let d = m1.len();
    if m2.len() != d || s1.shape() != (d, d) || s2.shape() != (d, d) {
        return Err(Error::Metric("mean/covariance dimensions disagree".into()));
    }
    // a diverged ensemble must not read as a perfect match after eigenvalue clamping
    if [m1, m2].iter().any(|m| m.iter().any(|v| !v.is_finite()))
        || [s1, s2].iter().any(|s| s.iter().any(|v| !v.is_finite()))
    {
        return Ok(f64::NAN);
    }
    for (name, s) in [("first", s1), ("second", s2)] {
        let dev = symmetry_deviation(s);
        if !(dev <= SYMMETRY_TOL) {
            return Err(Error::Metric(format!("{name} covariance asymmetric by {dev:e}")));
        }
    }
    let root = psd_sqrt(s1);
    let cross = &root * s2 * &root;
    let sq = (m1 - m2).norm_squared() + clamp_psd(s1).trace() + clamp_psd(s2).trace() - 2.0 * trace_sqrt(&cross);
    Ok(if sq.is_finite() { sq.max(0.0).sqrt() } else { f64::NAN })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: DVector<f64>,
    /// Unbiased sample covariance, eigenvalues clamped at zero.
    pub covariance: DMatrix<f64>,
}

/// Two-pass sample mean and unbiased covariance of the rows of `samples`
/// given as separate vectors.
pub fn sample_moments<'a, I>(samples: I) -> Result<MomentEstimate>
where
    I: IntoIterator<Item = &'a DVector<f64>>,
    I::IntoIter: Clone,
{
    let iter = samples.into_iter();
    let count = iter.clone().count();
    if count < 2 {
        return Err(Error::Metric(format!("need at least 2 samples for a covariance, got {count}")));
    }
    let dim = iter.clone().next().map(|v| v.len()).unwrap_or(0);
    let mut mean = DVector::zeros(dim);
    for v in iter.clone() {
        mean += v;
    }
    mean /= count as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for v in iter {
        let c = v - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= (count - 1) as f64;
    let covariance = if cov.iter().all(|v| v.is_finite()) { clamp_psd(&cov) } else { cov };
    Ok(MomentEstimate { mean, covariance })
}

/// Iterates of every trial at a common set of recorded iterations.
#[derive(Clone, Debug)]
pub struct TrialEnsemble {
    iterations: Vec<usize>,
    /// `samples[trial][snapshot]` is an `N × dim` matrix.
    samples: Vec<Vec<DMatrix<f64>>>,
}

impl TrialEnsemble {
    pub fn from_trajectories(trajectories: &[Trajectory]) -> Result<Self> {
        let first = trajectories.first().ok_or_else(|| Error::Metric("empty ensemble".into()))?;
        let iterations = first.iterations();
        let shape = first.snapshots[0].x.shape();
        let mut samples = Vec::with_capacity(trajectories.len());
        for (t, traj) in trajectories.iter().enumerate() {
            if traj.iterations() != iterations || traj.snapshots.iter().any(|s| s.x.shape() != shape) {
                return Err(Error::Metric(format!("trial {t} disagrees on iterations or shape")));
            }
            samples.push(traj.snapshots.iter().map(|s| s.x.clone()).collect());
        }
        Ok(Self { iterations, samples })
    }

    pub fn num_trials(&self) -> usize {
        self.samples.len()
    }

    pub fn num_agents(&self) -> usize {
        self.samples[0][0].nrows()
    }

    pub fn dim(&self) -> usize {
        self.samples[0][0].ncols()
    }

    pub fn iterations(&self) -> &[usize] {
        &self.iterations
    }

    fn snapshot_index(&self, iteration: usize) -> Result<usize> {
        self.iterations
            .binary_search(&iteration)
            .map_err(|_| Error::Metric(format!("iteration {iteration} was not recorded")))
    }

    /// Sample of agent `agent` at `iteration`, one vector per trial.
    pub fn agent_samples(&self, agent: usize, iteration: usize) -> Result<Vec<DVector<f64>>> {
        if agent >= self.num_agents() {
            return Err(Error::Metric(format!("agent {agent} out of range")));
        }
        let s = self.snapshot_index(iteration)?;
        Ok(self.samples.iter().map(|trial| trial[s].row(agent).transpose()).collect())
    }
}

pub fn ensemble_moments(ensemble: &TrialEnsemble, agent: usize, iteration: usize) -> Result<MomentEstimate> {
    let samples = ensemble.agent_samples(agent, iteration)?;
    sample_moments(samples.iter())
}

/// Per-agent metric values with their cross-agent mean and population std.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricCurve {
    pub iterations: Vec<usize>,
    /// `per_agent[s][i]` is the value for agent `i` at `iterations[s]`.
    pub per_agent: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl MetricCurve {
    fn from_rows(iterations: Vec<usize>, per_agent: Vec<Vec<f64>>) -> Self {
        let (mean, std) = per_agent.iter().map(|row| mean_and_std(row)).unzip();
        Self { iterations, per_agent, mean, std }
    }

    pub fn value_at(&self, iteration: usize) -> Option<f64> {
        self.iterations.iter().position(|&k| k == iteration).map(|s| self.mean[s])
    }

    pub fn final_mean(&self) -> f64 {
        *self.mean.last().expect("curves are never empty")
    }

    /// `iteration,mean,std` for every recorded iteration at or after `from`.
    pub fn write_summary_csv(&self, path: impl AsRef<Path>, from: usize) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "iteration,mean,std")?;
        for (s, &k) in self.iterations.iter().enumerate().filter(|(_, &k)| k >= from) {
            writeln!(out, "{k},{:e},{:e}", self.mean[s], self.std[s])?;
        }
        out.flush()?;
        Ok(())
    }

    /// `iteration,agent,value`.
    pub fn write_per_agent_csv(&self, path: impl AsRef<Path>, from: usize) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "iteration,agent,value")?;
        for (s, &k) in self.iterations.iter().enumerate().filter(|(_, &k)| k >= from) {
            for (i, v) in self.per_agent[s].iter().enumerate() {
                writeln!(out, "{k},{i},{v:e}")?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Gaussian-proxy `W₂` of every agent's empirical marginal to the posterior.
pub fn w2_to_posterior_curve(ensemble: &TrialEnsemble, posterior: &GaussianPosterior) -> Result<MetricCurve> {
    let mut rows = Vec::with_capacity(ensemble.iterations().len());
    for &k in ensemble.iterations() {
        let mut row = Vec::with_capacity(ensemble.num_agents());
        for i in 0..ensemble.num_agents() {
            let m = ensemble_moments(ensemble, i, k)?;
            row.push(gaussian_w2(&m.mean, &m.covariance, &posterior.mean, &posterior.covariance)?);
        }
        rows.push(row);
    }
    Ok(MetricCurve::from_rows(ensemble.iterations().to_vec(), rows))
}

/// `(Σ_i ‖x_i − x̄‖²)^{1/2}` for stacked iterates.
pub fn consensus_error(x: &DMatrix<f64>) -> f64 {
    if x.nrows() == 0 {
        return 0.0;
    }
    let mean = x.row_mean();
    x.row_iter().map(|r| (r - &mean).norm_squared()).sum::<f64>().sqrt()
}

/// Fraction of test rows whose label matches `zᵀx ≥ 0`.
pub fn accuracy(params: &DVector<f64>, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Metric("empty test set".into()));
    }
    if test.kind != DataKind::Binary {
        return Err(Error::Metric("accuracy needs a binary test set".into()));
    }
    if test.dim() != params.len() {
        return Err(Error::Metric(format!("parameter dim {} vs test dim {}", params.len(), test.dim())));
    }
    let scores = &test.features * params;
    let correct = scores
        .iter()
        .zip(test.targets.iter())
        .filter(|(s, y)| (**s >= 0.0) == (**y >= 0.5))
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// Per-agent test accuracy averaged over trials, at each recorded iteration.
pub fn accuracy_curve(ensemble: &TrialEnsemble, test: &Dataset) -> Result<MetricCurve> {
    let mut rows = Vec::with_capacity(ensemble.iterations().len());
    for &k in ensemble.iterations() {
        let mut row = Vec::with_capacity(ensemble.num_agents());
        for i in 0..ensemble.num_agents() {
            let mut acc = 0.0;
            let samples = ensemble.agent_samples(i, k)?;
            for x in &samples {
                acc += accuracy(x, test)?;
            }
            row.push(acc / samples.len() as f64);
        }
        rows.push(row);
    }
    Ok(MetricCurve::from_rows(ensemble.iterations().to_vec(), rows))
}
