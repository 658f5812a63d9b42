//! Time-varying undirected networks and their mixing matrices.
//!
//! A [`GraphSchedule`] is a pre-drawn cyclic sequence of topologies: entry
//! `k mod P` is active at iteration `k`. Every entry is required to be
//! connected on its own, which is stricter than the joint connectivity over a
//! window that the convergence analysis needs, but it keeps the B-step
//! diagnostics meaningful for the generators used here.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::linalg::max_singular_value;
use crate::rng::{keyed_rng, Purpose};
use crate::{Error, Result};

/// Edge weight offset used by the experiments.
pub const DEFAULT_EPS_HAT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    num_agents: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Topology {
    /// Builds an undirected topology; each pair is stored as `(min, max)`.
    pub fn new(num_agents: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if num_agents == 0 {
            return Err(Error::Construction("topology needs at least one agent".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= num_agents || j >= num_agents {
                return Err(Error::Construction(format!(
                    "edge ({i}, {j}) references an agent outside [0, {num_agents})"
                )));
            }
            if i == j {
                return Err(Error::Construction(format!("self-loop on agent {i}")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        Ok(Self { num_agents, edges: set })
    }

    pub fn complete(num_agents: usize) -> Result<Self> {
        let edges = (0..num_agents).flat_map(|i| ((i + 1)..num_agents).map(move |j| (i, j)));
        Self::new(num_agents, edges)
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    /// Neighbour counts, self excluded.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_agents];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.num_agents];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.num_agents];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut visited = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    visited += 1;
                    queue.push_back(v);
                }
            }
        }
        visited == self.num_agents
    }
}

/// Symmetric doubly stochastic weights respecting a topology.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingMatrix {
    entries: DMatrix<f64>,
}

impl MixingMatrix {
    /// Wraps a raw matrix after checking the mixing invariants against `topology`.
    pub fn from_entries(entries: DMatrix<f64>, topology: &Topology) -> Result<Self> {
        let w = Self { entries };
        w.validate(topology, 1e-12)?;
        Ok(w)
    }

    /// `(1/N) 1 1ᵀ`, the perfectly mixing matrix (on the complete graph).
    pub fn averaging(n: usize) -> Self {
        Self { entries: DMatrix::from_element(n, n, 1.0 / n as f64) }
    }

    pub fn identity(n: usize) -> Self {
        Self { entries: DMatrix::identity(n, n) }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn num_agents(&self) -> usize {
        self.entries.nrows()
    }

    /// Checks symmetry, unit row sums, `[0, 1]` entries and the sparsity pattern.
    pub fn validate(&self, topology: &Topology, tol: f64) -> Result<()> {
        let w = &self.entries;
        let n = topology.num_agents();
        if w.nrows() != n || w.ncols() != n {
            return Err(Error::Construction(format!(
                "mixing matrix is {}x{}, topology has {n} agents",
                w.nrows(),
                w.ncols()
            )));
        }
        for i in 0..n {
            let row_sum: f64 = w.row(i).iter().sum();
            if (row_sum - 1.0).abs() > tol {
                return Err(Error::Construction(format!("row {i} sums to {row_sum}")));
            }
            for j in 0..n {
                let v = w[(i, j)];
                if !(-tol..=1.0 + tol).contains(&v) {
                    return Err(Error::Construction(format!("W[{i},{j}] = {v} outside [0, 1]")));
                }
                if (v - w[(j, i)]).abs() > tol {
                    return Err(Error::Construction(format!("W not symmetric at ({i}, {j})")));
                }
                if i != j && !topology.has_edge(i, j) && v != 0.0 {
                    return Err(Error::Construction(format!("W[{i},{j}] = {v} on a non-edge")));
                }
            }
        }
        Ok(())
    }
}

/// Metropolis constant edge-weight rule: `1 / (max(deg_i, deg_j) + eps_hat)`
/// on edges, self-weight fills the row to one.
pub fn metropolis_weights(topology: &Topology, eps_hat: f64) -> Result<MixingMatrix> {
    if !(eps_hat > 0.0) {
        return Err(Error::Construction(format!("eps_hat must be positive, got {eps_hat}")));
    }
    if !topology.is_connected() {
        return Err(Error::Construction("topology is disconnected".into()));
    }
    let n = topology.num_agents();
    let deg = topology.degrees();
    let mut w = DMatrix::zeros(n, n);
    for (i, j) in topology.edges() {
        let v = 1.0 / (deg[i].max(deg[j]) as f64 + eps_hat);
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_entries(w, topology)
}

/// Which generator produced a schedule, with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Generator {
    Barbell,
    Lollipop { branch_min: usize, branch_max: usize, attach_count: usize },
    Complete,
    Custom,
}

#[derive(Clone, Debug)]
pub struct GraphSchedule {
    generator: Generator,
    seed: u64,
    eps_hat: f64,
    window: usize,
    topologies: Vec<Topology>,
    matrices: Vec<MixingMatrix>,
}

impl GraphSchedule {
    /// Builds a schedule from explicit topologies; each must be connected.
    pub fn from_topologies(
        generator: Generator,
        topologies: Vec<Topology>,
        eps_hat: f64,
        seed: u64,
    ) -> Result<Self> {
        let first = topologies
            .first()
            .ok_or_else(|| Error::Construction("schedule needs at least one topology".into()))?;
        let n = first.num_agents();
        if topologies.iter().any(|t| t.num_agents() != n) {
            return Err(Error::Construction("schedule entries disagree on agent count".into()));
        }
        let matrices = topologies
            .iter()
            .enumerate()
            .map(|(k, t)| {
                metropolis_weights(t, eps_hat)
                    .map_err(|e| Error::Construction(format!("schedule entry {k}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let window = topologies.len();
        Ok(Self { generator, seed, eps_hat, window, topologies, matrices })
    }

    /// Period-1 schedule around an arbitrary validated matrix.
    pub fn fixed(matrix: MixingMatrix, topology: Topology) -> Result<Self> {
        matrix.validate(&topology, 1e-12)?;
        Ok(Self {
            generator: Generator::Custom,
            seed: 0,
            eps_hat: 0.0,
            window: 1,
            topologies: vec![topology],
            matrices: vec![matrix],
        })
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window.max(1);
        self
    }

    /// Mixing matrix active at iteration `k`.
    pub fn at(&self, k: usize) -> &MixingMatrix {
        &self.matrices[k % self.matrices.len()]
    }

    pub fn topology_at(&self, k: usize) -> &Topology {
        &self.topologies[k % self.topologies.len()]
    }

    pub fn period(&self) -> usize {
        self.matrices.len()
    }

    pub fn num_agents(&self) -> usize {
        self.topologies[0].num_agents()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn eps_hat(&self) -> f64 {
        self.eps_hat
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn matrices(&self) -> &[MixingMatrix] {
        &self.matrices
    }

    pub fn to_document(&self) -> ScheduleDocument {
        ScheduleDocument {
            generator: self.generator.clone(),
            num_agents: self.num_agents(),
            period: self.period(),
            window: self.window,
            seed: self.seed,
            eps_hat: self.eps_hat,
            edges: self.topologies.iter().map(|t| t.edges().map(|(i, j)| [i, j]).collect()).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    /// Rebuilds the matrices from a serialized edge list.
    pub fn from_document(doc: &ScheduleDocument) -> Result<Self> {
        if doc.edges.len() != doc.period {
            return Err(Error::Construction(format!(
                "document lists {} topologies for period {}",
                doc.edges.len(),
                doc.period
            )));
        }
        let topologies = doc
            .edges
            .iter()
            .map(|list| Topology::new(doc.num_agents, list.iter().map(|e| (e[0], e[1]))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_topologies(doc.generator.clone(), topologies, doc.eps_hat, doc.seed)?
            .with_window(doc.window))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ScheduleDocument = serde_json::from_str(s)?;
        Self::from_document(&doc)
    }

    /// SHA-256 over the edge lists and weight parameters, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_agents() as u64).to_le_bytes());
        h.update(self.eps_hat.to_le_bytes());
        for t in &self.topologies {
            h.update((t.num_edges() as u64).to_le_bytes());
            for (i, j) in t.edges() {
                h.update((i as u64).to_le_bytes());
                h.update((j as u64).to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// JSON form of a schedule, kept for experiment provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDocument {
    pub generator: Generator,
    pub num_agents: usize,
    pub period: usize,
    pub window: usize,
    pub seed: u64,
    pub eps_hat: f64,
    pub edges: Vec<Vec<[usize; 2]>>,
}

/// Two cliques of `N/2` agents joined by one uniformly random bridge per entry.
pub fn barbell_schedule(num_agents: usize, period: usize, seed: u64) -> Result<GraphSchedule> {
    barbell_schedule_with(num_agents, period, seed, DEFAULT_EPS_HAT)
}

pub fn barbell_schedule_with(num_agents: usize, period: usize, seed: u64, eps_hat: f64) -> Result<GraphSchedule> {
    if num_agents < 4 || !num_agents.is_multiple_of(2) {
        return Err(Error::Construction(format!("barbell needs an even N >= 4, got {num_agents}")));
    }
    if period == 0 {
        return Err(Error::Construction("period must be positive".into()));
    }
    let half = num_agents / 2;
    let topologies = (0..period)
        .map(|k| {
            let mut rng = keyed_rng(seed, Purpose::Schedule, k as u64, 0, 0);
            let u = rng.random_range(0..half);
            let v = half + rng.random_range(0..half);
            let mut edges = clique_edges(0..half);
            edges.extend(clique_edges(half..num_agents));
            edges.push((u, v));
            Topology::new(num_agents, edges)
        })
        .collect::<Result<Vec<_>>>()?;
    GraphSchedule::from_topologies(Generator::Barbell, topologies, eps_hat, seed)
}

/// Generalized lollipop `L^s_{m,r}`: a path on `N'` agents (terminal node is
/// agent 0, the smallest index) plus a clique on the remaining agents, with
/// `s` distinct clique agents wired to the terminal node. `N'` is redrawn
/// uniformly from `branch_range` for every entry.
pub fn lollipop_schedule(
    num_agents: usize,
    branch_range: (usize, usize),
    attach_count: usize,
    period: usize,
    seed: u64,
) -> Result<GraphSchedule> {
    lollipop_schedule_with(num_agents, branch_range, attach_count, period, seed, DEFAULT_EPS_HAT)
}

pub fn lollipop_schedule_with(
    num_agents: usize,
    branch_range: (usize, usize),
    attach_count: usize,
    period: usize,
    seed: u64,
    eps_hat: f64,
) -> Result<GraphSchedule> {
    let (lo, hi) = branch_range;
    if lo == 0 || lo > hi {
        return Err(Error::Construction(format!("invalid branch range [{lo}, {hi}]")));
    }
    if attach_count == 0 || hi + attach_count + 1 > num_agents {
        return Err(Error::Construction(format!(
            "cannot attach {attach_count} clique agents: N = {num_agents}, branch up to {hi}"
        )));
    }
    if period == 0 {
        return Err(Error::Construction("period must be positive".into()));
    }
    let topologies = (0..period)
        .map(|k| {
            let mut rng = keyed_rng(seed, Purpose::Schedule, k as u64, 0, 0);
            let branch = rng.random_range(lo..=hi);
            let clique_size = num_agents - branch;
            let mut edges: Vec<(usize, usize)> = (1..branch).map(|i| (i - 1, i)).collect();
            edges.extend(clique_edges(branch..num_agents));
            for c in sample(&mut rng, clique_size, attach_count).iter() {
                edges.push((0, branch + c));
            }
            Topology::new(num_agents, edges)
        })
        .collect::<Result<Vec<_>>>()?;
    GraphSchedule::from_topologies(
        Generator::Lollipop { branch_min: lo, branch_max: hi, attach_count },
        topologies,
        eps_hat,
        seed,
    )
}

/// Period-1 Metropolis schedule on the complete graph.
pub fn static_complete_schedule(num_agents: usize, eps_hat: f64) -> Result<GraphSchedule> {
    if num_agents < 2 {
        return Err(Error::Construction("complete schedule needs N >= 2".into()));
    }
    let t = Topology::complete(num_agents)?;
    GraphSchedule::from_topologies(Generator::Complete, vec![t], eps_hat, 0)
}

fn clique_edges(range: std::ops::Range<usize>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in range.clone() {
        for j in (i + 1)..range.end {
            out.push((i, j));
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralDiagnostics {
    pub window: usize,
    /// `δ(k)` for one full period, `k = 0..P`.
    pub delta_per_k: Vec<f64>,
    pub delta: f64,
    pub gap: f64,
}

/// `W_B^{(k)} = W^{(k)} W^{(k-1)} ... W^{(k-B+1)}` with cyclic indices.
pub fn window_product(schedule: &GraphSchedule, k: usize, window: usize) -> DMatrix<f64> {
    let p = schedule.period();
    let n = schedule.num_agents();
    let mut prod = DMatrix::identity(n, n);
    for j in 0..window {
        let idx = (k + p * window - j) % p;
        prod *= schedule.matrices()[idx].entries();
    }
    prod
}

/// `δ(k) = σ_max(W_B^{(k)} - (1/N) 1 1ᵀ)` over one period, and its maximum.
pub fn spectral_diagnostics(schedule: &GraphSchedule, window: usize) -> Result<SpectralDiagnostics> {
    if window == 0 {
        return Err(Error::Construction("window must be at least 1".into()));
    }
    let n = schedule.num_agents();
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    let delta_per_k: Vec<f64> = (0..schedule.period())
        .map(|k| max_singular_value(&(window_product(schedule, k, window) - &j)))
        .collect();
    let delta = delta_per_k.iter().copied().fold(0.0, f64::max);
    Ok(SpectralDiagnostics { window, delta_per_k, delta, gap: 1.0 - delta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metropolis_path_of_three() {
        let t = Topology::new(3, [(0, 1), (1, 2)]).unwrap();
        let w = metropolis_weights(&t, 1e-6).unwrap();
        let e = w.entries();
        let off = 1.0 / (2.0 + 1e-6);
        assert_eq!(e[(0, 1)], off);
        assert_eq!(e[(1, 2)], off);
        assert_eq!(e[(0, 2)], 0.0);
        assert_eq!(e[(0, 0)], 1.0 - off);
        assert_eq!(e[(2, 2)], 1.0 - off);
        assert!((e[(1, 1)] - (1.0 - 2.0 * off)).abs() < 1e-15);
    }

    #[test]
    fn metropolis_single_edge() {
        let t = Topology::new(2, [(0, 1)]).unwrap();
        let w = metropolis_weights(&t, 1e-6).unwrap();
        let off = 1.0 / (1.0 + 1e-6);
        assert_eq!(w.entries()[(0, 1)], off);
        assert!((w.entries()[(0, 0)] - (1.0 - off)).abs() < 1e-15);
    }

    #[test]
    fn disconnected_rejected() {
        // two K_3 with no bridge
        let mut edges = clique_edges(0..3);
        edges.extend(clique_edges(3..6));
        let t = Topology::new(6, edges).unwrap();
        assert!(matches!(metropolis_weights(&t, 1e-6), Err(Error::Construction(_))));
    }

    #[test]
    fn bad_edges_rejected() {
        assert!(Topology::new(3, [(0, 3)]).is_err());
        assert!(Topology::new(3, [(1, 1)]).is_err());
    }

    #[test]
    fn barbell_edge_counts() {
        let s = barbell_schedule(10, 7, 1).unwrap();
        assert!(s.topologies.iter().all(|t| t.num_edges() == 21));
        let s = barbell_schedule(4, 1, 1).unwrap();
        assert_eq!(s.topology_at(0).num_edges(), 3);
    }

    #[test]
    fn barbell_rejects_odd() {
        assert!(barbell_schedule(11, 5, 0).is_err());
        assert!(barbell_schedule(2, 5, 0).is_err());
    }

    #[test]
    fn barbell_bridge_crosses_halves() {
        let s = barbell_schedule(20, 50, 9).unwrap();
        for t in &s.topologies {
            let cross: Vec<_> = t.edges().filter(|&(i, j)| i < 10 && j >= 10).collect();
            assert_eq!(cross.len(), 1);
        }
    }

    #[test]
    fn lollipop_shape() {
        let s = lollipop_schedule(8, (3, 3), 3, 1, 5).unwrap();
        let t = s.topology_at(0);
        // K_5 (10) + P_3 (2) + 3 attach edges
        assert_eq!(t.num_edges(), 15);
        assert!(t.has_edge(0, 1) && t.has_edge(1, 2));
        assert_eq!(t.edges().filter(|&(i, j)| i == 0 && j >= 3).count(), 3);
    }

    #[test]
    fn lollipop_clique_sizes() {
        let s = lollipop_schedule(20, (3, 4), 3, 50, 2).unwrap();
        let mut seen = BTreeSet::new();
        for t in &s.topologies {
            // path agents have no edges among indices >= branch except attachments
            let deg = t.degrees();
            let clique = (0..20).filter(|&i| deg[i] >= 15).count();
            assert!(clique == 16 || clique == 17, "clique size {clique}");
            seen.insert(clique);
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn lollipop_infeasible_attach() {
        assert!(lollipop_schedule(20, (3, 4), 20, 5, 0).is_err());
        assert!(lollipop_schedule(8, (3, 4), 4, 5, 0).is_err());
    }

    #[test]
    fn complete_schedule_weights() {
        let s = static_complete_schedule(2, 1e-6).unwrap();
        let e = s.at(0).entries();
        assert!((e[(0, 1)] - 1.0 / (1.0 + 1e-6)).abs() < 1e-15);
        let s = static_complete_schedule(3, 1e-6).unwrap();
        assert_eq!(s.at(5).entries()[(0, 2)], 1.0 / (2.0 + 1e-6));
    }

    #[test]
    fn averaging_matrix_has_zero_delta() {
        let t = Topology::complete(4).unwrap();
        let s = GraphSchedule::fixed(MixingMatrix::averaging(4), t).unwrap();
        let d = spectral_diagnostics(&s, 1).unwrap();
        assert!(d.delta < 1e-12);
        let t = Topology::complete(2).unwrap();
        let w = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let s = GraphSchedule::fixed(MixingMatrix::from_entries(w, &t).unwrap(), t).unwrap();
        assert!(spectral_diagnostics(&s, 3).unwrap().delta_per_k.iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn barbell_joint_spectral_property() {
        let s = barbell_schedule(20, 50, 3).unwrap();
        let d = spectral_diagnostics(&s, 50).unwrap();
        assert_eq!(d.delta_per_k.len(), 50);
        assert!(d.delta > 0.0 && d.delta < 1.0, "delta = {}", d.delta);
    }

    #[test]
    fn json_round_trip_preserves_matrices() {
        let s = lollipop_schedule(12, (3, 4), 3, 6, 11).unwrap();
        let back = GraphSchedule::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back.matrices(), s.matrices());
        assert_eq!(back.generator(), s.generator());
        assert_eq!(back.content_hash(), s.content_hash());
    }

    #[test]
    fn schedules_are_deterministic() {
        let a = barbell_schedule(20, 50, 42).unwrap();
        let b = barbell_schedule(20, 50, 42).unwrap();
        let c = barbell_schedule(20, 50, 43).unwrap();
        assert_eq!(a.matrices(), b.matrices());
        assert_ne!(a.content_hash(), c.content_hash());
    }
}
