//! Synthetic regression/classification data, the diagnostic CSV reader and
//! agent partitions.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::models::AgentBlocks;
use crate::rng::{keyed_rng, Purpose};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Regression,
    Binary,
}

/// Samples with intercept-augmented features: the last column is all ones.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub kind: DataKind,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, targets: DVector<f64>, kind: DataKind) -> Result<Self> {
        if features.nrows() != targets.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in dataset".into()));
        }
        if kind == DataKind::Binary && targets.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::Data("binary dataset has labels outside {0, 1}".into()));
        }
        Ok(Self { features, targets, kind })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        let features = self.features.select_rows(rows);
        let targets = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.targets[r]));
        Dataset { features, targets, kind: self.kind }
    }

    /// Count of label-1 samples.
    pub fn positives(&self) -> usize {
        self.targets.iter().filter(|&&y| y == 1.0).count()
    }

    /// Per-agent `(Z_j, y_j)` blocks following `partition`.
    pub fn blocks(&self, partition: &Partition) -> AgentBlocks {
        partition
            .agent_slices
            .iter()
            .map(|rows| {
                let d = self.select(rows);
                (d.features, d.targets)
            })
            .collect()
    }

    /// Writes `f0,..,f{d},target` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("f{j}")).collect();
        header.push("target".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.targets[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn augment(raw: &DMatrix<f64>) -> DMatrix<f64> {
    raw.clone().insert_column(raw.ncols(), 1.0)
}

/// Gaussian linear model `y_i = z_iᵀx + δ_i` with `x ~ N(0, λ⁻¹I)`,
/// `ẑ_i ~ N(0, I_d)` and `δ_i ~ N(0, noise_var)`. Returns the data and `x`.
pub fn synth_linear(n: usize, d: usize, lam: f64, noise_var: f64, seed: u64) -> Result<(Dataset, DVector<f64>)> {
    if n == 0 || d == 0 {
        return Err(Error::Data("n and d must be positive".into()));
    }
    if !(lam > 0.0) || noise_var < 0.0 {
        return Err(Error::Data("need lam > 0 and noise_var >= 0".into()));
    }
    let mut rng = keyed_rng(seed, Purpose::Data, 0, 0, 0);
    let prior_sd = lam.powf(-0.5);
    let truth = DVector::from_iterator(d + 1, (0..=d).map(|_| prior_sd * rng.sample::<f64, _>(StandardNormal)));
    let raw = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let features = augment(&raw);
    let noise_sd = noise_var.sqrt();
    let mut targets = &features * &truth;
    for t in targets.iter_mut() {
        *t += noise_sd * rng.sample::<f64, _>(StandardNormal);
    }
    Ok((Dataset::new(features, targets, DataKind::Regression)?, truth))
}

/// Draws `M` of each class uniformly, keeping the surviving rows in order.
/// With `target = Some(n)` each class keeps `n / 2`; otherwise the minority size.
fn balance(data: &Dataset, target: Option<usize>, seed: u64) -> Result<Dataset> {
    let pos: Vec<usize> = (0..data.len()).filter(|&i| data.targets[i] == 1.0).collect();
    let neg: Vec<usize> = (0..data.len()).filter(|&i| data.targets[i] == 0.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Data("a class is absent from the training split".into()));
    }
    let per_class = match target {
        Some(n) => {
            if n % 2 != 0 {
                return Err(Error::Data(format!("balanced size {n} must be even")));
            }
            n / 2
        }
        None => pos.len().min(neg.len()),
    };
    if pos.len() < per_class || neg.len() < per_class {
        return Err(Error::Data(format!(
            "cannot balance to {per_class} per class: have {} positives and {} negatives",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = keyed_rng(seed, Purpose::Balance, 0, 0, 0);
    let mut keep: Vec<usize> = Vec::with_capacity(2 * per_class);
    for class in [pos, neg] {
        keep.extend(rand::seq::index::sample(&mut rng, class.len(), per_class).iter().map(|i| class[i]));
    }
    keep.sort_unstable();
    Ok(data.select(&keep))
}

/// Shuffled unstratified split; the first `round(frac · n)` rows train.
fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Data(format!("train fraction {train_fraction} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut keyed_rng(seed, Purpose::Split, 0, 0, 0));
    let n_train = (train_fraction * data.len() as f64 + 1e-9).floor() as usize;
    Ok((data.select(&order[..n_train]), data.select(&order[n_train..])))
}

/// Synthetic logistic data: labels `y_i = 1{p_i ≤ σ(z_iᵀx)}`, `p_i ~ U(0,1)`.
///
/// Returns `(train, test)`; the training split is class balanced down to
/// `balanced_train` samples (or to twice the minority count when `None`).
pub fn synth_logistic(
    total: usize,
    d: usize,
    lam: f64,
    train_fraction: f64,
    balanced_train: Option<usize>,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if total < 2 || d == 0 {
        return Err(Error::Data("need total >= 2 and d >= 1".into()));
    }
    let mut rng = keyed_rng(seed, Purpose::Data, 1, 0, 0);
    let prior = Normal::new(0.0, lam.powf(-0.5)).map_err(|e| Error::Data(e.to_string()))?;
    let truth = DVector::from_iterator(d + 1, (0..=d).map(|_| prior.sample(&mut rng)));
    let raw = DMatrix::from_fn(total, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let features = augment(&raw);
    let logits = &features * &truth;
    let labels = logits.map(|t| {
        let p: f64 = rng.random();
        if p <= 1.0 / (1.0 + (-t).exp()) {
            1.0
        } else {
            0.0
        }
    });
    let all = Dataset::new(features, labels, DataKind::Binary)?;
    let (train, test) = split(&all, train_fraction, seed)?;
    Ok((balance(&train, balanced_train, seed)?, test))
}

/// Column means and population standard deviations of the non-intercept columns.
#[derive(Clone, Debug)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Statistics over all columns except the trailing intercept.
    pub fn fit(data: &Dataset) -> Self {
        let n = data.len() as f64;
        let cols = data.dim() - 1;
        let mut means = Vec::with_capacity(cols);
        let mut scales = Vec::with_capacity(cols);
        for j in 0..cols {
            let col = data.features.column(j);
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            means.push(m);
            scales.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self { means, scales }
    }

    pub fn apply(&self, data: &Dataset) -> Dataset {
        let mut out = data.clone();
        for j in 0..self.means.len() {
            for v in out.features.column_mut(j).iter_mut() {
                *v = (*v - self.means[j]) / self.scales[j];
            }
        }
        out
    }
}

/// Options for the diagnostic breast-cancer CSV.
#[derive(Clone, Debug)]
pub struct RealCsvOptions {
    pub train_fraction: f64,
    pub balanced_train: usize,
    pub seed: u64,
    pub has_header: bool,
}

impl Default for RealCsvOptions {
    fn default() -> Self {
        // 0.09 of 569 rows leaves 51 training samples.
        Self { train_fraction: 0.09, balanced_train: 30, seed: 0, has_header: false }
    }
}

pub const REAL_FEATURES: usize = 30;

/// Reads `id, diagnosis, 30 numeric features` rows (the UCI `wdbc.data`
/// layout). Benign is encoded 1, malignant 0; the id column is ignored.
pub fn read_diagnostic_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut raw: Vec<f64> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::DataRow { row, msg: e.to_string() })?;
        if rec.len() != REAL_FEATURES + 2 {
            return Err(Error::DataRow {
                row,
                msg: format!("expected {} columns, found {}", REAL_FEATURES + 2, rec.len()),
            });
        }
        let label = match &rec[1] {
            "B" | "b" => 1.0,
            "M" | "m" => 0.0,
            other => return Err(Error::DataRow { row, msg: format!("unknown diagnosis {other:?}") }),
        };
        for field in rec.iter().skip(2) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::DataRow { row, msg: format!("unparseable value {field:?}") })?;
            if !v.is_finite() {
                return Err(Error::DataRow { row, msg: "non-finite value".into() });
            }
            raw.push(v);
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Data("CSV has no rows".into()));
    }
    let n = labels.len();
    let features = augment(&DMatrix::from_row_slice(n, REAL_FEATURES, &raw));
    Dataset::new(features, DVector::from_vec(labels), DataKind::Binary)
}

/// Split, class-balance, then standardize with the final training statistics.
pub fn load_real_csv(path: impl AsRef<Path>, opts: &RealCsvOptions) -> Result<(Dataset, Dataset)> {
    let all = read_diagnostic_csv(path, opts.has_header)?;
    if all.len() != 569 {
        log::warn!("diagnostic CSV has {} rows, the reference file has 569", all.len());
    }
    let (train, test) = split(&all, opts.train_fraction, opts.seed)?;
    let train = balance(&train, Some(opts.balanced_train), opts.seed)?;
    let scaler = Standardizer::fit(&train);
    Ok((scaler.apply(&train), scaler.apply(&test)))
}

/// Disjoint equal-size index sets, one per agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub agent_slices: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_agents(&self) -> usize {
        self.agent_slices.len()
    }

    pub fn local_n(&self) -> usize {
        self.agent_slices.first().map_or(0, Vec::len)
    }
}

/// Uniformly random equal split of `n` indices over `num_agents`.
pub fn partition(n: usize, num_agents: usize, seed: u64) -> Result<Partition> {
    if num_agents == 0 || n == 0 || !n.is_multiple_of(num_agents) {
        return Err(Error::Data(format!("{n} samples cannot be split evenly over {num_agents} agents")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut keyed_rng(seed, Purpose::Partition, 0, 0, 0));
    let per = n / num_agents;
    Ok(Partition { agent_slices: order.chunks(per).map(<[usize]>::to_vec).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn synth_linear_shapes_and_noise_free_residual() {
        let (data, truth) = synth_linear(100, 5, 0.1, 0.0, 3).unwrap();
        assert_eq!(data.features.shape(), (100, 6));
        assert!(data.features.column(5).iter().all(|&v| v == 1.0));
        assert!((&data.features * &truth - &data.targets).amax() == 0.0);
    }

    #[test]
    fn synth_linear_is_deterministic() {
        let (a, _) = synth_linear(20, 3, 0.1, 1.0, 8).unwrap();
        let (b, _) = synth_linear(20, 3, 0.1, 1.0, 8).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.targets, b.targets);
    }

    #[test]
    fn synth_logistic_reference_sizes() {
        // find a seed whose minority class reaches 190 of 420
        let (train, test) = (0..20)
            .find_map(|s| synth_logistic(600, 5, 0.1, 0.7, Some(380), s).ok())
            .unwrap();
        assert_eq!(train.len(), 380);
        assert_eq!(train.positives(), 190);
        assert_eq!(test.len(), 180);
    }

    #[test]
    fn balancing_without_target_uses_minority() {
        let (train, _) = synth_logistic(200, 3, 0.1, 0.7, None, 1).unwrap();
        assert_eq!(train.positives() * 2, train.len());
    }

    #[test]
    fn partition_covers_disjointly() {
        let p = partition(100, 20, 4).unwrap();
        assert_eq!(p.num_agents(), 20);
        assert!(p.agent_slices.iter().all(|s| s.len() == 5));
        let mut all: Vec<usize> = p.agent_slices.concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(partition(380, 20, 1).unwrap().local_n(), 19);
        assert_eq!(partition(7, 1, 1).unwrap().agent_slices[0].len(), 7);
        assert!(partition(101, 20, 1).is_err());
    }

    fn fake_csv(rows: usize) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for i in 0..rows {
            let diag = if i % 3 == 0 { "M" } else { "B" };
            let vals: Vec<String> = (0..REAL_FEATURES).map(|j| format!("{}", (i * 7 + j * 13) % 17 + i % 5)).collect();
            writeln!(f, "{},{},{}", 1000 + i, diag, vals.join(",")).unwrap();
        }
        f
    }

    #[test]
    fn real_csv_pipeline() {
        let f = fake_csv(569);
        let opts = RealCsvOptions { seed: 5, ..Default::default() };
        let (train, test) = load_real_csv(f.path(), &opts).unwrap();
        assert_eq!(train.len(), 30);
        assert_eq!(train.positives(), 15);
        assert_eq!(test.len(), 569 - 51);
        for j in 0..REAL_FEATURES {
            let col = train.features.column(j);
            let m = col.mean();
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 30.0;
            assert!(m.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-8);
        }
        let (again, _) = load_real_csv(f.path(), &opts).unwrap();
        assert_eq!(again.features, train.features);
    }

    #[test]
    fn real_csv_reports_bad_row() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1,B,{}", vec!["1.0"; REAL_FEATURES].join(",")).unwrap();
        writeln!(f, "2,M,{}", vec!["1.0"; REAL_FEATURES - 1].join(",")).unwrap();
        match read_diagnostic_csv(f.path(), false) {
            Err(Error::DataRow { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1,B,{},x", vec!["1.0"; REAL_FEATURES - 1].join(",")).unwrap();
        assert!(matches!(read_diagnostic_csv(f.path(), false), Err(Error::DataRow { row: 0, .. })));
    }

    #[test]
    fn standardization_is_idempotent() {
        let (data, _) = synth_linear(50, 4, 0.1, 1.0, 2).unwrap();
        let once = Standardizer::fit(&data).apply(&data);
        let twice = Standardizer::fit(&once).apply(&once);
        assert!((once.features - twice.features).amax() < 1e-12);
    }
}
