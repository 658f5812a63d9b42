//! Small dense helpers built on symmetric eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Largest absolute asymmetry `max |m_ij - m_ji|`.
pub fn symmetry_deviation(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenpairs of the symmetric part of `m`, eigenvalues clamped at zero.
pub fn psd_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let values = eig.eigenvalues.map(|v| v.max(0.0));
    (values, eig.eigenvectors)
}

/// Projects a symmetric matrix onto the PSD cone by clamping eigenvalues.
pub fn clamp_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return m.clone();
    }
    let (values, vectors) = psd_eigen(m);
    reconstruct(&values, &vectors)
}

/// Principal square root of a symmetric PSD matrix.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = psd_eigen(m);
    reconstruct(&values.map(f64::sqrt), &vectors)
}

/// `Tr(M^{1/2})` for symmetric PSD `M`.
pub fn trace_sqrt(m: &DMatrix<f64>) -> f64 {
    psd_eigen(m).0.iter().map(|v| v.sqrt()).sum()
}

/// Largest singular value, via the eigenvalues of `MᵀM`.
pub fn max_singular_value(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    let (values, _) = psd_eigen(&gram);
    values.max().sqrt()
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(symmetrize(m));
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

fn reconstruct(values: &DVector<f64>, vectors: &DMatrix<f64>) -> DMatrix<f64> {
    let scaled = vectors * DMatrix::from_diagonal(values);
    symmetrize(&(scaled * vectors.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0, 0.0]));
        let r = psd_sqrt(&m);
        assert!((r[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((r[(1, 1)] - 3.0).abs() < 1e-14);
        assert!(r[(2, 2)].abs() < 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
        let r = psd_sqrt(&a);
        assert!((&r * &r - &a).amax() < 1e-12);
    }

    #[test]
    fn clamp_removes_negative_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let c = clamp_psd(&m);
        let (lo, _) = eigen_range(&c);
        assert!(lo > -1e-12);
        // eigenvalues 3 and -1 -> 3 and 0
        assert!((c.trace() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn singular_value_of_rotation_scaled() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        assert!((max_singular_value(&m) - 2.0).abs() < 1e-12);
    }
}
