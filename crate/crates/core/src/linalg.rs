//! Dense symmetric eigen-decomposition helpers.
//!
//! The decompositions run through faer, single-threaded so results do not
//! depend on the size of the thread pool.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
pub struct SortedEigen {
    pub values: DVector<f64>,
    /// Eigenvectors as columns, aligned with `values`.
    pub vectors: DMatrix<f64>,
}

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn eigen(m: &DMatrix<f64>) -> (Vec<f64>, Mat<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), Mat::zeros(0, 0));
    }
    let evd = to_faer(m)
        .self_adjoint_eigen(Side::Lower)
        .expect("symmetric eigensolver failed to converge");
    let s = evd.S();
    let values = (0..n).map(|i| s[i]).collect();
    (values, evd.U().to_owned())
}

pub fn sorted_eigen(m: &DMatrix<f64>) -> SortedEigen {
    let (vals, vecs) = eigen(m);
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| vals[i]));
    let vectors = DMatrix::from_fn(n, n, |i, j| vecs[(i, order[j])]);
    SortedEigen { values, vectors }
}

/// Nearest positive semidefinite matrix in Frobenius norm (negative
/// eigenvalues set to zero).
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let (vals, vecs) = eigen(m);
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > 0.0).collect();
    if keep.is_empty() {
        return DMatrix::zeros(n, n);
    }
    let f = Mat::<f64>::from_fn(n, keep.len(), |i, c| vecs[(i, keep[c])] * vals[keep[c]].sqrt());
    let out = &f * f.transpose();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (out[(i, j)] + out[(j, i)]))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigen(m).0.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigen(m).0.into_iter().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_projection_clips_negative_part() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        // eigenvalues 3 and -1; projection keeps 3 (1,1)/2
        let p = project_psd(&m);
        let want = DMatrix::from_element(2, 2, 1.5);
        assert!((p - want).amax() < 1e-12);
        let e = sorted_eigen(&m);
        assert!((e.values[0] + 1.0).abs() < 1e-12 && (e.values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_matches_input() {
        let m = DMatrix::from_fn(7, 7, |i, j| ((i * 3 + j * 3) % 5) as f64 - 2.0 + if i == j { 0.5 } else { 0.0 });
        let e = sorted_eigen(&m);
        let back = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
        assert!((back - &m).amax() < 1e-10);
        assert!(e.values.as_slice().windows(2).all(|w| w[0] <= w[1]));
        let nal = nalgebra::SymmetricEigen::new(m.clone()).eigenvalues;
        assert!((max_eigenvalue(&m) - nal.max()).abs() < 1e-10);
        assert!((min_eigenvalue(&m) - nal.min()).abs() < 1e-10);
    }
}
