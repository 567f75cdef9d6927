//! Classical (Torgerson) multidimensional scaling.
//!
//! `B = -1/2 J D^2 J` with `J = I - 11^T / n`; the coordinates are the two
//! leading eigenvectors of `B` scaled by the square roots of their
//! eigenvalues.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::DistanceMatrix;

/// Eigenvalues at or below this fraction of the largest one are treated as
/// zero: they come from rounding, not from the configuration.
const RELATIVE_EIGEN_FLOOR: f64 = 1e-10;

/// Double-centered squared distances.
pub fn gram_matrix(d: &DistanceMatrix) -> DMatrix<f64> {
    let n = d.n();
    let mut b = DMatrix::from_fn(n, n, |i, j| d.get(i, j).powi(2));
    let row_means: Vec<f64> = (0..n).map(|i| b.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = -0.5 * (b[(i, j)] - row_means[i] - row_means[j] + grand);
        }
    }
    b
}

/// `n x 2` coordinates. Columns with a non-positive eigenvalue are zero,
/// and each column is signed so that its largest-magnitude entry (first
/// one on ties) is positive.
pub fn mds_embed(d: &DistanceMatrix) -> Result<Matrix> {
    let n = d.n();
    if n < 3 {
        return Err(Error::Invalid(format!("classical MDS needs at least 3 points, got {n}")));
    }
    let eig = SymmetricEigen::new(gram_matrix(d));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut coords = Matrix::zeros(n, 2);
    for (col, &k) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[k];
        if !(lambda > RELATIVE_EIGEN_FLOOR * top) {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for i in 1..n {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let s = lambda.sqrt() * sign;
        for i in 0..n {
            coords.set(i, col, v[i] * s);
        }
    }
    if !coords.is_finite() {
        return Err(Error::Numerical("MDS produced non-finite coordinates".into()));
    }
    Ok(coords)
}
