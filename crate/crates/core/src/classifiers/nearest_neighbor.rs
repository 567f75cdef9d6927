use nalgebra::DMatrix;

use crate::matrix::{dot, squared_distance, Matrix};

use super::CompactLabels;

/// Exact 1-nearest-neighbour by linear scan over the stored training set.
#[derive(Clone, Debug)]
pub struct NearestNeighborModel {
    train: Matrix,
    labels: Vec<usize>,
}

/// Index of the nearest row of `train` to `query`; lowest index on ties.
pub(crate) fn nearest_index(train: &Matrix, query: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, row) in train.iter_rows().enumerate() {
        let d = squared_distance(row, query);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Query rows per screening block.
const BLOCK: usize = 256;

/// Same result as calling [`nearest_index`] on every query row.
///
/// Squared distances are first approximated as `|t|^2 + |q|^2 - 2 t.q` with
/// one matrix product per block of queries. Every training row whose
/// approximation is within the rounding bound of the best one is then
/// re-scored with the exact kernel, scanning in index order.
pub(crate) fn nearest_indices(train: &Matrix, queries: &Matrix) -> Vec<usize> {
    let (m, d) = (train.rows(), train.cols());
    if m * queries.rows() < 1 << 14 {
        return queries.iter_rows().map(|q| nearest_index(train, q)).collect();
    }
    let t = DMatrix::from_row_slice(m, d, train.as_slice());
    let train_norms: Vec<f64> = train.iter_rows().map(|r| dot(r, r)).collect();
    // Covers the product's rounding and the exact kernel's, with margin.
    let rel = 8.0 * (d as f64 + 2.0) * f64::EPSILON;
    let mut out = Vec::with_capacity(queries.rows());
    let mut candidates = Vec::new();
    for start in (0..queries.rows()).step_by(BLOCK) {
        let b = BLOCK.min(queries.rows() - start);
        let qt = DMatrix::from_column_slice(d, b, &queries.as_slice()[start * d..(start + b) * d]);
        let cross = &t * &qt;
        for col in 0..b {
            let q = queries.row(start + col);
            let qn = dot(q, q);
            let cross_col = cross.column(col);
            let mut upper = f64::INFINITY;
            for j in 0..m {
                let approx = train_norms[j] + qn - 2.0 * cross_col[j];
                upper = upper.min(approx + rel * (train_norms[j] + qn));
            }
            candidates.clear();
            candidates.extend((0..m).filter(|&j| {
                let approx = train_norms[j] + qn - 2.0 * cross_col[j];
                approx - rel * (train_norms[j] + qn) <= upper
            }));
            let mut best = candidates[0];
            let mut best_d = squared_distance(train.row(best), q);
            for &j in &candidates[1..] {
                let dj = squared_distance(train.row(j), q);
                if dj < best_d {
                    best_d = dj;
                    best = j;
                }
            }
            out.push(best);
        }
    }
    out
}

impl NearestNeighborModel {
    pub(crate) fn fit(features: &Matrix, labels: &CompactLabels) -> Self {
        NearestNeighborModel {
            train: features.clone(),
            labels: labels.labels.clone(),
        }
    }

    pub(crate) fn predict(&self, features: &Matrix) -> Vec<usize> {
        nearest_indices(&self.train, features)
            .into_iter()
            .map(|i| self.labels[i])
            .collect()
    }
}
