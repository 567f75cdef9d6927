use crate::matrix::{squared_distance, Matrix};

use super::CompactLabels;

/// Assigns each query to the class with the closest centroid.
#[derive(Clone, Debug)]
pub struct NearestMeanModel {
    centroids: Vec<Vec<f64>>,
}

impl NearestMeanModel {
    pub(crate) fn fit(features: &Matrix, labels: &CompactLabels) -> Self {
        let d = features.cols();
        let mut sums = vec![vec![0.0; d]; labels.n_classes()];
        let mut counts = vec![0usize; labels.n_classes()];
        for (row, &k) in features.iter_rows().zip(&labels.labels) {
            counts[k] += 1;
            sums[k].iter_mut().zip(row).for_each(|(s, v)| *s += v);
        }
        for (s, &n) in sums.iter_mut().zip(&counts) {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
        NearestMeanModel { centroids: sums }
    }

    /// One centroid per seen class, in compact class order.
    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub(crate) fn predict(&self, features: &Matrix) -> Vec<usize> {
        features
            .iter_rows()
            .map(|x| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (k, c) in self.centroids.iter().enumerate() {
                    let d = squared_distance(x, c);
                    if d < best_d {
                        best_d = d;
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}
