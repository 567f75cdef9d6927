//! Gaussian discriminants with uniform class priors.
//!
//! Covariances are shrunk toward a scaled identity,
//! `(1 - λ) Σ + λ (tr Σ / d) I`, which keeps them positive definite even
//! when there are fewer samples than dimensions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::{argmax, CompactLabels};

/// Lower Cholesky factor stored row-major, with half its log-determinant.
#[derive(Clone, Debug)]
struct CholeskyFactor {
    d: usize,
    lower: Vec<f64>,
    half_log_det: f64,
}

impl CholeskyFactor {
    fn new(cov: &[f64], d: usize) -> Result<Self> {
        let m = DMatrix::from_row_slice(d, d, cov);
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Numerical("regularized covariance is not positive definite".into()))?;
        let l = chol.l();
        let mut lower = vec![0.0; d * d];
        let mut half_log_det = 0.0;
        for i in 0..d {
            for j in 0..=i {
                lower[i * d + j] = l[(i, j)];
            }
            half_log_det += l[(i, i)].ln();
        }
        Ok(CholeskyFactor { d, lower, half_log_det })
    }

    /// Solves `L z = v` in place.
    fn whiten(&self, v: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i];
            let s: f64 = row.iter().zip(&v[..i]).map(|(a, b)| a * b).sum();
            v[i] = (v[i] - s) / self.lower[i * d + i];
        }
    }
}

#[derive(Clone, Debug)]
enum Shape {
    /// One covariance for all classes; means stored pre-whitened.
    Shared {
        factor: CholeskyFactor,
        whitened_means: Vec<Vec<f64>>,
    },
    /// One covariance per class.
    PerClass { factors: Vec<CholeskyFactor> },
}

#[derive(Clone, Debug)]
pub struct GaussianModel {
    means: Vec<Vec<f64>>,
    shape: Shape,
}

fn class_means(features: &Matrix, labels: &CompactLabels) -> (Vec<Vec<f64>>, Vec<usize>) {
    let d = features.cols();
    let c = labels.n_classes();
    let mut means = vec![vec![0.0; d]; c];
    let mut counts = vec![0usize; c];
    for (row, &k) in features.iter_rows().zip(&labels.labels) {
        counts[k] += 1;
        means[k].iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    for (m, &n) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= n as f64);
    }
    (means, counts)
}

/// Maximum-likelihood scatter (divide by count) of the rows of class `k`
/// around `mean`, or of all rows around their class means when `k` is None.
fn scatter(features: &Matrix, labels: &CompactLabels, means: &[Vec<f64>], k: Option<usize>) -> (Vec<f64>, usize) {
    let d = features.cols();
    let mut s = vec![0.0; d * d];
    let mut n = 0usize;
    let mut centered = vec![0.0; d];
    for (row, &lab) in features.iter_rows().zip(&labels.labels) {
        if k.is_some_and(|k| k != lab) {
            continue;
        }
        n += 1;
        centered.iter_mut().zip(row.iter().zip(&means[lab])).for_each(|(c, (x, m))| *c = x - m);
        for i in 0..d {
            let ci = centered[i];
            let dst = &mut s[i * d..i * d + i + 1];
            dst.iter_mut().zip(&centered[..=i]).for_each(|(v, cj)| *v += ci * cj);
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = s[i * d + j] / n as f64;
            s[i * d + j] = v;
            s[j * d + i] = v;
        }
    }
    (s, n)
}

/// Shrink toward `(tr / d) I`. A zero-trace estimate (one sample, or
/// identical samples) borrows the isotropic scale `fallback_scale`.
pub(crate) fn shrink(cov: &mut [f64], d: usize, shrinkage: f64, fallback_scale: f64) {
    let tr: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let mut scale = tr / d as f64;
    if scale <= 1e-300 {
        scale = if fallback_scale > 1e-300 { fallback_scale } else { 1.0 };
    }
    let shrinkage = if tr / d as f64 <= 1e-300 { 1.0 } else { shrinkage };
    cov.iter_mut().for_each(|v| *v *= 1.0 - shrinkage);
    for i in 0..d {
        cov[i * d + i] += shrinkage * scale;
    }
}

fn pooled_covariance(features: &Matrix, labels: &CompactLabels, means: &[Vec<f64>], shrinkage: f64) -> Vec<f64> {
    let d = features.cols();
    let (mut cov, _) = scatter(features, labels, means, None);
    let fallback = total_variance(features);
    shrink(&mut cov, d, shrinkage, fallback);
    cov
}

/// Mean per-feature variance of all rows, used when within-class scatter is zero.
fn total_variance(features: &Matrix) -> f64 {
    let (n, d) = (features.rows(), features.cols());
    let mut total = 0.0;
    for j in 0..d {
        let mean = (0..n).map(|i| features.get(i, j)).sum::<f64>() / n as f64;
        total += (0..n).map(|i| (features.get(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
    }
    total / d as f64
}

impl GaussianModel {
    pub(crate) fn fit_linear(features: &Matrix, labels: &CompactLabels, shrinkage: f64) -> Result<Self> {
        let (means, _) = class_means(features, labels);
        let cov = pooled_covariance(features, labels, &means, shrinkage);
        let factor = CholeskyFactor::new(&cov, features.cols())?;
        let whitened_means = means
            .iter()
            .map(|m| {
                let mut w = m.clone();
                factor.whiten(&mut w);
                w
            })
            .collect();
        Ok(GaussianModel {
            means,
            shape: Shape::Shared { factor, whitened_means },
        })
    }

    pub(crate) fn fit_quadratic(features: &Matrix, labels: &CompactLabels, shrinkage: f64) -> Result<Self> {
        let d = features.cols();
        let (means, _) = class_means(features, labels);
        let fallback = total_variance(features);
        let factors = (0..labels.n_classes())
            .map(|k| {
                let (mut cov, _) = scatter(features, labels, &means, Some(k));
                shrink(&mut cov, d, shrinkage, fallback);
                CholeskyFactor::new(&cov, d)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GaussianModel {
            means,
            shape: Shape::PerClass { factors },
        })
    }

    /// Quadratic-form model whose every class uses the pooled covariance.
    /// Mathematically identical to the linear discriminant.
    #[cfg(test)]
    pub(crate) fn fit_quadratic_pooled(features: &Matrix, labels: &CompactLabels, shrinkage: f64) -> Result<Self> {
        let (means, _) = class_means(features, labels);
        let cov = pooled_covariance(features, labels, &means, shrinkage);
        let factor = CholeskyFactor::new(&cov, features.cols())?;
        Ok(GaussianModel {
            means,
            shape: Shape::PerClass {
                factors: vec![factor; labels.n_classes()],
            },
        })
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn is_shared(&self) -> bool {
        matches!(self.shape, Shape::Shared { .. })
    }

    /// Per-class log-likelihood up to a class-independent constant.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        match &self.shape {
            Shape::Shared { factor, whitened_means } => {
                let mut z = x.to_vec();
                factor.whiten(&mut z);
                whitened_means
                    .iter()
                    .map(|m| -0.5 * crate::matrix::squared_distance(&z, m))
                    .collect()
            }
            Shape::PerClass { factors } => {
                let mut z = vec![0.0; x.len()];
                factors
                    .iter()
                    .zip(&self.means)
                    .map(|(f, m)| {
                        z.iter_mut().zip(x.iter().zip(m)).for_each(|(z, (a, b))| *z = a - b);
                        f.whiten(&mut z);
                        -f.half_log_det - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
                    })
                    .collect()
            }
        }
    }

    pub(crate) fn predict(&self, features: &Matrix) -> Vec<usize> {
        features.iter_rows().map(|x| argmax(&self.scores(x))).collect()
    }
}
