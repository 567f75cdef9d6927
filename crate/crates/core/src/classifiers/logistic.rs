//! Multinomial logistic regression by full-batch gradient descent.
//!
//! Features are standardized inside the fit. The objective is mean softmax
//! cross-entropy plus `l2 / 2 * ||W||^2` over the non-bias weights. A step
//! that would raise the objective is rejected and the step size halved, so
//! the recorded loss sequence never increases.

use nalgebra::DMatrix;

use crate::matrix::{dot, Matrix};

use super::{argmax, CompactLabels};

#[derive(Clone, Debug)]
pub struct LogisticModel {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// Row-major `C x (d + 1)`; the last column is the bias.
    weights: Vec<f64>,
    n_classes: usize,
}

struct Standardized {
    /// `n x (d + 1)` standardized rows with a trailing column of ones.
    aug: DMatrix<f64>,
    aug_t: DMatrix<f64>,
    d: usize,
}

fn standardize(features: &Matrix) -> (Standardized, Vec<f64>, Vec<f64>) {
    let (n, d) = (features.rows(), features.cols());
    let mut mean = vec![0.0; d];
    for row in features.iter_rows() {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in features.iter_rows() {
        var.iter_mut()
            .zip(row.iter().zip(&mean))
            .for_each(|(s, (v, m))| *s += (v - m) * (v - m));
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|s| {
            let sd = (s / n as f64).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let aug = DMatrix::from_fn(n, d + 1, |i, j| {
        if j == d {
            1.0
        } else {
            (features.get(i, j) - mean[j]) / scale[j]
        }
    });
    let aug_t = aug.transpose();
    (Standardized { aug, aug_t, d }, mean, scale)
}

/// Objective and gradient at `w`.
fn objective(x: &Standardized, labels: &[usize], c: usize, w: &[f64], l2: f64, grad: &mut [f64]) -> f64 {
    let d = x.d;
    let stride = d + 1;
    let n = labels.len();
    // Row-major C x (d + 1) is column-major (d + 1) x C.
    let wt = DMatrix::from_column_slice(stride, c, w);
    let mut resid = &x.aug * &wt;
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let mut mx = f64::NEG_INFINITY;
        for k in 0..c {
            mx = mx.max(resid[(i, k)]);
        }
        let z: f64 = (0..c).map(|k| (resid[(i, k)] - mx).exp()).sum();
        let lse = mx + z.ln();
        loss += lse - resid[(i, y)];
        for k in 0..c {
            resid[(i, k)] = (resid[(i, k)] - lse).exp() - if k == y { 1.0 } else { 0.0 };
        }
    }
    let g = &x.aug_t * &resid;
    grad.copy_from_slice(g.as_slice());
    let inv = 1.0 / n as f64;
    let mut penalty = 0.0;
    for k in 0..c {
        for j in 0..stride {
            let idx = k * stride + j;
            grad[idx] *= inv;
            if j < d {
                grad[idx] += l2 * w[idx];
                penalty += w[idx] * w[idx];
            }
        }
    }
    loss * inv + 0.5 * l2 * penalty
}

/// Objective values of a fit on `labels`, starting from the all-zero
/// initialization and recorded after every accepted step.
pub fn loss_trace(features: &Matrix, labels: &[usize], l2: f64, iterations: usize, step_size: f64) -> Vec<f64> {
    fit_with_trace(features, &CompactLabels::new(labels), l2, iterations, step_size).1
}

pub(crate) fn fit_with_trace(
    features: &Matrix,
    labels: &CompactLabels,
    l2: f64,
    iterations: usize,
    step_size: f64,
) -> (LogisticModel, Vec<f64>) {
    let c = labels.n_classes();
    let (x, mean, scale) = standardize(features);
    let size = c * (x.d + 1);
    let mut w = vec![0.0; size];
    let mut grad = vec![0.0; size];
    let mut cand = vec![0.0; size];
    let mut cand_grad = vec![0.0; size];
    let mut loss = objective(&x, &labels.labels, c, &w, l2, &mut grad);
    let mut trace = vec![loss];
    let mut step = step_size;
    for _ in 0..iterations {
        cand.iter_mut()
            .zip(w.iter().zip(&grad))
            .for_each(|(c, (w, g))| *c = w - step * g);
        let cand_loss = objective(&x, &labels.labels, c, &cand, l2, &mut cand_grad);
        if cand_loss <= loss {
            std::mem::swap(&mut w, &mut cand);
            std::mem::swap(&mut grad, &mut cand_grad);
            loss = cand_loss;
            trace.push(loss);
        } else {
            step *= 0.5;
        }
    }
    (
        LogisticModel {
            mean,
            scale,
            weights: w,
            n_classes: c,
        },
        trace,
    )
}

impl LogisticModel {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Weights in standardized feature space, row-major `C x (d + 1)`,
    /// bias last.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn standardization(&self) -> (&[f64], &[f64]) {
        (&self.mean, &self.scale)
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        let z: Vec<f64> = x
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        (0..self.n_classes)
            .map(|k| {
                let wk = &self.weights[k * (d + 1)..(k + 1) * (d + 1)];
                wk[d] + dot(&wk[..d], &z)
            })
            .collect()
    }

    pub(crate) fn predict(&self, features: &Matrix) -> Vec<usize> {
        features.iter_rows().map(|x| argmax(&self.scores(x))).collect()
    }
}
