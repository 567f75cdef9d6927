//! Exact t-SNE with perplexity calibration and best-of-N restarts.
//!
//! Optimizer constants follow the reference implementation: early
//! exaggeration of 4 for the first 100 iterations, momentum 0.5 switching
//! to 0.8 at iteration 250, learning rate 100 and per-parameter adaptive
//! gains.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::MetaDataset;
use crate::rng::RngStream;
use crate::matrix::Matrix;

use super::{pairwise_distances, DistanceMatrix, Embedding2D, EmbeddingMethod};

/// Largest entropy error, in bits, of a converged row.
pub const ENTROPY_TOLERANCE: f64 = 1e-5;
/// The bisection itself runs to this tighter gap; at 1e-5 bits the
/// probabilities can still be off by about 2e-6.
const SEARCH_TOLERANCE: f64 = 1e-8;
pub const MAX_CALIBRATION_STEPS: usize = 200;
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub restarts: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iteration: usize,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    /// Standard deviation of the Gaussian initialization.
    pub init_std: f64,
    pub min_gain: f64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 5.0,
            restarts: 10,
            iterations: 1000,
            learning_rate: 100.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iteration: 250,
            exaggeration: 4.0,
            exaggeration_iterations: 100,
            init_std: 1e-4,
            min_gain: 0.01,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let max_perplexity = (n as f64 - 1.0) / 3.0;
        if !(self.perplexity >= 1.0 && self.perplexity <= max_perplexity) {
            return Err(Error::Invalid(format!(
                "perplexity {} must lie in [1, {max_perplexity:.3}] for {n} points",
                self.perplexity
            )));
        }
        if self.restarts == 0 {
            return Err(Error::Invalid("t-SNE needs at least one restart".into()));
        }
        if !(self.learning_rate > 0.0 && self.init_std > 0.0 && self.exaggeration > 0.0 && self.min_gain > 0.0) {
            return Err(Error::Invalid("t-SNE learning rate, init_std, exaggeration and min_gain must be > 0".into()));
        }
        Ok(())
    }
}

/// Result of calibrating one row of conditional probabilities.
#[derive(Clone, Debug)]
pub struct RowCalibration {
    pub beta: f64,
    pub probabilities: Vec<f64>,
    pub entropy_bits: f64,
    pub steps: usize,
    /// False when the target entropy is out of reach, as happens when at
    /// least `perplexity` neighbours coincide with the point.
    pub converged: bool,
}

fn conditional(sq: &[f64], beta: f64, min_sq: f64, out: &mut [f64]) -> f64 {
    let mut z = 0.0;
    let mut weighted = 0.0;
    for (p, &d) in out.iter_mut().zip(sq) {
        let shifted = d - min_sq;
        *p = (-beta * shifted).exp();
        z += *p;
        weighted += *p * shifted;
    }
    for p in out.iter_mut() {
        *p /= z;
    }
    // H (nats) = ln Z + beta E[d]
    (z.ln() + beta * weighted / z) / std::f64::consts::LN_2
}

/// Binary search on the precision `beta` of `p_j ∝ exp(-beta d_j^2)` for
/// the entropy `log2(perplexity)`. Brackets grow geometrically from
/// `beta = 1` until the target is enclosed. A row counts as converged when
/// its entropy ends within [`ENTROPY_TOLERANCE`] of the target.
pub fn calibrate_row(squared_distances: &[f64], perplexity: f64) -> Result<RowCalibration> {
    if !squared_distances.iter().any(|&d| d > 0.0) {
        return Err(Error::Invalid("all distances in the row are zero".into()));
    }
    if squared_distances.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::Invalid("squared distances must be finite and non-negative".into()));
    }
    let target = perplexity.log2();
    let min_sq = squared_distances.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut probabilities = vec![0.0; squared_distances.len()];
    let mut beta = 1.0;
    let (mut lo, mut hi): (Option<f64>, Option<f64>) = (None, None);
    for step in 0..MAX_CALIBRATION_STEPS {
        let entropy = conditional(squared_distances, beta, min_sq, &mut probabilities);
        let diff = entropy - target;
        if diff.abs() < SEARCH_TOLERANCE {
            return Ok(RowCalibration {
                beta,
                probabilities,
                entropy_bits: entropy,
                steps: step + 1,
                converged: true,
            });
        }
        if diff > 0.0 {
            lo = Some(beta);
            beta = match hi {
                Some(h) => 0.5 * (beta + h),
                None => beta * 2.0,
            };
        } else {
            hi = Some(beta);
            beta = match lo {
                Some(l) => 0.5 * (beta + l),
                None => beta / 2.0,
            };
        }
    }
    let entropy = conditional(squared_distances, beta, min_sq, &mut probabilities);
    Ok(RowCalibration {
        beta,
        probabilities,
        entropy_bits: entropy,
        steps: MAX_CALIBRATION_STEPS,
        converged: (entropy - target).abs() < ENTROPY_TOLERANCE,
    })
}

/// Symmetrized joint probabilities `p_ij = (p_j|i + p_i|j) / 2n`.
#[derive(Clone, Debug)]
pub struct JointProbabilities {
    n: usize,
    /// Row-major `n x n`, zero diagonal, off-diagonal entries floored at 1e-12.
    values: Vec<f64>,
    /// Sum of all entries before flooring.
    pub raw_sum: f64,
    pub rows: Vec<RowCalibration>,
}

impl JointProbabilities {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Builds from an explicit matrix, for tests and planted configurations.
    pub fn from_matrix(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Invalid("joint probability matrix has the wrong size".into()));
        }
        let raw_sum = values.iter().sum();
        Ok(JointProbabilities {
            n,
            values,
            raw_sum,
            rows: Vec::new(),
        })
    }
}

pub fn joint_probabilities(d: &DistanceMatrix, perplexity: f64) -> Result<JointProbabilities> {
    let n = d.n();
    let mut cond = vec![0.0; n * n];
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let sq: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d.get(i, j).powi(2)).collect();
        let cal = calibrate_row(&sq, perplexity)
            .map_err(|e| Error::Invalid(format!("row {i}: {e}")))?;
        if !cal.converged {
            log::warn!(
                "t-SNE calibration of row {i} stopped at entropy {:.6} bits (target {:.6})",
                cal.entropy_bits,
                perplexity.log2()
            );
        }
        let mut it = cal.probabilities.iter();
        for j in 0..n {
            if j != i {
                cond[i * n + j] = *it.next().expect("n-1 entries");
            }
        }
        rows.push(cal);
    }
    let mut values = vec![0.0; n * n];
    let mut raw_sum = 0.0;
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let p = (cond[i * n + j] + cond[j * n + i]) / denom;
            raw_sum += p;
            values[i * n + j] = p.max(PROBABILITY_FLOOR);
        }
    }
    Ok(JointProbabilities { n, values, raw_sum, rows })
}

/// Unnormalized Student-t kernel `1 / (1 + |y_i - y_j|^2)` (zero diagonal)
/// and its off-diagonal sum.
fn student_t(y: &[f64], n: usize, num: &mut [f64]) -> f64 {
    let mut z = 0.0;
    for i in 0..n {
        num[i * n + i] = 0.0;
        for j in i + 1..n {
            let dx = y[2 * i] - y[2 * j];
            let dy = y[2 * i + 1] - y[2 * j + 1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    z
}

/// Low-dimensional affinities `q_ij`, normalized to sum to one.
pub fn low_dim_affinities(y: &Matrix) -> Vec<f64> {
    let n = y.rows();
    let mut num = vec![0.0; n * n];
    let z = student_t(y.as_slice(), n, &mut num);
    num.iter_mut().for_each(|v| *v /= z);
    num
}

/// `KL(P || Q)` for coordinates `y` (`n x 2`).
pub fn kl_divergence(p: &JointProbabilities, y: &Matrix) -> f64 {
    let q = low_dim_affinities(y);
    kl_from_q(p, &q)
}

fn kl_from_q(p: &JointProbabilities, q: &[f64]) -> f64 {
    let n = p.n;
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p.values[i * n + j];
                kl += pij * (pij / q[i * n + j].max(f64::MIN_POSITIVE)).ln();
            }
        }
    }
    kl
}

/// `dC/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)`,
/// flattened as `[x_0, y_0, x_1, y_1, ...]`.
pub fn kl_gradient(p: &JointProbabilities, y: &Matrix) -> Vec<f64> {
    let n = y.rows();
    let mut num = vec![0.0; n * n];
    let mut grad = vec![0.0; 2 * n];
    let z = student_t(y.as_slice(), n, &mut num);
    gradient_into(p.values(), 1.0, y.as_slice(), n, &num, z, &mut grad);
    grad
}

fn gradient_into(p: &[f64], scale: f64, y: &[f64], n: usize, num: &[f64], z: f64, grad: &mut [f64]) {
    for i in 0..n {
        let (mut gx, mut gy) = (0.0, 0.0);
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = num[i * n + j];
            let m = (scale * p[i * n + j] - w / z) * w;
            gx += m * (y[2 * i] - y[2 * j]);
            gy += m * (y[2 * i + 1] - y[2 * j + 1]);
        }
        grad[2 * i] = 4.0 * gx;
        grad[2 * i + 1] = 4.0 * gy;
    }
}

#[derive(Clone, Debug)]
pub struct TsneRun {
    pub coords: Matrix,
    /// KL divergence at the end, against the un-exaggerated P.
    pub kl: f64,
    /// KL divergence of the initialization.
    pub initial_kl: f64,
    pub seed: u64,
}

pub fn tsne_run(p: &JointProbabilities, config: &TsneConfig, rng: &RngStream) -> Result<TsneRun> {
    let n = p.n();
    let mut gen = rng.rng();
    let mut y: Vec<f64> = (0..2 * n)
        .map(|_| gen.sample::<f64, _>(StandardNormal) * config.init_std)
        .collect();
    let mut num = vec![0.0; n * n];
    let mut grad = vec![0.0; 2 * n];
    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0; 2 * n];

    let initial_kl = kl_divergence(p, &Matrix::new(n, 2, y.clone())?);
    if !initial_kl.is_finite() {
        return Err(Error::Numerical("initial KL divergence is not finite".into()));
    }
    for iter in 0..config.iterations {
        let exaggeration = if iter < config.exaggeration_iterations { config.exaggeration } else { 1.0 };
        let momentum = if iter < config.momentum_switch_iteration {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        let z = student_t(&y, n, &mut num);
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::Numerical(format!("Student-t normalizer degenerate at iteration {iter}")));
        }
        gradient_into(p.values(), exaggeration, &y, n, &num, z, &mut grad);
        for k in 0..2 * n {
            let g = grad[k];
            if !g.is_finite() {
                return Err(Error::Numerical(format!("non-finite gradient at iteration {iter}")));
            }
            let gain: f64 = if (g > 0.0) != (update[k] > 0.0) { gains[k] + 0.2 } else { gains[k] * 0.8 };
            gains[k] = gain.max(config.min_gain);
            update[k] = momentum * update[k] - config.learning_rate * gains[k] * g;
            y[k] += update[k];
        }
        for axis in 0..2 {
            let mean = (0..n).map(|i| y[2 * i + axis]).sum::<f64>() / n as f64;
            (0..n).for_each(|i| y[2 * i + axis] -= mean);
        }
    }
    let coords = Matrix::new(n, 2, y)?;
    let kl = kl_divergence(p, &coords);
    if !kl.is_finite() {
        return Err(Error::Numerical("final KL divergence is not finite".into()));
    }
    Ok(TsneRun {
        coords,
        kl,
        initial_kl,
        seed: rng.seed(),
    })
}

/// All restarts, each on its own stream `("restart", r)` below `rng`.
pub fn tsne_restarts(p: &JointProbabilities, config: &TsneConfig, rng: &RngStream) -> Vec<Result<TsneRun>> {
    (0..config.restarts)
        .into_par_iter()
        .map(|r| tsne_run(p, config, &rng.derive("restart", r as u64)))
        .collect()
}

/// Index of the run with the lowest KL (lowest index on ties), skipping
/// failed runs.
pub fn select_best(runs: &[Result<TsneRun>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in runs.iter().enumerate() {
        if let Ok(run) = r {
            match best {
                Some(b) if runs[b].as_ref().map(|x| x.kl).unwrap_or(f64::INFINITY) <= run.kl => {}
                _ => best = Some(i),
            }
        }
    }
    best
}

pub fn tsne_best(meta: &MetaDataset, config: &TsneConfig, rng: &RngStream) -> Result<Embedding2D> {
    let n = meta.n();
    if n < 4 {
        return Err(Error::Invalid(format!("t-SNE needs at least 4 points, got {n}")));
    }
    config.validate(n)?;
    let p = joint_probabilities(&pairwise_distances(&meta.rows)?, config.perplexity)?;
    let mut runs = tsne_restarts(&p, config, rng);
    for (r, res) in runs.iter().enumerate() {
        if let Err(e) = res {
            log::warn!("t-SNE restart {r} aborted: {e}");
        }
    }
    let best = select_best(&runs).ok_or_else(|| Error::Numerical("every t-SNE restart aborted".into()))?;
    let run = runs.swap_remove(best)?;
    Ok(Embedding2D {
        method: EmbeddingMethod::Tsne,
        source_variant: meta.variant,
        coords: run.coords,
        instance_ids: meta.instance_ids.clone(),
        labels: meta.meta_labels.clone(),
        seed: Some(run.seed),
        error: Some(run.kl),
    })
}
