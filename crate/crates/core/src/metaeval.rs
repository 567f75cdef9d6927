//! 1-NN meta-classification, learning curves and confusion matrices.

use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;

use crate::classifiers::nearest_neighbor::nearest_index;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngStream;
use crate::tabular::fmt_real;

pub const DEFAULT_META_SIZES: [usize; 5] = [5, 10, 20, 40, 60];
pub const DEFAULT_META_REPEATS: usize = 5;
pub const SIMILARITY_EPSILON: f64 = 1e-12;

/// Labels of the nearest training point for every query row. Distance
/// ties go to the lowest training index.
pub fn nn1_meta<T: Clone>(train: &Matrix, train_labels: &[T], queries: &Matrix) -> Result<Vec<T>> {
    if train.rows() == 0 {
        return Err(Error::Invalid("1-NN needs at least one training point".into()));
    }
    if train_labels.len() != train.rows() {
        return Err(Error::Invalid(format!(
            "{} labels for {} training points",
            train_labels.len(),
            train.rows()
        )));
    }
    if queries.cols() != train.cols() {
        return Err(Error::Invalid(format!(
            "query dimension {} does not match training dimension {}",
            queries.cols(),
            train.cols()
        )));
    }
    Ok(queries
        .iter_rows()
        .map(|q| train_labels[nearest_index(train, q)].clone())
        .collect())
}

/// `1 / (1e-12 + |x - y|)`.
pub fn inverse_similarity(x: &[f64], y: &[f64]) -> f64 {
    let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    1.0 / (SIMILARITY_EPSILON + d)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaSampleSplit {
    pub size: usize,
    pub repeat_index: usize,
    /// Ascending.
    pub train_indices: Vec<usize>,
    /// Ascending complement of `train_indices`.
    pub test_indices: Vec<usize>,
}

/// Uniform random subset of `size` points out of `n`, not stratified.
pub fn meta_split(n: usize, size: usize, repeat_index: usize, rng: &RngStream) -> Result<MetaSampleSplit> {
    if size == 0 || size >= n {
        return Err(Error::Invalid(format!(
            "meta training size {size} must lie in [1, {}] for {n} points",
            n.saturating_sub(1)
        )));
    }
    let mut train_indices = index::sample(&mut rng.rng(), n, size).into_vec();
    train_indices.sort_unstable();
    let mut in_train = vec![false; n];
    train_indices.iter().for_each(|&i| in_train[i] = true);
    let test_indices = (0..n).filter(|&i| !in_train[i]).collect();
    Ok(MetaSampleSplit {
        size,
        repeat_index,
        train_indices,
        test_indices,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitEvaluation {
    pub split: MetaSampleSplit,
    /// Predicted label index for each entry of `split.test_indices`.
    pub predictions: Vec<usize>,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearningCurve {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    /// `evaluations[size_index][repeat]`.
    pub evaluations: Vec<Vec<SplitEvaluation>>,
}

impl LearningCurve {
    /// `accuracies()[size_index][repeat]`.
    pub fn accuracies(&self) -> Vec<Vec<f64>> {
        self.evaluations
            .iter()
            .map(|row| row.iter().map(|e| e.accuracy).collect())
            .collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.accuracies()
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect()
    }

    pub fn mean_at(&self, size: usize) -> Option<f64> {
        let i = self.sizes.iter().position(|&s| s == size)?;
        Some(self.means()[i])
    }

    /// True and predicted label indices pooled over all repeats at `size`.
    pub fn pooled_predictions(&self, labels: &[usize], size: usize) -> Option<(Vec<usize>, Vec<usize>)> {
        let i = self.sizes.iter().position(|&s| s == size)?;
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for e in &self.evaluations[i] {
            truth.extend(e.split.test_indices.iter().map(|&j| labels[j]));
            pred.extend_from_slice(&e.predictions);
        }
        Some((truth, pred))
    }
}

/// 1-NN accuracy on the complement of random training subsets.
///
/// The split for (size index `s`, repeat `r`) uses the stream
/// `("meta-split", s) / ("repeat", r)` below `rng`, so curves computed on
/// different representations of the same meta-samples share their splits.
pub fn learning_curve(
    points: &Matrix,
    labels: &[usize],
    sizes: &[usize],
    repeats: usize,
    rng: &RngStream,
) -> Result<LearningCurve> {
    let n = points.rows();
    if labels.len() != n {
        return Err(Error::Invalid(format!("{} labels for {n} points", labels.len())));
    }
    if repeats == 0 || sizes.is_empty() {
        return Err(Error::Invalid("learning curve needs at least one size and one repeat".into()));
    }
    if let Some(&bad) = sizes.iter().find(|&&s| s >= n || s == 0) {
        return Err(Error::Invalid(format!("meta training size {bad} must lie in [1, {}]", n.saturating_sub(1))));
    }
    let jobs: Vec<(usize, usize)> = (0..sizes.len()).flat_map(|s| (0..repeats).map(move |r| (s, r))).collect();
    let results: Vec<Result<SplitEvaluation>> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let stream = rng.derive("meta-split", s as u64).derive("repeat", r as u64);
            let split = meta_split(n, sizes[s], r, &stream)?;
            let train = points.select_rows(&split.train_indices);
            let train_labels: Vec<usize> = split.train_indices.iter().map(|&i| labels[i]).collect();
            let test = points.select_rows(&split.test_indices);
            let predictions = nn1_meta(&train, &train_labels, &test)?;
            let correct = split
                .test_indices
                .iter()
                .zip(&predictions)
                .filter(|(&i, &p)| labels[i] == p)
                .count();
            let accuracy = correct as f64 / split.test_indices.len() as f64;
            Ok(SplitEvaluation {
                split,
                predictions,
                accuracy,
            })
        })
        .collect();
    let mut evaluations: Vec<Vec<SplitEvaluation>> = vec![Vec::with_capacity(repeats); sizes.len()];
    for ((s, _), res) in jobs.into_iter().zip(results) {
        evaluations[s].push(res?);
    }
    Ok(LearningCurve {
        sizes: sizes.to_vec(),
        repeats,
        evaluations,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    /// Row-normalized percentages; rows without support are all zero.
    pub percentages: Vec<Vec<f64>>,
    pub support: Vec<usize>,
}

impl ConfusionMatrix {
    /// Rows whose true class never occurs.
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.support.len()).filter(|&r| self.support[r] == 0).collect()
    }

    pub fn get(&self, true_class: &str, predicted: &str) -> Option<f64> {
        let r = self.class_names.iter().position(|c| c == true_class)?;
        let c = self.class_names.iter().position(|c| c == predicted)?;
        Some(self.percentages[r][c])
    }
}

pub fn confusion(true_labels: &[usize], predicted: &[usize], class_names: &[String]) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted.len() {
        return Err(Error::Invalid(format!(
            "{} true labels but {} predictions",
            true_labels.len(),
            predicted.len()
        )));
    }
    let c = class_names.len();
    let mut counts = vec![vec![0usize; c]; c];
    for (&t, &p) in true_labels.iter().zip(predicted) {
        if t >= c || p >= c {
            return Err(Error::Invalid(format!("label index {} out of range for {c} classes", t.max(p))));
        }
        counts[t][p] += 1;
    }
    let support: Vec<usize> = counts.iter().map(|row| row.iter().sum()).collect();
    let percentages = counts
        .iter()
        .zip(&support)
        .map(|(row, &s)| {
            row.iter()
                .map(|&k| if s == 0 { 0.0 } else { 100.0 * k as f64 / s as f64 })
                .collect()
        })
        .collect();
    Ok(ConfusionMatrix {
        class_names: class_names.to_vec(),
        counts,
        percentages,
        support,
    })
}

/// One learning-curve row per (size, repeat).
#[derive(Clone, Debug)]
pub struct CurveRecord<'a> {
    /// `tsne`, `mds` or `raw`.
    pub representation: &'a str,
    pub variant: &'a str,
    pub curve: &'a LearningCurve,
}

/// `embedding,variant,size,repeat,accuracy`.
pub fn write_learning_curves<W: Write>(records: &[CurveRecord<'_>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["embedding", "variant", "size", "repeat", "accuracy"])?;
    for rec in records {
        for (si, row) in rec.curve.evaluations.iter().enumerate() {
            for e in row {
                w.write_record([
                    rec.representation.to_string(),
                    rec.variant.to_string(),
                    rec.curve.sizes[si].to_string(),
                    e.split.repeat_index.to_string(),
                    fmt_real(e.accuracy),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Header row and first column hold the class names.
pub fn write_confusion<W: Write>(m: &ConfusionMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(m.class_names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in m.class_names.iter().zip(&m.percentages) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|&v| fmt_real(v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
