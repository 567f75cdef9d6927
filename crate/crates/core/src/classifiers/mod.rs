//! The six landmark classifiers.
//!
//! All of them are deterministic functions of their training data. Ties
//! anywhere (discriminant scores, distances, split gains, leaf majorities)
//! resolve toward the lowest index.

pub mod discriminant;
pub mod logistic;
pub mod nearest_mean;
pub mod nearest_neighbor;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use discriminant::GaussianModel;
pub use logistic::LogisticModel;
pub use nearest_mean::NearestMeanModel;
pub use nearest_neighbor::NearestNeighborModel;
pub use tree::TreeModel;

pub const DEFAULT_SHRINKAGE: f64 = 0.1;

fn default_shrinkage() -> f64 {
    DEFAULT_SHRINKAGE
}
fn default_l2() -> f64 {
    1e-3
}
fn default_iterations() -> usize {
    500
}
fn default_step() -> f64 {
    0.1
}
fn default_max_depth() -> usize {
    20
}
fn default_min_node() -> usize {
    2
}

/// Classifier choice plus hyperparameters. Serializes as an object with a
/// `kind` string; omitted hyperparameters take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClassifierSpec {
    NearestMean,
    LinearDiscriminant {
        #[serde(default = "default_shrinkage")]
        shrinkage: f64,
    },
    QuadraticDiscriminant {
        #[serde(default = "default_shrinkage")]
        shrinkage: f64,
    },
    LogisticRegression {
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default = "default_iterations")]
        iterations: usize,
        #[serde(default = "default_step")]
        step_size: f64,
    },
    OneNearestNeighbor,
    DecisionTree {
        #[serde(default = "default_max_depth")]
        max_depth: usize,
        /// Nodes with fewer samples than this become leaves.
        #[serde(default = "default_min_node")]
        min_node_size: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    NearestMean,
    LinearDiscriminant,
    QuadraticDiscriminant,
    LogisticRegression,
    OneNearestNeighbor,
    DecisionTree,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::NearestMean => "nearest-mean",
            ClassifierKind::LinearDiscriminant => "linear-discriminant",
            ClassifierKind::QuadraticDiscriminant => "quadratic-discriminant",
            ClassifierKind::LogisticRegression => "logistic-regression",
            ClassifierKind::OneNearestNeighbor => "one-nearest-neighbor",
            ClassifierKind::DecisionTree => "decision-tree",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl ClassifierSpec {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierSpec::NearestMean => ClassifierKind::NearestMean,
            ClassifierSpec::LinearDiscriminant { .. } => ClassifierKind::LinearDiscriminant,
            ClassifierSpec::QuadraticDiscriminant { .. } => ClassifierKind::QuadraticDiscriminant,
            ClassifierSpec::LogisticRegression { .. } => ClassifierKind::LogisticRegression,
            ClassifierSpec::OneNearestNeighbor => ClassifierKind::OneNearestNeighbor,
            ClassifierSpec::DecisionTree { .. } => ClassifierKind::DecisionTree,
        }
    }

    pub fn default_for(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::NearestMean => ClassifierSpec::NearestMean,
            ClassifierKind::LinearDiscriminant => ClassifierSpec::LinearDiscriminant {
                shrinkage: DEFAULT_SHRINKAGE,
            },
            ClassifierKind::QuadraticDiscriminant => ClassifierSpec::QuadraticDiscriminant {
                shrinkage: DEFAULT_SHRINKAGE,
            },
            ClassifierKind::LogisticRegression => ClassifierSpec::LogisticRegression {
                l2: default_l2(),
                iterations: default_iterations(),
                step_size: default_step(),
            },
            ClassifierKind::OneNearestNeighbor => ClassifierSpec::OneNearestNeighbor,
            ClassifierKind::DecisionTree => ClassifierSpec::DecisionTree {
                max_depth: default_max_depth(),
                min_node_size: default_min_node(),
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("{}: {m}", self.kind())));
        match *self {
            ClassifierSpec::LinearDiscriminant { shrinkage }
            | ClassifierSpec::QuadraticDiscriminant { shrinkage } => {
                if !(0.0..=1.0).contains(&shrinkage) {
                    return bad(format!("shrinkage {shrinkage} must lie in [0, 1]"));
                }
            }
            ClassifierSpec::LogisticRegression { l2, step_size, .. } => {
                if !(l2 >= 0.0 && l2.is_finite()) {
                    return bad(format!("l2 penalty {l2} must be finite and >= 0"));
                }
                if !(step_size > 0.0 && step_size.is_finite()) {
                    return bad(format!("step size {step_size} must be finite and > 0"));
                }
            }
            ClassifierSpec::DecisionTree { min_node_size, .. } => {
                if min_node_size < 2 {
                    return bad("min_node_size must be at least 2".into());
                }
            }
            ClassifierSpec::NearestMean | ClassifierSpec::OneNearestNeighbor => {}
        }
        Ok(())
    }
}

/// The six classifiers in their canonical column order.
pub fn default_classifiers() -> Vec<ClassifierSpec> {
    [
        ClassifierKind::NearestMean,
        ClassifierKind::LinearDiscriminant,
        ClassifierKind::QuadraticDiscriminant,
        ClassifierKind::LogisticRegression,
        ClassifierKind::OneNearestNeighbor,
        ClassifierKind::DecisionTree,
    ]
    .into_iter()
    .map(ClassifierSpec::default_for)
    .collect()
}

#[derive(Clone, Debug)]
pub enum ModelParams {
    NearestMean(NearestMeanModel),
    Gaussian(GaussianModel),
    Logistic(LogisticModel),
    NearestNeighbor(NearestNeighborModel),
    Tree(TreeModel),
}

/// A fitted classifier. Internally every model works over compact class
/// positions `0..classes_seen.len()`; predictions are mapped back to the
/// original label indices.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    kind: ClassifierKind,
    dim: usize,
    classes_seen: Vec<usize>,
    params: ModelParams,
}

impl TrainedModel {
    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes_seen(&self) -> &[usize] {
        &self.classes_seen
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        if features.rows() > 0 && features.cols() != self.dim {
            return Err(Error::Invalid(format!(
                "{} model was trained on {} features, query has {}",
                self.kind,
                self.dim,
                features.cols()
            )));
        }
        let compact = match &self.params {
            ModelParams::NearestMean(m) => m.predict(features),
            ModelParams::Gaussian(m) => m.predict(features),
            ModelParams::Logistic(m) => m.predict(features),
            ModelParams::NearestNeighbor(m) => m.predict(features),
            ModelParams::Tree(m) => m.predict(features),
        };
        Ok(compact.into_iter().map(|k| self.classes_seen[k]).collect())
    }
}

/// Training labels remapped to positions in the sorted list of distinct labels.
pub(crate) struct CompactLabels {
    pub classes: Vec<usize>,
    pub labels: Vec<usize>,
}

impl CompactLabels {
    pub(crate) fn new(labels: &[usize]) -> Self {
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let labels = labels
            .iter()
            .map(|l| classes.binary_search(l).expect("label present"))
            .collect();
        CompactLabels { classes, labels }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }
}

pub fn fit(spec: &ClassifierSpec, features: &Matrix, labels: &[usize]) -> Result<TrainedModel> {
    spec.validate()?;
    if features.rows() != labels.len() {
        return Err(Error::Invalid(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if features.rows() < 2 {
        return Err(Error::Invalid(format!(
            "{}: at least 2 training samples are needed, got {}",
            spec.kind(),
            features.rows()
        )));
    }
    if features.cols() == 0 {
        return Err(Error::Invalid("training features have no columns".into()));
    }
    if !features.is_finite() {
        return Err(Error::Invalid("training features contain non-finite values".into()));
    }
    let compact = CompactLabels::new(labels);
    if compact.n_classes() < 2 {
        return Err(Error::Invalid(format!(
            "{}: training data contains a single class",
            spec.kind()
        )));
    }
    let params = match *spec {
        ClassifierSpec::NearestMean => ModelParams::NearestMean(NearestMeanModel::fit(features, &compact)),
        ClassifierSpec::LinearDiscriminant { shrinkage } => {
            ModelParams::Gaussian(GaussianModel::fit_linear(features, &compact, shrinkage)?)
        }
        ClassifierSpec::QuadraticDiscriminant { shrinkage } => {
            ModelParams::Gaussian(GaussianModel::fit_quadratic(features, &compact, shrinkage)?)
        }
        ClassifierSpec::LogisticRegression {
            l2,
            iterations,
            step_size,
        } => ModelParams::Logistic(
            logistic::fit_with_trace(features, &compact, l2, iterations, step_size).0,
        ),
        ClassifierSpec::OneNearestNeighbor => {
            ModelParams::NearestNeighbor(NearestNeighborModel::fit(features, &compact))
        }
        ClassifierSpec::DecisionTree {
            max_depth,
            min_node_size,
        } => ModelParams::Tree(TreeModel::fit(features, &compact, max_depth, min_node_size)),
    };
    Ok(TrainedModel {
        kind: spec.kind(),
        dim: features.cols(),
        classes_seen: compact.classes,
        params,
    })
}

pub fn predict(model: &TrainedModel, features: &Matrix) -> Result<Vec<usize>> {
    model.predict(features)
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Invalid(format!(
            "{} predictions for {} true labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Invalid("accuracy of an empty label list".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Index of the maximum, first one on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
