//! Seeded synthetic classification problems with subject structure.
//!
//! Every problem is a Gaussian class-conditional model. Class means sit on a
//! regular simplex whose edge length is the class separation, each subject
//! shifts all of its samples by a private offset, and the within-class
//! covariance follows one of four styles.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngStream;
use crate::tabular::ClassificationProblem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "style", rename_all = "kebab-case")]
pub enum CovarianceStyle {
    /// Identity covariance, shared by all classes.
    Spherical,
    /// Shared axis-aligned covariance. Variances are log-uniform on
    /// `[1/spread, spread]`, rescaled to mean 1.
    DiagonalRandom {
        #[serde(default = "default_spread")]
        spread: f64,
    },
    /// Shared covariance with random variances, drawn as for
    /// `DiagonalRandom`, along random orthogonal axes.
    FullRandom {
        #[serde(default = "default_spread")]
        spread: f64,
    },
    /// Class `k` has covariance `s_k D`, with `s_0 = ratio`, `s_{C-1} = 1`
    /// and geometric steps in between. `D` is a diagonal drawn as for
    /// `DiagonalRandom`; the default spread of 1 makes it the identity.
    ClassDistinct {
        ratio: f64,
        #[serde(default = "unit_spread")]
        spread: f64,
    },
}

pub const DEFAULT_VARIANCE_SPREAD: f64 = 4.0;

fn default_spread() -> f64 {
    DEFAULT_VARIANCE_SPREAD
}

fn unit_spread() -> f64 {
    1.0
}

impl CovarianceStyle {
    pub fn diagonal_random() -> Self {
        CovarianceStyle::DiagonalRandom { spread: DEFAULT_VARIANCE_SPREAD }
    }

    pub fn full_random() -> Self {
        CovarianceStyle::FullRandom { spread: DEFAULT_VARIANCE_SPREAD }
    }

    pub fn class_distinct(ratio: f64) -> Self {
        CovarianceStyle::ClassDistinct { ratio, spread: 1.0 }
    }

    fn spread(&self) -> f64 {
        match *self {
            CovarianceStyle::Spherical => 1.0,
            CovarianceStyle::DiagonalRandom { spread }
            | CovarianceStyle::FullRandom { spread }
            | CovarianceStyle::ClassDistinct { spread, .. } => spread,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub n_subjects: usize,
    pub samples_per_subject: usize,
    pub n_classes: usize,
    pub dim: usize,
    /// Distance between class means, in within-class standard deviations.
    pub class_separation: f64,
    /// Standard deviation of each subject's mean offset.
    pub subject_shift: f64,
    pub covariance: CovarianceStyle,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Invalid(format!("problem spec `{}`: {msg}", self.name)));
        if self.n_subjects < 4 {
            return fail(format!("needs at least 4 subjects, got {}", self.n_subjects));
        }
        if self.n_classes < 2 {
            return fail(format!("needs at least 2 classes, got {}", self.n_classes));
        }
        if self.dim < 2 {
            return fail(format!("needs dimension at least 2, got {}", self.dim));
        }
        if self.samples_per_subject < self.n_classes {
            return fail(format!(
                "{} samples per subject cannot cover {} classes",
                self.samples_per_subject, self.n_classes
            ));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return fail(format!("class separation {} must be finite and >= 0", self.class_separation));
        }
        if !(self.subject_shift >= 0.0 && self.subject_shift.is_finite()) {
            return fail(format!("subject shift {} must be finite and >= 0", self.subject_shift));
        }
        if let CovarianceStyle::ClassDistinct { ratio, .. } = self.covariance {
            if !(ratio > 0.0 && ratio.is_finite()) {
                return fail(format!("covariance ratio {ratio} must be finite and > 0"));
            }
        }
        let spread = self.covariance.spread();
        if !(spread >= 1.0 && spread.is_finite()) {
            return fail(format!("variance spread {spread} must be finite and >= 1"));
        }
        Ok(())
    }
}

fn normal_vec(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `k` orthonormal vectors in `R^d` (`k <= d`) from Gram-Schmidt on Gaussian draws.
fn random_orthonormal(rng: &mut ChaCha20Rng, k: usize, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = normal_vec(rng, d);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

fn random_variances(rng: &mut ChaCha20Rng, d: usize, spread: f64) -> Vec<f64> {
    if spread == 1.0 {
        return vec![1.0; d];
    }
    let ln = spread.ln();
    let raw: Vec<f64> = (0..d).map(|_| (rng.random_range(-ln..ln)).exp()).collect();
    let mean = raw.iter().sum::<f64>() / d as f64;
    raw.into_iter().map(|v| v / mean).collect()
}

/// Row-major `d x d` factor `A` with `A A^T` the class covariance.
fn covariance_factors(style: &CovarianceStyle, c: usize, d: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    let scaled_identity = |s: f64| {
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            a[i * d + i] = s;
        }
        a
    };
    match style {
        CovarianceStyle::Spherical => vec![scaled_identity(1.0); c],
        CovarianceStyle::DiagonalRandom { spread } => {
            let v = random_variances(rng, d, *spread);
            let mut a = vec![0.0; d * d];
            for i in 0..d {
                a[i * d + i] = v[i].sqrt();
            }
            vec![a; c]
        }
        CovarianceStyle::FullRandom { spread } => {
            let v = random_variances(rng, d, *spread);
            let axes = random_orthonormal(rng, d, d);
            // A = R diag(sqrt v), columns of R are the axes.
            let mut a = vec![0.0; d * d];
            for i in 0..d {
                for (j, axis) in axes.iter().enumerate() {
                    a[i * d + j] = axis[i] * v[j].sqrt();
                }
            }
            vec![a; c]
        }
        CovarianceStyle::ClassDistinct { ratio, spread } => {
            let v = random_variances(rng, d, *spread);
            (0..c)
                .map(|k| {
                    let t = (c - 1 - k) as f64 / (c - 1) as f64;
                    let s = ratio.powf(t).sqrt();
                    let mut a = vec![0.0; d * d];
                    for i in 0..d {
                        a[i * d + i] = s * v[i].sqrt();
                    }
                    a
                })
                .collect()
        }
    }
}

fn class_means(c: usize, d: usize, separation: f64, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    // Scaled orthonormal vectors are a regular simplex with edge `separation`.
    let scale = separation / std::f64::consts::SQRT_2;
    let dirs = if c <= d {
        random_orthonormal(rng, c, d)
    } else {
        (0..c)
            .map(|_| {
                let v = normal_vec(rng, d);
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect()
    };
    dirs.into_iter()
        .map(|v| v.into_iter().map(|x| x * scale).collect())
        .collect()
}

/// Draws a problem from `spec`. Sample `j` of every subject has class
/// `j mod C`, so subjects are class-balanced up to one sample.
pub fn generate_problem(spec: &ProblemSpec, rng: &RngStream) -> Result<ClassificationProblem> {
    spec.validate()?;
    let (c, d) = (spec.n_classes, spec.dim);
    let means = class_means(c, d, spec.class_separation, &mut rng.derive("means", 0).rng());
    let factors = covariance_factors(&spec.covariance, c, d, &mut rng.derive("covariance", 0).rng());
    let mut offset_rng = rng.derive("subjects", 0).rng();
    let offsets: Vec<Vec<f64>> = (0..spec.n_subjects)
        .map(|_| normal_vec(&mut offset_rng, d).into_iter().map(|x| x * spec.subject_shift).collect())
        .collect();

    let n = spec.n_subjects * spec.samples_per_subject;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut subjects = Vec::with_capacity(n);
    let mut sample_rng = rng.derive("samples", 0).rng();
    let mut z = vec![0.0; d];
    for (s, offset) in offsets.iter().enumerate() {
        for j in 0..spec.samples_per_subject {
            let k = j % c;
            z.iter_mut().for_each(|v| *v = sample_rng.sample(StandardNormal));
            let a = &factors[k];
            for i in 0..d {
                let row = &a[i * d..(i + 1) * d];
                let noise: f64 = row.iter().zip(&z).map(|(x, y)| x * y).sum();
                data.push(means[k][i] + offset[i] + noise);
            }
            labels.push(k);
            subjects.push(s);
        }
    }
    ClassificationProblem::new(
        spec.name.clone(),
        Matrix::new(n, d, data)?,
        labels,
        subjects,
        (0..spec.n_subjects).map(|s| format!("subj{s:03}")).collect(),
        (0..c).map(|k| format!("class{k}")).collect(),
    )
}

/// Fixed monotone per-feature map `x -> sign(x) |x|^0.8`, followed by the
/// affine standardization of each feature to zero mean and unit variance.
pub fn monotone_distortion(problem: &ClassificationProblem, name: &str) -> Result<ClassificationProblem> {
    const EXPONENT: f64 = 0.8;
    let src = problem.features();
    let (n, d) = (src.rows(), src.cols());
    let mut out = src.clone();
    for v in out.as_mut_slice() {
        *v = v.signum() * v.abs().powf(EXPONENT);
    }
    for j in 0..d {
        let mean = (0..n).map(|i| out.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (out.get(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        for i in 0..n {
            out.set(i, j, (out.get(i, j) - mean) / sd);
        }
    }
    Ok(problem.with_features(out)?.with_name(name))
}

pub const TISSUE: &str = "tissue";
pub const MITOSIS: &str = "mitosis";
pub const MITOSIS_NORM: &str = "mitosis-norm";
pub const VESSEL: &str = "vessel";
pub const ARTERY_VEIN: &str = "artery-vein";
pub const MICROANEURYSM: &str = "microaneurysm";

/// Generator specs of the built-in suite, in suite order. The second
/// mitosis problem is not listed: it is a distortion of the first.
pub fn builtin_specs() -> Vec<ProblemSpec> {
    vec![
        ProblemSpec {
            name: TISSUE.into(),
            n_subjects: 20,
            samples_per_subject: 2100,
            n_classes: 7,
            dim: 96,
            class_separation: 2.2,
            subject_shift: 0.35,
            covariance: CovarianceStyle::Spherical,
        },
        ProblemSpec {
            name: MITOSIS.into(),
            n_subjects: 12,
            samples_per_subject: 3500,
            n_classes: 2,
            dim: 48,
            class_separation: 2.0,
            subject_shift: 0.4,
            covariance: CovarianceStyle::ClassDistinct { ratio: 2.0, spread: 1.8 },
        },
        ProblemSpec {
            name: VESSEL.into(),
            n_subjects: 20,
            samples_per_subject: 2000,
            n_classes: 2,
            dim: 29,
            class_separation: 2.5,
            subject_shift: 0.3,
            covariance: CovarianceStyle::class_distinct(3.0),
        },
        ProblemSpec {
            name: ARTERY_VEIN.into(),
            n_subjects: 20,
            samples_per_subject: 2000,
            n_classes: 2,
            dim: 30,
            class_separation: 1.6,
            subject_shift: 0.4,
            covariance: CovarianceStyle::full_random(),
        },
        ProblemSpec {
            name: MICROANEURYSM.into(),
            n_subjects: 40,
            samples_per_subject: 1000,
            n_classes: 2,
            dim: 30,
            class_separation: 1.3,
            subject_shift: 0.4,
            covariance: CovarianceStyle::full_random(),
        },
    ]
}

/// The six built-in problems: tissue, mitosis, mitosis-norm, vessel,
/// artery-vein, microaneurysm.
pub fn builtin_suite(root_seed: u64) -> Result<Vec<ClassificationProblem>> {
    let root = RngStream::new(root_seed).derive("builtin-suite", 0);
    let specs = builtin_specs();
    let mut generated = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        generated.push(generate_problem(spec, &root.derive("problem", i as u64))?);
    }
    let mitosis_norm = monotone_distortion(&generated[1], MITOSIS_NORM)?;
    generated.insert(2, mitosis_norm);
    Ok(generated)
}
