//! Independent reference implementations shared by the integration tests
//! and the acceptance target. Nothing here calls the code under test to
//! obtain an expected value.

#![allow(dead_code)]

use metasim::classifiers::{fit, ClassifierKind, ClassifierSpec, ModelParams};
use metasim::embedding::pairwise_distances;
use metasim::embedding::tsne::{calibrate_row, kl_divergence, kl_gradient, joint_probabilities, JointProbabilities};
use metasim::embedding::mds_embed;
use metasim::meta::{rank_row, znorm_row};
use metasim::synth::{generate_problem, CovarianceStyle, ProblemSpec};
use metasim::{Matrix, RngStream};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::Rng;
use rand_distr::StandardNormal;

pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Check { passed, detail: detail.into() }
    }
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------- linear algebra

/// Inverse and log-determinant by Gauss-Jordan elimination with partial
/// pivoting. `a` is row-major `d x d`.
pub fn invert(a: &[f64], d: usize) -> (Vec<f64>, f64) {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; d * d];
    for i in 0..d {
        inv[i * d + i] = 1.0;
    }
    let mut log_det = 0.0;
    for col in 0..d {
        let pivot = (col..d).max_by(|&x, &y| m[x * d + col].abs().total_cmp(&m[y * d + col].abs())).unwrap();
        if pivot != col {
            for j in 0..d {
                m.swap(col * d + j, pivot * d + j);
                inv.swap(col * d + j, pivot * d + j);
            }
        }
        let p = m[col * d + col];
        log_det += p.abs().ln();
        for j in 0..d {
            m[col * d + j] /= p;
            inv[col * d + j] /= p;
        }
        for r in 0..d {
            if r != col {
                let f = m[r * d + col];
                if f != 0.0 {
                    for j in 0..d {
                        m[r * d + j] -= f * m[col * d + j];
                        inv[r * d + j] -= f * inv[col * d + j];
                    }
                }
            }
        }
    }
    (inv, log_det)
}

fn quad_form(inv: &[f64], v: &[f64]) -> f64 {
    let d = v.len();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += v[i] * inv[i * d + j] * v[j];
        }
    }
    s
}

fn first_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// ---------------------------------------------------------------- classifier oracles

fn centroids(x: &[Vec<f64>], y: &[usize], c: usize) -> Vec<Vec<f64>> {
    let d = x[0].len();
    let mut out = vec![vec![0.0; d]; c];
    let mut n = vec![0.0; c];
    for (row, &k) in x.iter().zip(y) {
        n[k] += 1.0;
        for j in 0..d {
            out[k][j] += row[j];
        }
    }
    for k in 0..c {
        for j in 0..d {
            out[k][j] /= n[k];
        }
    }
    out
}

/// MLE scatter of the rows selected by `keep`, each around its class centroid.
fn scatter(x: &[Vec<f64>], y: &[usize], means: &[Vec<f64>], keep: impl Fn(usize) -> bool) -> Vec<f64> {
    let d = x[0].len();
    let mut s = vec![0.0; d * d];
    let mut n = 0.0;
    for (row, &k) in x.iter().zip(y) {
        if !keep(k) {
            continue;
        }
        n += 1.0;
        for i in 0..d {
            for j in 0..d {
                s[i * d + j] += (row[i] - means[k][i]) * (row[j] - means[k][j]);
            }
        }
    }
    s.iter_mut().for_each(|v| *v /= n);
    s
}

fn shrunk(mut s: Vec<f64>, d: usize, lambda: f64) -> Vec<f64> {
    let tr: f64 = (0..d).map(|i| s[i * d + i]).sum();
    for v in s.iter_mut() {
        *v *= 1.0 - lambda;
    }
    for i in 0..d {
        s[i * d + i] += lambda * tr / d as f64;
    }
    s
}

pub fn oracle_nearest_mean(x: &[Vec<f64>], y: &[usize], c: usize, q: &[f64]) -> usize {
    let m = centroids(x, y, c);
    let d: Vec<f64> = m.iter().map(|mu| -sq_dist(q, mu)).collect();
    first_argmax(&d)
}

pub fn oracle_lda(x: &[Vec<f64>], y: &[usize], c: usize, lambda: f64, q: &[f64]) -> usize {
    let d = q.len();
    let m = centroids(x, y, c);
    let (inv, _) = invert(&shrunk(scatter(x, y, &m, |_| true), d, lambda), d);
    let scores: Vec<f64> = m
        .iter()
        .map(|mu| {
            let v: Vec<f64> = q.iter().zip(mu).map(|(a, b)| a - b).collect();
            -0.5 * quad_form(&inv, &v)
        })
        .collect();
    first_argmax(&scores)
}

pub fn oracle_qda(x: &[Vec<f64>], y: &[usize], c: usize, lambda: f64, q: &[f64]) -> usize {
    let d = q.len();
    let m = centroids(x, y, c);
    let scores: Vec<f64> = (0..c)
        .map(|k| {
            let (inv, log_det) = invert(&shrunk(scatter(x, y, &m, |l| l == k), d, lambda), d);
            let v: Vec<f64> = q.iter().zip(&m[k]).map(|(a, b)| a - b).collect();
            -0.5 * log_det - 0.5 * quad_form(&inv, &v)
        })
        .collect();
    first_argmax(&scores)
}

pub fn oracle_1nn(x: &[Vec<f64>], y: &[usize], q: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..x.len() {
        if sq_dist(&x[i], q) < sq_dist(&x[best], q) {
            best = i;
        }
    }
    y[best]
}

/// Softmax decision rule from fitted weights, with the feature
/// standardization recomputed from the training rows.
pub fn oracle_logistic(x: &[Vec<f64>], weights: &[f64], c: usize, q: &[f64]) -> usize {
    let d = q.len();
    let n = x.len() as f64;
    let scores: Vec<f64> = (0..c)
        .map(|k| {
            let w = &weights[k * (d + 1)..(k + 1) * (d + 1)];
            let mut s = w[d];
            for j in 0..d {
                let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
                let sd = (x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
                s += w[j] * (q[j] - mean) / sd;
            }
            s
        })
        .collect();
    first_argmax(&scores)
}

/// Naive CART: every feature, every midpoint between consecutive distinct
/// values, Gini compared exactly as fractions, ties to the first candidate.
pub enum OracleTree {
    Leaf(usize),
    Split(usize, f64, Box<OracleTree>, Box<OracleTree>),
}

pub fn oracle_tree_fit(x: &[Vec<f64>], y: &[usize], c: usize, rows: &[usize], depth: usize, max_depth: usize) -> OracleTree {
    let mut counts = vec![0u128; c];
    for &i in rows {
        counts[y[i]] += 1;
    }
    let majority = first_argmax(&counts.iter().map(|&v| v as f64).collect::<Vec<_>>());
    if counts.iter().filter(|&&v| v > 0).count() <= 1 || depth >= max_depth || rows.len() < 2 {
        return OracleTree::Leaf(majority);
    }
    // purity score sum_k cL^2/nL + sum_k cR^2/nR as the fraction (num, den)
    let mut best: Option<(u128, u128, usize, f64)> = None;
    for f in 0..x[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let mut t = (w[0] + w[1]) / 2.0;
            if t >= w[1] {
                t = w[0];
            }
            let mut cl = vec![0u128; c];
            let mut cr = vec![0u128; c];
            for &i in rows {
                if x[i][f] <= t {
                    cl[y[i]] += 1;
                } else {
                    cr[y[i]] += 1;
                }
            }
            let (nl, nr): (u128, u128) = (cl.iter().sum(), cr.iter().sum());
            let sl: u128 = cl.iter().map(|v| v * v).sum();
            let sr: u128 = cr.iter().map(|v| v * v).sum();
            let (num, den) = (sl * nr + sr * nl, nl * nr);
            if best.as_ref().is_none_or(|&(bn, bd, _, _)| num * bd > bn * den) {
                best = Some((num, den, f, t));
            }
        }
    }
    let Some((_, _, f, t)) = best else {
        return OracleTree::Leaf(majority);
    };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
    OracleTree::Split(
        f,
        t,
        Box::new(oracle_tree_fit(x, y, c, &l, depth + 1, max_depth)),
        Box::new(oracle_tree_fit(x, y, c, &r, depth + 1, max_depth)),
    )
}

pub fn oracle_tree_predict(t: &OracleTree, q: &[f64]) -> usize {
    match t {
        OracleTree::Leaf(k) => *k,
        OracleTree::Split(f, th, l, r) => oracle_tree_predict(if q[*f] <= *th { l } else { r }, q),
    }
}

/// Three overlapping Gaussian classes with distinct covariances in 3D.
pub fn oracle_training_set(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = RngStream::new(seed).rng();
    let means = [[0.0, 0.0, 0.0], [1.5, 0.5, -0.5], [-0.5, 1.5, 1.0]];
    let scales = [[1.0, 0.6, 1.4], [0.5, 1.2, 0.8], [1.5, 1.5, 0.4]];
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % 3;
        x.push((0..3).map(|j| means[k][j] + scales[k][j] * normal(&mut rng)).collect());
        y.push(k);
    }
    (x, y)
}

pub fn random_queries(seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut rng = RngStream::new(seed).rng();
    (0..n).map(|_| (0..3).map(|_| rng.random_range(-4.0..4.0)).collect()).collect()
}

/// Label disagreements between each classifier and its oracle on `queries`.
pub fn oracle_disagreements(x: &[Vec<f64>], y: &[usize], queries: &[Vec<f64>]) -> Vec<(ClassifierKind, usize)> {
    let c = 3;
    let train = Matrix::from_rows(x).unwrap();
    let q = Matrix::from_rows(queries).unwrap();
    let mut out = Vec::new();
    for spec in metasim::classifiers::default_classifiers() {
        let model = fit(&spec, &train, y).unwrap();
        let predicted = model.predict(&q).unwrap();
        let tree = match spec {
            ClassifierSpec::DecisionTree { max_depth, .. } => {
                Some(oracle_tree_fit(x, y, c, &(0..x.len()).collect::<Vec<_>>(), 0, max_depth))
            }
            _ => None,
        };
        let wrong = queries
            .iter()
            .zip(&predicted)
            .filter(|(qp, &p)| {
                let expected = match (&spec, model.params()) {
                    (ClassifierSpec::NearestMean, _) => oracle_nearest_mean(x, y, c, qp),
                    (ClassifierSpec::LinearDiscriminant { shrinkage }, _) => oracle_lda(x, y, c, *shrinkage, qp),
                    (ClassifierSpec::QuadraticDiscriminant { shrinkage }, _) => oracle_qda(x, y, c, *shrinkage, qp),
                    (ClassifierSpec::LogisticRegression { .. }, ModelParams::Logistic(m)) => {
                        oracle_logistic(x, m.weights(), c, qp)
                    }
                    (ClassifierSpec::OneNearestNeighbor, _) => oracle_1nn(x, y, qp),
                    (ClassifierSpec::DecisionTree { .. }, _) => oracle_tree_predict(tree.as_ref().unwrap(), qp),
                    _ => unreachable!("logistic spec yields a logistic model"),
                };
                expected != p
            })
            .count();
        out.push((spec.kind(), wrong));
    }
    out
}

pub fn accuracy_of(kind: ClassifierKind, train: (&Matrix, &[usize]), test: (&Matrix, &[usize])) -> f64 {
    let model = fit(&ClassifierSpec::default_for(kind), train.0, train.1).unwrap();
    let p = model.predict(test.0).unwrap();
    p.iter().zip(test.1).filter(|(a, b)| a == b).count() as f64 / p.len() as f64
}

/// Two spherical unit Gaussians in 10D with means 10 apart.
pub fn separable_problem(seed: u64, n: usize) -> (Matrix, Vec<usize>) {
    let mut rng = RngStream::new(seed).rng();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % 2;
        let shift = if k == 0 { -5.0 } else { 5.0 };
        rows.push((0..10).map(|j| normal(&mut rng) + if j == 0 { shift } else { 0.0 }).collect::<Vec<f64>>());
        y.push(k);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

pub const EQUAL_MEAN_DIM: usize = 4;
pub const EQUAL_MEAN_RATIO: f64 = 9.0;

/// Generator spec with equal class means and covariances `9 I` vs `I`.
pub fn equal_mean_spec() -> ProblemSpec {
    ProblemSpec {
        name: "equal-mean".into(),
        n_subjects: 4,
        samples_per_subject: 3250,
        n_classes: 2,
        dim: EQUAL_MEAN_DIM,
        class_separation: 0.0,
        subject_shift: 0.0,
        covariance: CovarianceStyle::class_distinct(EQUAL_MEAN_RATIO),
    }
}

/// CDF of the chi-square distribution with `k` degrees of freedom by
/// composite Simpson integration of its density.
pub fn chi_square_cdf(x: f64, k: usize) -> f64 {
    let half = k as f64 / 2.0;
    let log_norm = half * 2f64.ln() + ln_gamma(half);
    assert!(k >= 2, "the density is unbounded at 0 for k = 1");
    let density = |t: f64| match (t > 0.0, k) {
        (true, _) => ((half - 1.0) * t.ln() - t / 2.0 - log_norm).exp(),
        (false, 2) => (-log_norm).exp(),
        (false, _) => 0.0,
    };
    let steps = 200_000;
    let h = x / steps as f64;
    let mut s = density(0.0) + density(x);
    for i in 1..steps {
        s += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn ln_gamma(x: f64) -> f64 {
    // integer and half-integer arguments only
    let mut v = x;
    let mut acc = 0.0;
    while v > 1.0 {
        v -= 1.0;
        acc += v.ln();
    }
    if (v - 0.5).abs() < 1e-12 {
        acc + 0.5 * std::f64::consts::PI.ln()
    } else {
        acc
    }
}

/// Bayes accuracy for equal-mean Gaussians `r I` and `I` with equal priors:
/// pick the wide class when `|x - mu|^2 > t`.
pub fn equal_mean_bayes_accuracy(d: usize, ratio: f64) -> f64 {
    let t = d as f64 * ratio.ln() / (1.0 - 1.0 / ratio);
    0.5 * (1.0 - chi_square_cdf(t / ratio, d)) + 0.5 * chi_square_cdf(t, d)
}

/// First 3000 rows for training, the remaining 10000 for testing.
pub fn equal_mean_data() -> ((Matrix, Vec<usize>), (Matrix, Vec<usize>)) {
    let p = generate_problem(&equal_mean_spec(), &RngStream::new(41)).unwrap();
    let train: Vec<usize> = (0..3000).collect();
    let test: Vec<usize> = (3000..13000).collect();
    let pick = |idx: &[usize]| {
        (p.features().select_rows(idx), idx.iter().map(|&i| p.labels()[i]).collect::<Vec<_>>())
    };
    (pick(&train), pick(&test))
}

/// Every part of the classifier oracle suite.
pub fn classifier_suite() -> Check {
    let mut failures = Vec::new();
    let (x, y) = oracle_training_set(7, 300);
    let queries = random_queries(8, 1000);
    for (kind, wrong) in oracle_disagreements(&x, &y, &queries) {
        if wrong > 0 {
            failures.push(format!("{kind} disagrees with its oracle on {wrong}/1000"));
        }
    }
    let train = separable_problem(11, 3000);
    let test = separable_problem(12, 10000);
    let mut separable = Vec::new();
    for kind in [ClassifierKind::LinearDiscriminant, ClassifierKind::QuadraticDiscriminant, ClassifierKind::LogisticRegression] {
        let acc = accuracy_of(kind, (&train.0, &train.1), (&test.0, &test.1));
        separable.push(format!("{kind} {acc:.4}"));
        if acc < 0.99 {
            failures.push(format!("{kind} reaches only {acc:.4} on the separable problem"));
        }
    }
    let ((tx, ty), (qx, qy)) = equal_mean_data();
    let lda = accuracy_of(ClassifierKind::LinearDiscriminant, (&tx, &ty), (&qx, &qy));
    let qda = accuracy_of(ClassifierKind::QuadraticDiscriminant, (&tx, &ty), (&qx, &qy));
    if qda - lda < 0.2 {
        failures.push(format!("QDA {qda:.4} beats LDA {lda:.4} by less than 0.2"));
    }
    let detail = format!(
        "oracle agreement 6/6 kinds on 1000 queries; separable: {}; equal-mean QDA {qda:.4} vs LDA {lda:.4}",
        separable.join(", ")
    );
    if failures.is_empty() {
        Check::new(true, detail)
    } else {
        Check::new(false, failures.join("; "))
    }
}

// ---------------------------------------------------------------- meta-feature transforms

/// Oracle ranks: rank 1 for the largest value, ties share the average.
pub fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let greater = v.iter().filter(|&&y| y > x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            greater + (equal + 1.0) / 2.0
        })
        .collect()
}

/// A strictly increasing map chosen from a small family.
pub fn monotone_map(kind: u8, a: f64, b: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| match kind % 6 {
        0 => a * x + b,
        1 => (a * x).exp() + b,
        2 => x * x * x + a * x,
        3 => (3.0 * a * x).atan(),
        4 => (1.0 + x).ln() * a - b,
        _ => (0.5 + x).powf(0.3 + a) + b,
    }
}

/// Rows drawn from a 0.01 grid in [0, 1], so ties are common and every
/// map above keeps distinct values distinct.
pub fn accuracy_row() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0u32..=100, 6).prop_map(|v| v.into_iter().map(|i| i as f64 / 100.0).collect())
}

pub fn monotone_case() -> impl Strategy<Value = (Vec<f64>, u8, f64, f64)> {
    (accuracy_row(), any::<u8>(), 0.1f64..3.0, -2.0f64..2.0)
}

/// Runs `cases` monotone-invariance cases; returns the failure message, if any.
pub fn monotone_invariance(cases: u32) -> Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner
        .run(&monotone_case(), |(row, kind, a, b)| {
            let f = monotone_map(kind, a, b);
            let mapped: Vec<f64> = row.iter().map(|&x| f(x)).collect();
            prop_assert_eq!(rank_row(&mapped), rank_row(&row));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn rank_suite() -> Check {
    let mut failures = Vec::new();
    let rank_examples: [([f64; 6], [f64; 6]); 3] = [
        ([1.0, 0.9, 0.8, 0.7, 0.6, 0.5], [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        ([0.9, 0.7, 0.7, 0.5, 0.5, 0.3], [1.0, 2.5, 2.5, 4.5, 4.5, 6.0]),
        ([0.5; 6], [3.5; 6]),
    ];
    for (input, expected) in rank_examples {
        if rank_row(&input) != expected {
            failures.push(format!("rank_row({input:?}) = {:?}", rank_row(&input)));
        }
    }
    let z = znorm_row(&[0.0, 1.0]);
    if z != vec![-1.0, 1.0] {
        failures.push(format!("znorm_row([0, 1]) = {z:?}"));
    }
    if znorm_row(&[0.4; 6]) != vec![0.0; 6] {
        failures.push("constant row does not normalize to zeros".into());
    }
    let c = 1.5f64.sqrt();
    let expected = [-c, 0.0, c, -c, 0.0, c];
    let z = znorm_row(&[0.5, 0.7, 0.9, 0.5, 0.7, 0.9]);
    if z.iter().zip(&expected).any(|(a, b)| (a - b).abs() > 1e-4) {
        failures.push(format!("znorm_row example gave {z:?}"));
    }
    let mut rng = RngStream::new(4).rng();
    let mut worst_sum: f64 = 0.0;
    let mut worst_moment: f64 = 0.0;
    for _ in 0..1000 {
        let row: Vec<f64> = (0..6).map(|_| (rng.random_range(0..40) as f64) / 40.0).collect();
        let r = rank_row(&row);
        if r != oracle_ranks(&row) {
            failures.push(format!("ranks of {row:?} differ from the oracle"));
        }
        worst_sum = worst_sum.max((r.iter().sum::<f64>() - 21.0).abs());
        let z = znorm_row(&row);
        let mean = z.iter().sum::<f64>() / 6.0;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        let constant = row.iter().all(|&v| v == row[0]);
        let moment = if constant { z.iter().map(|v| v.abs()).fold(0.0, f64::max) } else { mean.abs().max((var - 1.0).abs()) };
        worst_moment = worst_moment.max(moment);
    }
    if worst_sum > 1e-12 {
        failures.push(format!("rank sums deviate from 21 by {worst_sum:e}"));
    }
    if worst_moment > 1e-9 {
        failures.push(format!("znorm moments deviate by {worst_moment:e}"));
    }
    let monotone = monotone_invariance(1000);
    if let Err(e) = &monotone {
        failures.push(format!("monotone invariance: {e}"));
    }
    if failures.is_empty() {
        Check::new(
            true,
            format!("examples exact; |sum - 21| <= {worst_sum:e}; znorm moments <= {worst_moment:e}; monotone 1000/1000"),
        )
    } else {
        Check::new(false, failures.join("; "))
    }
}

// ---------------------------------------------------------------- embeddings

/// Largest deviation between input and embedded distances over 50 random
/// planar configurations of 120 points.
pub fn mds_planar_error(configurations: usize, n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for c in 0..configurations {
        let mut rng = RngStream::new(900).derive("configuration", c as u64).rng();
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)]).collect();
        let d = pairwise_distances(&Matrix::from_rows(&pts).unwrap()).unwrap();
        let e = mds_embed(&d).unwrap();
        for i in 0..n {
            let expected_row: Vec<f64> = (0..n).map(|j| sq_dist(&pts[i], &pts[j]).sqrt()).collect();
            for j in 0..n {
                let got = sq_dist(e.row(i), e.row(j)).sqrt();
                worst = worst.max((got - expected_row[j]).abs());
            }
        }
    }
    worst
}

/// Random joint probabilities over `n` points in 5D and a random layout.
pub fn random_tsne_instance(seed: u64, n: usize, perplexity: f64) -> (JointProbabilities, Matrix) {
    let mut rng = RngStream::new(seed).rng();
    let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| normal(&mut rng)).collect()).collect();
    let p = joint_probabilities(&pairwise_distances(&Matrix::from_rows(&pts).unwrap()).unwrap(), perplexity).unwrap();
    let y: Vec<[f64; 2]> = (0..n).map(|_| [normal(&mut rng), normal(&mut rng)]).collect();
    (p, Matrix::from_rows(&y).unwrap())
}

/// `|g - g_fd| / |g_fd|` with central differences of step `h`.
pub fn gradient_relative_error(p: &JointProbabilities, y: &Matrix, h: f64) -> f64 {
    let g = kl_gradient(p, y);
    let mut fd = vec![0.0; g.len()];
    for k in 0..g.len() {
        let (i, j) = (k / 2, k % 2);
        let mut plus = y.clone();
        plus.set(i, j, y.get(i, j) + h);
        let mut minus = y.clone();
        minus.set(i, j, y.get(i, j) - h);
        fd[k] = (kl_divergence(p, &plus) - kl_divergence(p, &minus)) / (2.0 * h);
    }
    let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
    num / den
}

pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum::<f64>()
}

fn gibbs(sq: &[f64], beta: f64) -> Vec<f64> {
    let w: Vec<f64> = sq.iter().map(|&d| (-beta * d).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Best beta for a perplexity target by two rounds of a 10^6-point grid:
/// a coarse one on `(0, beta_max]`, then one across the winning cell.
pub fn grid_search_beta(sq: &[f64], perplexity: f64, beta_max: f64) -> f64 {
    let target = perplexity.log2();
    let search = |lo: f64, hi: f64| {
        let steps = 1_000_000;
        let mut best = (f64::INFINITY, lo);
        for s in 0..=steps {
            let beta = lo + (hi - lo) * s as f64 / steps as f64;
            let err = (entropy_bits(&gibbs(sq, beta)) - target).abs();
            if err < best.0 {
                best = (err, beta);
            }
        }
        best.1
    };
    let step = beta_max / 1e6;
    let coarse = search(step, beta_max);
    search((coarse - step).max(step * 1e-3), coarse + step)
}

pub fn grid_calibration_error(sq: &[f64], perplexity: f64, beta_max: f64) -> f64 {
    let cal = calibrate_row(sq, perplexity).unwrap();
    let oracle = gibbs(sq, grid_search_beta(sq, perplexity, beta_max));
    cal.probabilities.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Largest `|2^H - perplexity|` over the calibrated rows of `meta`, with
/// the entropy recomputed from the returned probabilities.
pub fn worst_perplexity_error(meta: &metasim::meta::MetaDataset, perplexity: f64) -> f64 {
    let p = joint_probabilities(&pairwise_distances(&meta.rows).unwrap(), perplexity).unwrap();
    p.rows
        .iter()
        .map(|r| (2f64.powf(entropy_bits(&r.probabilities)) - perplexity).abs())
        .fold(0.0, f64::max)
}

/// Runs the restarts behind `tsne_best` one by one and checks that the
/// selected embedding carries the lowest KL, with the lowest index on ties.
pub fn best_of_restarts(
    meta: &metasim::meta::MetaDataset,
    config: &metasim::embedding::TsneConfig,
    rng: &RngStream,
) -> Check {
    use metasim::embedding::tsne::tsne_run;
    let p = joint_probabilities(&pairwise_distances(&meta.rows).unwrap(), config.perplexity).unwrap();
    let runs: Vec<_> = (0..config.restarts)
        .map(|r| tsne_run(&p, config, &rng.derive("restart", r as u64)).unwrap())
        .collect();
    let best = metasim::embedding::tsne_best(meta, config, rng).unwrap();
    let error = best.error.unwrap();
    let kls: Vec<f64> = runs.iter().map(|r| r.kl).collect();
    let min = kls.iter().copied().fold(f64::INFINITY, f64::min);
    let first_min = kls.iter().position(|&k| k == min).unwrap();
    let mut failures = Vec::new();
    if kls.iter().any(|&k| error > k) {
        failures.push(format!("selected KL {error} exceeds a restart's KL"));
    }
    if best.coords != runs[first_min].coords {
        failures.push(format!("selected coordinates are not those of restart {first_min}"));
    }
    if runs[first_min].kl > runs[first_min].initial_kl {
        failures.push("selected run did not improve on its initialization".into());
    }
    let detail = format!(
        "best KL {error:.6} (restart {first_min}) vs restarts [{}]",
        kls.iter().map(|k| format!("{k:.4}")).collect::<Vec<_>>().join(", ")
    );
    if failures.is_empty() {
        Check::new(true, detail)
    } else {
        Check::new(false, failures.join("; "))
    }
}
