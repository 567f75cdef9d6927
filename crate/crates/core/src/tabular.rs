//! Classification problems with subject structure.
//!
//! Samples belong to subjects (images, patients); splits are always made at
//! the subject level so that no subject contributes to both the training and
//! the test side of a [`DatasetInstance`].

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationProblem {
    name: String,
    features: Matrix,
    labels: Vec<usize>,
    /// Per-row index into `subject_names`.
    subjects: Vec<usize>,
    subject_names: Vec<String>,
    class_names: Vec<String>,
}

impl ClassificationProblem {
    /// Validates and builds a problem. `labels` index into `class_names`,
    /// `subjects` into `subject_names`.
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        labels: Vec<usize>,
        subjects: Vec<usize>,
        subject_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.rows();
        if n == 0 {
            return Err(Error::Invalid("problem has no samples".into()));
        }
        if features.cols() == 0 {
            return Err(Error::Invalid("problem has no features".into()));
        }
        if labels.len() != n || subjects.len() != n {
            return Err(Error::Invalid(format!(
                "{n} feature rows but {} labels and {} subject ids",
                labels.len(),
                subjects.len()
            )));
        }
        if class_names.len() < 2 {
            return Err(Error::Invalid(format!(
                "a classification problem needs at least 2 classes, found {}",
                class_names.len()
            )));
        }
        let mut class_seen = vec![false; class_names.len()];
        for &l in &labels {
            *class_seen
                .get_mut(l)
                .ok_or_else(|| Error::Invalid(format!("label index {l} out of range")))? = true;
        }
        if let Some(c) = class_seen.iter().position(|s| !s) {
            return Err(Error::Invalid(format!("class `{}` has no samples", class_names[c])));
        }
        let mut subject_seen = vec![false; subject_names.len()];
        for &s in &subjects {
            *subject_seen
                .get_mut(s)
                .ok_or_else(|| Error::Invalid(format!("subject index {s} out of range")))? = true;
        }
        if let Some(s) = subject_seen.iter().position(|s| !s) {
            return Err(Error::Invalid(format!("subject `{}` has no samples", subject_names[s])));
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite feature value at row {}, column {}",
                pos / features.cols(),
                pos % features.cols()
            )));
        }
        Ok(ClassificationProblem {
            name: name.into(),
            features,
            labels,
            subjects,
            subject_names,
            class_names,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subjects(&self) -> &[usize] {
        &self.subjects
    }

    pub fn subject_names(&self) -> &[String] {
        &self.subject_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_names.len()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Same problem with every feature row replaced; used by distortions.
    pub(crate) fn with_features(&self, features: Matrix) -> Result<Self> {
        ClassificationProblem::new(
            self.name.clone(),
            features,
            self.labels.clone(),
            self.subjects.clone(),
            self.subject_names.clone(),
            self.class_names.clone(),
        )
    }
}

/// One subject-wise split of a problem. Subject sets hold indices into
/// [`ClassificationProblem::subject_names`], sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetInstance {
    pub problem_name: String,
    pub repeat_index: usize,
    pub train_subjects: Vec<usize>,
    pub test_subjects: Vec<usize>,
    pub seed: u64,
}

impl DatasetInstance {
    pub fn id(&self) -> String {
        instance_id(&self.problem_name, self.repeat_index)
    }
}

pub fn instance_id(problem: &str, repeat: usize) -> String {
    format!("{problem}-r{repeat:02}")
}

/// Row indices drawn from a problem, sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleSet {
    pub indices: Vec<usize>,
    pub target_size: usize,
}

/// Loads a problem CSV with header `subject_id,label,f0,...,f{d-1}`.
///
/// Class labels are re-indexed by sorted token, as are subject ids, so the
/// result does not depend on row order beyond the order of the rows
/// themselves.
pub fn load_problem_csv(path: impl AsRef<Path>) -> Result<ClassificationProblem> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "problem".to_string());
    read_problem_csv(file, &name)
}

pub fn read_problem_csv<R: std::io::Read>(reader: R, name: &str) -> Result<ClassificationProblem> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 3 {
        return Err(Error::Parse(format!(
            "header needs subject_id,label and at least one feature column, got {} columns",
            header.len()
        )));
    }
    let expected = |i: usize| match i {
        0 => "subject_id".to_string(),
        1 => "label".to_string(),
        k => format!("f{}", k - 2),
    };
    for (i, col) in header.iter().enumerate() {
        if col != expected(i) {
            return Err(Error::Parse(format!(
                "header column {} is `{col}`, expected `{}`",
                i + 1,
                expected(i)
            )));
        }
    }
    let d = header.len() - 2;

    let mut subject_tokens = Vec::new();
    let mut label_tokens = Vec::new();
    let mut data = Vec::new();
    for (row_no, rec) in rdr.records().enumerate() {
        // 1-based line numbers, counting the header as line 1.
        let line = row_no + 2;
        let rec = rec.map_err(|e| Error::Parse(format!("row {line}: {e}")))?;
        if rec.len() != d + 2 {
            return Err(Error::Parse(format!(
                "row {line} has {} fields, expected {}",
                rec.len(),
                d + 2
            )));
        }
        subject_tokens.push(rec[0].to_string());
        label_tokens.push(rec[1].to_string());
        for (j, field) in rec.iter().skip(2).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Parse(format!("row {line}, column f{j}: `{field}` is not a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!(
                    "row {line}, column f{j}: non-finite value `{field}`"
                )));
            }
            data.push(v);
        }
    }
    if label_tokens.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    let (labels, class_names) = index_by_sorted_token(&label_tokens);
    if class_names.len() < 2 {
        return Err(Error::Invalid(format!(
            "only one class (`{}`) present; at least 2 are needed",
            class_names[0]
        )));
    }
    let (subjects, subject_names) = index_by_sorted_token(&subject_tokens);
    let features = Matrix::new(label_tokens.len(), d, data)?;
    ClassificationProblem::new(name, features, labels, subjects, subject_names, class_names)
}

fn index_by_sorted_token(tokens: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut map: BTreeMap<&str, usize> = tokens.iter().map(|t| (t.as_str(), 0)).collect();
    for (i, v) in map.values_mut().enumerate() {
        *v = i;
    }
    let names = map.keys().map(|k| k.to_string()).collect();
    (tokens.iter().map(|t| map[t.as_str()]).collect(), names)
}

/// Writes a problem in the CSV layout read by [`load_problem_csv`], with
/// reals at 17 significant digits.
pub fn write_problem_csv<W: Write>(problem: &ClassificationProblem, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["subject_id".to_string(), "label".to_string()];
    header.extend((0..problem.dim()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(problem.dim() + 2);
    for i in 0..problem.n_samples() {
        rec.clear();
        rec.push(problem.subject_names[problem.subjects[i]].clone());
        rec.push(problem.class_names[problem.labels[i]].clone());
        rec.extend(problem.features.row(i).iter().map(|&v| fmt_real(v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_problem_csv(problem: &ClassificationProblem, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_problem_csv(problem, std::io::BufWriter::new(file))
}

/// 17 significant digits: exact round trip for `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Uniformly random subject partition with `round(train_fraction * #subjects)`
/// training subjects (half rounds up).
pub fn subject_split(
    problem: &ClassificationProblem,
    train_fraction: f64,
    repeat_index: usize,
    rng: &RngStream,
) -> Result<DatasetInstance> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "train fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let n = problem.n_subjects();
    let n_train = (train_fraction * n as f64 + 0.5).floor() as usize;
    if n < 2 || n_train < 1 || n_train > n - 1 {
        return Err(Error::Invalid(format!(
            "{n} subjects with train fraction {train_fraction} cannot give both sides at least one subject"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng.rng());
    let mut train_subjects = order[..n_train].to_vec();
    let mut test_subjects = order[n_train..].to_vec();
    train_subjects.sort_unstable();
    test_subjects.sort_unstable();
    Ok(DatasetInstance {
        problem_name: problem.name().to_string(),
        repeat_index,
        train_subjects,
        test_subjects,
        seed: rng.seed(),
    })
}

/// Per-class sample counts for a balanced draw of `m` from pools of the
/// given sizes. `bonus` marks the classes that receive one of the
/// `m mod C` remainder samples.
pub(crate) fn balanced_quotas(m: usize, pools: &[usize], bonus: &[bool]) -> Vec<usize> {
    let c = pools.len();
    let base = m / c;
    let mut take: Vec<usize> = (0..c)
        .map(|k| (base + usize::from(bonus[k])).min(pools[k]))
        .collect();
    let mut deficit = m.min(pools.iter().sum()) - take.iter().sum::<usize>();
    while deficit > 0 {
        let mut progressed = false;
        for k in 0..c {
            if deficit == 0 {
                break;
            }
            if take[k] < pools[k] {
                take[k] += 1;
                deficit -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    take
}

/// Class-balanced draw of `m` samples, without replacement, from the rows
/// owned by `subjects`.
///
/// Each class gets `floor(m / C)`; the remainder goes to a random subset of
/// classes. A class whose pool is too small gives up its whole pool and the
/// shortfall is handed round-robin to classes that still have samples.
pub fn balanced_subsample(
    problem: &ClassificationProblem,
    subjects: &[usize],
    m: usize,
    rng: &RngStream,
) -> Result<SampleSet> {
    let c = problem.n_classes();
    if m < c {
        return Err(Error::Invalid(format!(
            "sample size {m} is smaller than the class count {c}"
        )));
    }
    let mut in_set = vec![false; problem.n_subjects()];
    for &s in subjects {
        if s >= in_set.len() {
            return Err(Error::Invalid(format!("subject index {s} out of range")));
        }
        in_set[s] = true;
    }
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, (&s, &l)) in problem.subjects().iter().zip(problem.labels()).enumerate() {
        if in_set[s] {
            pools[l].push(i);
        }
    }
    let present = pools.iter().filter(|p| !p.is_empty()).count();
    if present < 2 {
        return Err(Error::Invalid(format!(
            "subject set contains {present} class(es); at least 2 are needed to train a classifier"
        )));
    }

    let mut gen = rng.rng();
    let mut classes: Vec<usize> = (0..c).collect();
    classes.shuffle(&mut gen);
    let mut bonus = vec![false; c];
    for &k in &classes[..m % c] {
        bonus[k] = true;
    }
    let sizes: Vec<usize> = pools.iter().map(Vec::len).collect();
    let take = balanced_quotas(m, &sizes, &bonus);

    let mut indices = Vec::with_capacity(take.iter().sum());
    for (pool, &t) in pools.iter_mut().zip(&take) {
        let (chosen, _) = pool.partial_shuffle(&mut gen, t);
        indices.extend_from_slice(chosen);
    }
    indices.sort_unstable();
    Ok(SampleSet {
        indices,
        target_size: m,
    })
}
