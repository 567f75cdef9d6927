//! Accuracy grids and the three meta-dataset variants.
//!
//! Each dataset instance yields a grid of test accuracies, one row per
//! training size and one column per classifier. A grid collapses to a
//! single fingerprint row by transforming every size row (identity, z-score
//! or average rank) and then averaging the transformed rows.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifiers::{self, accuracy, ClassifierSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngStream;
use crate::tabular::{balanced_subsample, fmt_real, ClassificationProblem, DatasetInstance};

pub const DEFAULT_TRAIN_SIZES: [usize; 5] = [100, 300, 1000, 3000, 10000];
pub const DEFAULT_TEST_SIZE: usize = 10000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Raw accuracies.
    A,
    /// Accuracies standardized per row.
    N,
    /// Average ranks per row, 1 = best.
    R,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::A, Variant::N, Variant::R];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::A => "A",
            Variant::N => "N",
            Variant::R => "R",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Variant::A),
            "N" | "n" => Ok(Variant::N),
            "R" | "r" => Ok(Variant::R),
            _ => Err(Error::Parse(format!("unknown meta-dataset variant `{s}` (expected A, N or R)"))),
        }
    }
}

/// Test accuracies of one instance: `values[size][classifier]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyGrid {
    pub instance_id: String,
    pub problem: String,
    pub repeat_index: usize,
    pub train_sizes: Vec<usize>,
    pub classifiers: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl AccuracyGrid {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.train_sizes.len() || self.values.is_empty() {
            return Err(Error::Invalid(format!(
                "grid {} has {} rows for {} training sizes",
                self.instance_id,
                self.values.len(),
                self.train_sizes.len()
            )));
        }
        for row in &self.values {
            if row.len() != self.classifiers.len() {
                return Err(Error::Invalid(format!(
                    "grid {} row has {} entries for {} classifiers",
                    self.instance_id,
                    row.len(),
                    self.classifiers.len()
                )));
            }
            if row.iter().any(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
                return Err(Error::Invalid(format!("grid {} has an entry outside [0, 1]", self.instance_id)));
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.values.len(), self.classifiers.len())
    }
}

/// Trains every classifier at every size and scores it on one shared
/// balanced test draw from the test subjects.
///
/// Streams used below `rng`: `("test", 0)` for the test draw and
/// `("train", i)` for the training draw at the i-th size.
pub fn evaluate_grid(
    instance: &DatasetInstance,
    problem: &ClassificationProblem,
    specs: &[ClassifierSpec],
    sizes: &[usize],
    test_size: usize,
    rng: &RngStream,
) -> Result<AccuracyGrid> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid(format!("training sizes {sizes:?} must be strictly ascending")));
    }
    let test = balanced_subsample(problem, &instance.test_subjects, test_size, &rng.derive("test", 0))?;
    let test_x = problem.features().select_rows(&test.indices);
    let test_y: Vec<usize> = test.indices.iter().map(|&i| problem.labels()[i]).collect();

    let mut values = Vec::with_capacity(sizes.len());
    for (si, &m) in sizes.iter().enumerate() {
        let train = balanced_subsample(problem, &instance.train_subjects, m, &rng.derive("train", si as u64))?;
        let train_x = problem.features().select_rows(&train.indices);
        let train_y: Vec<usize> = train.indices.iter().map(|&i| problem.labels()[i]).collect();
        let mut row = Vec::with_capacity(specs.len());
        for spec in specs {
            let model = classifiers::fit(spec, &train_x, &train_y)?;
            let pred = model.predict(&test_x)?;
            row.push(accuracy(&pred, &test_y)?);
        }
        values.push(row);
    }
    Ok(AccuracyGrid {
        instance_id: instance.id(),
        problem: instance.problem_name.clone(),
        repeat_index: instance.repeat_index,
        train_sizes: sizes.to_vec(),
        classifiers: specs.iter().map(|s| s.kind().as_str().to_string()).collect(),
        values,
    })
}

/// Ranks with 1 for the largest value; tied values share the mean of the
/// positions they occupy.
pub fn rank_row(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Zero mean, unit population variance; near-constant rows map to zeros.
pub fn znorm_row(values: &[f64]) -> Vec<f64> {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
    let sd = var.sqrt();
    if !(sd >= 1e-12) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / sd).collect()
}

pub fn transform_row(values: &[f64], variant: Variant) -> Vec<f64> {
    match variant {
        Variant::A => values.to_vec(),
        Variant::N => znorm_row(values),
        Variant::R => rank_row(values),
    }
}

/// Transform each size row, then average over sizes.
pub fn collapse_grid(grid: &AccuracyGrid, variant: Variant) -> Vec<f64> {
    let k = grid.classifiers.len();
    let mut out = vec![0.0; k];
    for row in &grid.values {
        out.iter_mut().zip(transform_row(row, variant)).for_each(|(o, v)| *o += v);
    }
    let n = grid.values.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// `n x k` meta-dataset: one fingerprint row per dataset instance.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaDataset {
    pub variant: Variant,
    pub rows: Matrix,
    pub meta_labels: Vec<String>,
    pub instance_ids: Vec<String>,
}

impl MetaDataset {
    pub fn n(&self) -> usize {
        self.rows.rows()
    }

    /// Distinct meta-labels in order of first appearance.
    pub fn class_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for l in &self.meta_labels {
            if !names.contains(l) {
                names.push(l.clone());
            }
        }
        names
    }

    /// Meta-labels as indices into [`MetaDataset::class_names`].
    pub fn label_indices(&self) -> Vec<usize> {
        let names = self.class_names();
        self.meta_labels
            .iter()
            .map(|l| names.iter().position(|n| n == l).expect("present"))
            .collect()
    }
}

/// Rows ordered by problem (first appearance among `grids`), then repeat.
pub fn assemble_meta(grids: &[AccuracyGrid], variant: Variant) -> Result<MetaDataset> {
    let first = grids
        .first()
        .ok_or_else(|| Error::Invalid("cannot assemble a meta-dataset from zero grids".into()))?;
    for g in grids {
        g.validate()?;
        if g.shape() != first.shape() {
            return Err(Error::Invalid(format!(
                "grid {} has shape {:?}, expected {:?}",
                g.instance_id,
                g.shape(),
                first.shape()
            )));
        }
    }
    let mut problems: Vec<&str> = Vec::new();
    for g in grids {
        if !problems.contains(&g.problem.as_str()) {
            problems.push(&g.problem);
        }
    }
    let mut order: Vec<usize> = (0..grids.len()).collect();
    order.sort_by_key(|&i| {
        let p = problems.iter().position(|p| *p == grids[i].problem).expect("present");
        (p, grids[i].repeat_index)
    });
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| collapse_grid(&grids[i], variant)).collect();
    Ok(MetaDataset {
        variant,
        rows: Matrix::from_rows(&rows)?,
        meta_labels: order.iter().map(|&i| grids[i].problem.clone()).collect(),
        instance_ids: order.iter().map(|&i| grids[i].instance_id.clone()).collect(),
    })
}

pub fn meta_file_name(variant: Variant) -> String {
    format!("meta_{variant}.csv")
}

/// CSV layout `instance_id,problem,c0,...,c{k-1}`.
pub fn write_meta_csv<W: Write>(meta: &MetaDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["instance_id".to_string(), "problem".to_string()];
    header.extend((0..meta.rows.cols()).map(|j| format!("c{j}")));
    w.write_record(&header)?;
    for i in 0..meta.n() {
        let mut rec = vec![meta.instance_ids[i].clone(), meta.meta_labels[i].clone()];
        rec.extend(meta.rows.row(i).iter().map(|&v| fmt_real(v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn read_meta_csv<R: std::io::Read>(reader: R, variant: Variant) -> Result<MetaDataset> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "instance_id" || &header[1] != "problem" {
        return Err(Error::Parse("meta CSV header must start with instance_id,problem".into()));
    }
    let k = header.len() - 2;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        ids.push(rec[0].to_string());
        labels.push(rec[1].to_string());
        for field in rec.iter().skip(2) {
            data.push(field.parse::<f64>().map_err(|_| {
                Error::Parse(format!("meta CSV row {}: `{field}` is not a number", r + 2))
            })?);
        }
    }
    Ok(MetaDataset {
        variant,
        rows: Matrix::new(ids.len(), k, data)?,
        meta_labels: labels,
        instance_ids: ids,
    })
}

pub fn load_meta_csv(path: impl AsRef<Path>, variant: Variant) -> Result<MetaDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_meta_csv(file, variant)
}
