//! Two-dimensional embeddings of meta-datasets.

pub mod mds;
pub mod tsne;

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::meta::{MetaDataset, Variant};
use crate::rng::RngStream;
use crate::tabular::fmt_real;

pub use mds::mds_embed;
pub use tsne::{calibrate_row, joint_probabilities, tsne_best, tsne_run, TsneConfig, TsneRun};

/// Symmetric matrix of Euclidean distances with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Wraps a full `n x n` matrix after checking symmetry, a zero diagonal
    /// and non-negative finite entries.
    pub fn from_square(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Invalid(format!("{} entries for a {n}x{n} distance matrix", values.len())));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::Invalid(format!("distance matrix diagonal entry {i} is nonzero")));
            }
            for j in 0..n {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                if !(a.is_finite() && a >= 0.0) {
                    return Err(Error::Invalid(format!("distance ({i}, {j}) = {a} is not a finite non-negative value")));
                }
                if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                    return Err(Error::Invalid(format!("distance matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(DistanceMatrix { n, values })
    }
}

/// Euclidean distances between the rows of `points`.
pub fn pairwise_distances(points: &Matrix) -> Result<DistanceMatrix> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::Invalid(format!("need at least 2 points for distances, got {n}")));
    }
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = squared_distance(points.row(i), points.row(j)).sqrt();
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, values })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMethod {
    Tsne,
    Mds,
}

impl EmbeddingMethod {
    pub const ALL: [EmbeddingMethod; 2] = [EmbeddingMethod::Tsne, EmbeddingMethod::Mds];

    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingMethod::Tsne => "tsne",
            EmbeddingMethod::Mds => "mds",
        }
    }
}

impl std::fmt::Display for EmbeddingMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmbeddingMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsne" => Ok(EmbeddingMethod::Tsne),
            "mds" => Ok(EmbeddingMethod::Mds),
            _ => Err(Error::Parse(format!("unknown embedding method `{s}` (expected tsne or mds)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding2D {
    pub method: EmbeddingMethod,
    pub source_variant: Variant,
    /// `n x 2`.
    pub coords: Matrix,
    pub instance_ids: Vec<String>,
    pub labels: Vec<String>,
    /// Seed token of the selected t-SNE run.
    pub seed: Option<u64>,
    /// Final KL divergence of the selected t-SNE run.
    pub error: Option<f64>,
}

impl Embedding2D {
    pub fn n(&self) -> usize {
        self.coords.rows()
    }
}

pub fn embed_mds(meta: &MetaDataset) -> Result<Embedding2D> {
    let coords = mds_embed(&pairwise_distances(&meta.rows)?)?;
    Ok(Embedding2D {
        method: EmbeddingMethod::Mds,
        source_variant: meta.variant,
        coords,
        instance_ids: meta.instance_ids.clone(),
        labels: meta.meta_labels.clone(),
        seed: None,
        error: None,
    })
}

pub fn embed_tsne(meta: &MetaDataset, config: &TsneConfig, rng: &RngStream) -> Result<Embedding2D> {
    tsne_best(meta, config, rng)
}

pub fn embedding_file_stem(method: EmbeddingMethod, variant: Variant) -> String {
    format!("embedding_{method}_{variant}")
}

/// CSV layout `instance_id,problem,x,y`.
pub fn write_embedding_csv<W: Write>(e: &Embedding2D, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["instance_id", "problem", "x", "y"])?;
    for i in 0..e.n() {
        w.write_record([
            e.instance_ids[i].clone(),
            e.labels[i].clone(),
            fmt_real(e.coords.get(i, 0)),
            fmt_real(e.coords.get(i, 1)),
        ])?;
    }
    w.flush().map_err(|err| Error::io("<csv writer>", err))?;
    Ok(())
}

/// Reads an embedding CSV; method, variant, seed and error come from the
/// caller (normally the sidecar).
pub fn read_embedding_csv<R: std::io::Read>(reader: R, method: EmbeddingMethod, variant: Variant) -> Result<Embedding2D> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["instance_id", "problem", "x", "y"] {
        return Err(Error::Parse("embedding CSV header must be instance_id,problem,x,y".into()));
    }
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        ids.push(rec[0].to_string());
        labels.push(rec[1].to_string());
        for field in [&rec[2], &rec[3]] {
            data.push(field.parse::<f64>().map_err(|_| {
                Error::Parse(format!("embedding CSV row {}: `{field}` is not a number", r + 2))
            })?);
        }
    }
    Ok(Embedding2D {
        method,
        source_variant: variant,
        coords: Matrix::new(ids.len(), 2, data)?,
        instance_ids: ids,
        labels,
        seed: None,
        error: None,
    })
}

/// Metadata written next to each embedding CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub method: EmbeddingMethod,
    pub variant: Variant,
    pub seed: Option<u64>,
    pub error: Option<f64>,
    pub config: Option<TsneConfig>,
}

impl EmbeddingSidecar {
    pub fn for_embedding(e: &Embedding2D, config: Option<&TsneConfig>) -> Self {
        EmbeddingSidecar {
            method: e.method,
            variant: e.source_variant,
            seed: e.seed,
            error: e.error,
            config: config.cloned(),
        }
    }
}

/// Loads `<stem>.csv`, taking metadata from `<stem>.json` when present and
/// otherwise from a file name of the form `embedding_<method>_<variant>`.
pub fn load_embedding(csv_path: impl AsRef<Path>) -> Result<Embedding2D> {
    let csv_path = csv_path.as_ref();
    let sidecar_path = csv_path.with_extension("json");
    let sidecar: Option<EmbeddingSidecar> = if sidecar_path.exists() {
        let text = std::fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };
    let (method, variant) = match &sidecar {
        Some(s) => (s.method, s.variant),
        None => {
            let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let parts: Vec<&str> = stem.split('_').collect();
            match parts.as_slice() {
                ["embedding", m, v] => (m.parse()?, v.parse()?),
                _ => (EmbeddingMethod::Tsne, Variant::A),
            }
        }
    };
    let file = std::fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut e = read_embedding_csv(file, method, variant)?;
    if let Some(s) = sidecar {
        e.seed = s.seed;
        e.error = s.error;
    }
    Ok(e)
}
