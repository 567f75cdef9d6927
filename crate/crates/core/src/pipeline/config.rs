use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::{default_classifiers, ClassifierSpec};
use crate::embedding::{EmbeddingMethod, TsneConfig};
use crate::error::{Error, Result};
use crate::meta::{Variant, DEFAULT_TEST_SIZE, DEFAULT_TRAIN_SIZES};
use crate::metaeval::{DEFAULT_META_REPEATS, DEFAULT_META_SIZES};

pub const BUILTIN_SUITE: &str = "builtin-suite";
pub const DEFAULT_ROOT_SEED: u64 = 2017;

/// Where the classification problems come from: the generated suite, or a
/// list of problem CSV files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSource", into = "RawSource")]
pub enum ProblemSource {
    BuiltinSuite,
    Files(Vec<PathBuf>),
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawSource {
    Name(String),
    Files(Vec<PathBuf>),
}

impl TryFrom<RawSource> for ProblemSource {
    type Error = String;
    fn try_from(raw: RawSource) -> std::result::Result<Self, String> {
        match raw {
            RawSource::Name(s) if s == BUILTIN_SUITE => Ok(ProblemSource::BuiltinSuite),
            RawSource::Name(s) => Err(format!("problems must be `{BUILTIN_SUITE}` or a list of CSV paths, got `{s}`")),
            RawSource::Files(f) => Ok(ProblemSource::Files(f)),
        }
    }
}

impl From<ProblemSource> for RawSource {
    fn from(p: ProblemSource) -> Self {
        match p {
            ProblemSource::BuiltinSuite => RawSource::Name(BUILTIN_SUITE.into()),
            ProblemSource::Files(f) => RawSource::Files(f),
        }
    }
}

/// Representation the confusion matrix is computed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Tsne,
    Mds,
    /// The full meta-dataset rows.
    Raw,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Tsne => "tsne",
            Representation::Mds => "mds",
            Representation::Raw => "raw",
        }
    }
}

impl From<EmbeddingMethod> for Representation {
    fn from(m: EmbeddingMethod) -> Self {
        match m {
            EmbeddingMethod::Tsne => Representation::Tsne,
            EmbeddingMethod::Mds => Representation::Mds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaEvalConfig {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub confusion_representation: Representation,
    pub confusion_variant: Variant,
    /// Training size whose repeats are pooled into the confusion matrix.
    pub confusion_size: usize,
}

impl Default for MetaEvalConfig {
    fn default() -> Self {
        MetaEvalConfig {
            sizes: DEFAULT_META_SIZES.to_vec(),
            repeats: DEFAULT_META_REPEATS,
            confusion_representation: Representation::Tsne,
            confusion_variant: Variant::N,
            confusion_size: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub root_seed: u64,
    pub problems: ProblemSource,
    pub repeats: usize,
    pub train_fraction: f64,
    pub train_sizes: Vec<usize>,
    pub test_size: usize,
    pub classifiers: Vec<ClassifierSpec>,
    pub variants: Vec<Variant>,
    pub tsne: TsneConfig,
    pub meta_eval: MetaEvalConfig,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            root_seed: DEFAULT_ROOT_SEED,
            problems: ProblemSource::BuiltinSuite,
            repeats: 20,
            train_fraction: 0.7,
            train_sizes: DEFAULT_TRAIN_SIZES.to_vec(),
            test_size: DEFAULT_TEST_SIZE,
            classifiers: default_classifiers(),
            variants: Variant::ALL.to_vec(),
            tsne: TsneConfig::default(),
            meta_eval: MetaEvalConfig::default(),
            output_dir: PathBuf::from("metasim-out"),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative problem paths are resolved against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let (ProblemSource::Files(files), Some(base)) = (&mut cfg.problems, path.parent()) {
            for f in files.iter_mut() {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::Invalid(m));
        if self.repeats == 0 {
            return invalid("repeats must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return invalid(format!("train_fraction {} must lie in (0, 1)", self.train_fraction));
        }
        if self.train_sizes.is_empty() || self.train_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return invalid(format!("train_sizes {:?} must be non-empty and strictly ascending", self.train_sizes));
        }
        if self.test_size == 0 {
            return invalid("test_size must be positive".into());
        }
        if self.classifiers.is_empty() {
            return invalid("at least one classifier is required".into());
        }
        if self.variants.is_empty() {
            return invalid("variants must be non-empty".into());
        }
        let mut seen = self.variants.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.variants.len() {
            return invalid("variants must not repeat".into());
        }
        if let ProblemSource::Files(f) = &self.problems {
            if f.is_empty() {
                return invalid("problem list is empty".into());
            }
        }
        let me = &self.meta_eval;
        if me.repeats == 0 || me.sizes.is_empty() || me.sizes.contains(&0) {
            return invalid("meta_eval needs positive sizes and at least one repeat".into());
        }
        if !me.sizes.contains(&me.confusion_size) {
            return invalid(format!("confusion_size {} is not one of meta_eval.sizes", me.confusion_size));
        }
        if !self.variants.contains(&me.confusion_variant) {
            return invalid(format!("confusion_variant {} is not among the variants", me.confusion_variant));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
