//! End-to-end experiment: problems, grids, meta-datasets, embeddings and
//! meta-classification, with every artifact written below one directory.
//!
//! Random streams below `RngStream::new(root_seed)`:
//!
//! - `("instance", p) / ("repeat", r)`: the split (`("split", 0)`) and the
//!   grid (`("grid", 0)`) of repeat `r` of problem `p`;
//! - `("tsne", v)`: t-SNE restarts on variant `v` (index into `A, N, R`);
//! - `("meta-eval", 0)`: learning-curve splits, shared by every
//!   representation.

pub mod config;
pub mod manifest;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{
    embed_mds, embed_tsne, embedding_file_stem, load_embedding, write_embedding_csv, Embedding2D, EmbeddingMethod,
    EmbeddingSidecar,
};
use crate::error::{Error, Result};
use crate::meta::{assemble_meta, evaluate_grid, load_meta_csv, meta_file_name, write_meta_csv, AccuracyGrid, MetaDataset, Variant};
use crate::metaeval::{confusion, learning_curve, write_confusion, write_learning_curves, ConfusionMatrix, CurveRecord, LearningCurve};
use crate::plot::render_scatter;
use crate::rng::RngStream;
use crate::synth::builtin_suite;
use crate::tabular::{instance_id, load_problem_csv, subject_split, ClassificationProblem, DatasetInstance};

pub use config::{MetaEvalConfig, PipelineConfig, ProblemSource, Representation, BUILTIN_SUITE};
pub use manifest::{ArtifactRecord, ArtifactStore, RunManifest, StageTiming, MANIFEST_FILE};

pub const GRID_DIR: &str = "grids";
pub const LEARNING_CURVE_FILE: &str = "learning_curve.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";

pub fn grid_file(instance: &str) -> String {
    format!("{GRID_DIR}/{instance}.json")
}

/// Loads or generates the configured problems.
pub fn load_problems(cfg: &PipelineConfig) -> Result<Vec<ClassificationProblem>> {
    let problems = match &cfg.problems {
        ProblemSource::BuiltinSuite => builtin_suite(cfg.root_seed)?,
        ProblemSource::Files(files) => files.iter().map(load_problem_csv).collect::<Result<Vec<_>>>()?,
    };
    for (i, p) in problems.iter().enumerate() {
        if problems[..i].iter().any(|q| q.name() == p.name()) {
            return Err(Error::Invalid(format!("two problems are named `{}`", p.name())));
        }
    }
    Ok(problems)
}

/// Content digest of a problem's data.
pub fn problem_digest(p: &ClassificationProblem) -> String {
    let mut h = Sha256::new();
    h.update(p.name().as_bytes());
    h.update((p.n_samples() as u64).to_le_bytes());
    h.update((p.dim() as u64).to_le_bytes());
    for v in p.features().as_slice() {
        h.update(v.to_bits().to_le_bytes());
    }
    for (&l, &s) in p.labels().iter().zip(p.subjects()) {
        h.update((l as u64).to_le_bytes());
        h.update((s as u64).to_le_bytes());
    }
    for name in p.class_names().iter().chain(p.subject_names()) {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn instance_stream(cfg: &PipelineConfig, problem_index: usize, repeat: usize) -> RngStream {
    RngStream::new(cfg.root_seed)
        .derive("instance", problem_index as u64)
        .derive("repeat", repeat as u64)
}

/// The `repeats` subject splits of every problem, problem-major.
pub fn make_instances(cfg: &PipelineConfig, problems: &[ClassificationProblem]) -> Result<Vec<(usize, DatasetInstance)>> {
    let mut out = Vec::with_capacity(problems.len() * cfg.repeats);
    for (p, problem) in problems.iter().enumerate() {
        for r in 0..cfg.repeats {
            let inst = subject_split(problem, cfg.train_fraction, r, &instance_stream(cfg, p, r).derive("split", 0))
                .map_err(|e| e.in_stage("evaluate", Some(&instance_id(problem.name(), r))))?;
            out.push((p, inst));
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct CachedGrid {
    key: String,
    grid: AccuracyGrid,
}

#[derive(Serialize)]
struct CacheKey<'a> {
    problem: &'a str,
    problem_index: usize,
    repeat: usize,
    root_seed: u64,
    train_fraction: f64,
    train_sizes: &'a [usize],
    test_size: usize,
    classifiers: &'a [crate::classifiers::ClassifierSpec],
}

fn cache_key(cfg: &PipelineConfig, problem_digest: &str, p: usize, r: usize) -> String {
    let key = CacheKey {
        problem: problem_digest,
        problem_index: p,
        repeat: r,
        root_seed: cfg.root_seed,
        train_fraction: cfg.train_fraction,
        train_sizes: &cfg.train_sizes,
        test_size: cfg.test_size,
        classifiers: &cfg.classifiers,
    };
    manifest::sha256_hex(serde_json::to_string(&key).expect("key serializes").as_bytes())
}

fn read_cached(store: &ArtifactStore, rel: &str, key: &str) -> Option<AccuracyGrid> {
    let text = std::fs::read_to_string(store.path(rel)).ok()?;
    let cached: CachedGrid = serde_json::from_str(&text).ok()?;
    (cached.key == key && cached.grid.validate().is_ok()).then_some(cached.grid)
}

/// Accuracy grids of every instance, reusing cache entries whose key
/// matches the current config and problem data.
pub fn evaluate_stage(cfg: &PipelineConfig, problems: &[ClassificationProblem], store: &mut ArtifactStore) -> Result<Vec<AccuracyGrid>> {
    let instances = make_instances(cfg, problems)?;
    let digests: Vec<String> = problems.iter().map(problem_digest).collect();
    let store_ref = &*store;
    let results: Vec<Result<(AccuracyGrid, bool)>> = instances
        .par_iter()
        .map(|(p, inst)| {
            let id = inst.id();
            let rel = grid_file(&id);
            let key = cache_key(cfg, &digests[*p], *p, inst.repeat_index);
            if let Some(grid) = read_cached(store_ref, &rel, &key) {
                log::debug!("reusing cached grid {id}");
                return Ok((grid, false));
            }
            let started = Instant::now();
            let stream = instance_stream(cfg, *p, inst.repeat_index).derive("grid", 0);
            let grid = evaluate_grid(inst, &problems[*p], &cfg.classifiers, &cfg.train_sizes, cfg.test_size, &stream)
                .map_err(|e| e.in_stage("evaluate", Some(&id)))?;
            let path = store_ref.path(&rel);
            let write = || -> Result<()> {
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                let text = serde_json::to_string_pretty(&CachedGrid { key, grid: grid.clone() })?;
                std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
            };
            write().map_err(|e| e.in_stage("evaluate", Some(&id)))?;
            log::info!("evaluated {id} in {:.1}s", started.elapsed().as_secs_f64());
            Ok((grid, true))
        })
        .collect();
    let mut grids = Vec::with_capacity(results.len());
    let mut first_error = None;
    for ((_, inst), res) in instances.iter().zip(results) {
        match res {
            Ok((grid, written)) => {
                let rel = grid_file(&inst.id());
                if written {
                    store.written_externally("evaluate", &rel);
                } else {
                    store.reused("evaluate", &rel);
                }
                grids.push(grid);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(grids),
    }
}

/// Grids of every instance from the cache; missing or stale entries are
/// an error.
pub fn cached_grids(cfg: &PipelineConfig, problems: &[ClassificationProblem], store: &mut ArtifactStore) -> Result<Vec<AccuracyGrid>> {
    let instances = make_instances(cfg, problems)?;
    let mut grids = Vec::with_capacity(instances.len());
    for (p, inst) in &instances {
        let id = inst.id();
        let rel = grid_file(&id);
        let key = cache_key(cfg, &problem_digest(&problems[*p]), *p, inst.repeat_index);
        let grid = read_cached(store, &rel, &key).ok_or_else(|| {
            Error::Invalid(format!("no up-to-date cached grid at {rel}; run the evaluate stage first"))
                .in_stage("meta", Some(&id))
        })?;
        store.reused("evaluate", &rel);
        grids.push(grid);
    }
    Ok(grids)
}

pub fn meta_stage(cfg: &PipelineConfig, grids: &[AccuracyGrid], store: &mut ArtifactStore) -> Result<Vec<MetaDataset>> {
    let mut metas = Vec::with_capacity(cfg.variants.len());
    for &v in &cfg.variants {
        let meta = assemble_meta(grids, v).map_err(|e| e.in_stage("meta", None))?;
        let mut buf = Vec::new();
        write_meta_csv(&meta, &mut buf)?;
        store.write("meta", &meta_file_name(v), &buf)?;
        metas.push(meta);
    }
    Ok(metas)
}

pub fn load_meta_stage(cfg: &PipelineConfig, store: &mut ArtifactStore) -> Result<Vec<MetaDataset>> {
    cfg.variants
        .iter()
        .map(|&v| {
            let rel = meta_file_name(v);
            let meta = load_meta_csv(store.path(&rel), v).map_err(|e| e.in_stage("embed", None))?;
            store.reused("meta", &rel);
            Ok(meta)
        })
        .collect()
}

fn variant_position(v: Variant) -> u64 {
    Variant::ALL.iter().position(|&x| x == v).expect("listed") as u64
}

/// t-SNE and MDS embeddings of every meta-dataset, as CSV, sidecar JSON
/// and SVG.
pub fn embed_stage(cfg: &PipelineConfig, metas: &[MetaDataset], store: &mut ArtifactStore) -> Result<Vec<Embedding2D>> {
    let root = RngStream::new(cfg.root_seed);
    let mut out = Vec::with_capacity(2 * metas.len());
    for meta in metas {
        for method in EmbeddingMethod::ALL {
            let started = Instant::now();
            let tag = format!("{method}/{}", meta.variant);
            let e = match method {
                EmbeddingMethod::Tsne => embed_tsne(meta, &cfg.tsne, &root.derive("tsne", variant_position(meta.variant))),
                EmbeddingMethod::Mds => embed_mds(meta),
            }
            .map_err(|e| e.in_stage("embed", Some(&tag)))?;
            let stem = embedding_file_stem(method, meta.variant);
            let mut buf = Vec::new();
            write_embedding_csv(&e, &mut buf)?;
            store.write("embed", &format!("{stem}.csv"), &buf)?;
            let config = (method == EmbeddingMethod::Tsne).then_some(&cfg.tsne);
            let sidecar = serde_json::to_string_pretty(&EmbeddingSidecar::for_embedding(&e, config))? + "\n";
            store.write("embed", &format!("{stem}.json"), sidecar.as_bytes())?;
            store.write("embed", &format!("{stem}.svg"), render_scatter(&e, &e.labels).as_bytes())?;
            log::info!("embedded {tag} in {:.1}s", started.elapsed().as_secs_f64());
            out.push(e);
        }
    }
    Ok(out)
}

pub fn load_embeddings_stage(cfg: &PipelineConfig, store: &mut ArtifactStore) -> Result<Vec<Embedding2D>> {
    let mut out = Vec::new();
    for &v in &cfg.variants {
        for method in EmbeddingMethod::ALL {
            let stem = embedding_file_stem(method, v);
            let e = load_embedding(store.path(&format!("{stem}.csv"))).map_err(|e| e.in_stage("classify", None))?;
            for ext in ["csv", "json", "svg"] {
                let rel = format!("{stem}.{ext}");
                if store.path(&rel).exists() {
                    store.reused("embed", &rel);
                }
            }
            out.push(e);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveSet {
    pub representation: Representation,
    pub variant: Variant,
    pub curve: LearningCurve,
}

/// Learning curves on the t-SNE, MDS and raw representation of every
/// variant, plus the configured confusion matrix.
pub fn classify_stage(
    cfg: &PipelineConfig,
    metas: &[MetaDataset],
    embeddings: &[Embedding2D],
    store: &mut ArtifactStore,
) -> Result<(Vec<CurveSet>, ConfusionMatrix)> {
    let stream = RngStream::new(cfg.root_seed).derive("meta-eval", 0);
    let me = &cfg.meta_eval;
    let mut curves = Vec::new();
    for meta in metas {
        let labels = meta.label_indices();
        for method in EmbeddingMethod::ALL {
            let e = embeddings
                .iter()
                .find(|e| e.method == method && e.source_variant == meta.variant)
                .ok_or_else(|| Error::Invalid(format!("missing {method} embedding of {}", meta.variant)).in_stage("classify", None))?;
            if e.instance_ids != meta.instance_ids {
                return Err(Error::Invalid(format!("{method} embedding of {} does not match its meta-dataset", meta.variant))
                    .in_stage("classify", None));
            }
            let curve = learning_curve(&e.coords, &labels, &me.sizes, me.repeats, &stream)
                .map_err(|e| e.in_stage("classify", None))?;
            curves.push(CurveSet {
                representation: method.into(),
                variant: meta.variant,
                curve,
            });
        }
        let curve = learning_curve(&meta.rows, &labels, &me.sizes, me.repeats, &stream).map_err(|e| e.in_stage("classify", None))?;
        curves.push(CurveSet {
            representation: Representation::Raw,
            variant: meta.variant,
            curve,
        });
    }
    let records: Vec<CurveRecord<'_>> = curves
        .iter()
        .map(|c| CurveRecord {
            representation: c.representation.as_str(),
            variant: c.variant.as_str(),
            curve: &c.curve,
        })
        .collect();
    let mut buf = Vec::new();
    write_learning_curves(&records, &mut buf)?;
    store.write("classify", LEARNING_CURVE_FILE, &buf)?;

    let chosen = curves
        .iter()
        .find(|c| c.representation == me.confusion_representation && c.variant == me.confusion_variant)
        .expect("validated config");
    let meta = metas.iter().find(|m| m.variant == me.confusion_variant).expect("validated config");
    let (truth, pred) = chosen
        .curve
        .pooled_predictions(&meta.label_indices(), me.confusion_size)
        .expect("validated config");
    let matrix = confusion(&truth, &pred, &meta.class_names()).map_err(|e| e.in_stage("classify", None))?;
    let mut buf = Vec::new();
    write_confusion(&matrix, &mut buf)?;
    store.write("classify", CONFUSION_FILE, &buf)?;
    Ok((curves, matrix))
}

/// Everything a full run produced, in memory.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub manifest: RunManifest,
    pub grids: Vec<AccuracyGrid>,
    pub metas: Vec<MetaDataset>,
    pub embeddings: Vec<Embedding2D>,
    pub curves: Vec<CurveSet>,
    pub confusion: ConfusionMatrix,
}

impl PipelineRun {
    pub fn curve(&self, representation: Representation, variant: Variant) -> Option<&LearningCurve> {
        self.curves
            .iter()
            .find(|c| c.representation == representation && c.variant == variant)
            .map(|c| &c.curve)
    }

    pub fn meta(&self, variant: Variant) -> Option<&MetaDataset> {
        self.metas.iter().find(|m| m.variant == variant)
    }

    pub fn embedding(&self, method: EmbeddingMethod, variant: Variant) -> Option<&Embedding2D> {
        self.embeddings.iter().find(|e| e.method == method && e.source_variant == variant)
    }
}

fn timed<T>(stages: &mut Vec<StageTiming>, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let started = Instant::now();
    let out = f()?;
    stages.push(StageTiming {
        stage: name.to_string(),
        seconds: started.elapsed().as_secs_f64(),
    });
    Ok(out)
}

/// Runs every stage and writes the manifest. On failure the files written
/// by this run are removed and the error names the failing stage.
pub fn execute(cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let mut store = ArtifactStore::new(&cfg.output_dir)?;
    let stale = store.path(MANIFEST_FILE);
    if stale.exists() {
        std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }
    let mut stages = Vec::new();
    let result = (|| {
        let problems = timed(&mut stages, "load", || load_problems(cfg).map_err(|e| e.in_stage("load", None)))?;
        let grids = timed(&mut stages, "evaluate", || evaluate_stage(cfg, &problems, &mut store))?;
        drop(problems);
        let metas = timed(&mut stages, "meta", || meta_stage(cfg, &grids, &mut store))?;
        let embeddings = timed(&mut stages, "embed", || embed_stage(cfg, &metas, &mut store))?;
        let (curves, confusion) = timed(&mut stages, "classify", || classify_stage(cfg, &metas, &embeddings, &mut store))?;
        let manifest = store.manifest(cfg, stages.clone()).map_err(|e| e.in_stage("manifest", None))?;
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        let path = store.path(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e).in_stage("manifest", None))?;
        Ok(PipelineRun {
            manifest,
            grids,
            metas,
            embeddings,
            curves,
            confusion,
        })
    })();
    if result.is_err() {
        store.discard_written();
    }
    result
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    execute(cfg).map(|r| r.manifest)
}

/// A pipeline stage that can be run on its own against the output
/// directory of an earlier run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Evaluate,
    Meta,
    Embed,
    Classify,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Evaluate, Stage::Meta, Stage::Embed, Stage::Classify];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Evaluate => "evaluate",
            Stage::Meta => "meta",
            Stage::Embed => "embed",
            Stage::Classify => "classify",
        }
    }

    /// The stage that produces an artifact, judged by its name.
    pub fn of_artifact(rel: &str) -> Option<Stage> {
        if rel.starts_with(&format!("{GRID_DIR}/")) {
            Some(Stage::Evaluate)
        } else if rel.starts_with("meta_") {
            Some(Stage::Meta)
        } else if rel.starts_with("embedding_") {
            Some(Stage::Embed)
        } else if rel == LEARNING_CURVE_FILE || rel == CONFUSION_FILE {
            Some(Stage::Classify)
        } else {
            None
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Runs one stage from the artifacts of the stages before it. Once it
/// succeeds, outputs of later stages are deleted, since they no longer
/// match, and outputs of earlier stages are listed in the new manifest as
/// they are.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<RunManifest> {
    cfg.validate()?;
    let mut store = ArtifactStore::new(&cfg.output_dir)?;
    let stale = store.path(MANIFEST_FILE);
    if stale.exists() {
        std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }
    let mut existing = std::collections::BTreeSet::new();
    manifest::collect_files(store.root(), store.root(), &mut existing)?;
    let mut stages = Vec::new();
    let result = timed(&mut stages, stage.as_str(), || match stage {
        Stage::Evaluate => {
            let problems = load_problems(cfg).map_err(|e| e.in_stage("load", None))?;
            evaluate_stage(cfg, &problems, &mut store).map(drop)
        }
        Stage::Meta => {
            let problems = load_problems(cfg).map_err(|e| e.in_stage("load", None))?;
            let grids = cached_grids(cfg, &problems, &mut store)?;
            meta_stage(cfg, &grids, &mut store).map(drop)
        }
        Stage::Embed => {
            let metas = load_meta_stage(cfg, &mut store)?;
            embed_stage(cfg, &metas, &mut store).map(drop)
        }
        Stage::Classify => {
            let metas = load_meta_stage(cfg, &mut store)?;
            let embeddings = load_embeddings_stage(cfg, &mut store)?;
            classify_stage(cfg, &metas, &embeddings, &mut store).map(drop)
        }
    })
    .and_then(|()| {
        for rel in &existing {
            match Stage::of_artifact(rel) {
                Some(s) if s < stage && !store.is_recorded(rel) => store.reused(s.as_str(), rel),
                Some(s) if s > stage => {
                    let path = store.path(rel);
                    std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                }
                _ => {}
            }
        }
        let manifest = store.manifest(cfg, stages.clone()).map_err(|e| e.in_stage("manifest", None))?;
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        let path = store.path(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e).in_stage("manifest", None))?;
        Ok(manifest)
    });
    if result.is_err() {
        store.discard_written();
    }
    result
}
