use std::path::{Path, PathBuf};

use metasim::embedding::{load_embedding, EmbeddingMethod, Embedding2D};
use metasim::meta::{load_meta_csv, meta_file_name, Variant};
use metasim::pipeline::{execute, run_pipeline, run_stage, PipelineConfig, ProblemSource, Representation, RunManifest, Stage, GRID_DIR, MANIFEST_FILE};
use metasim::plot::render_scatter;
use metasim::synth::{generate_problem, CovarianceStyle, ProblemSpec};
use metasim::tabular::{save_problem_csv, ClassificationProblem};
use metasim::{Error, Matrix, RngStream};

fn small_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::from_json(
        r#"{"repeats": 2, "train_sizes": [20, 50], "test_size": 200,
            "tsne": {"perplexity": 3, "restarts": 2, "iterations": 300},
            "meta_eval": {"sizes": [4, 8], "repeats": 2, "confusion_size": 8}}"#,
    )
    .unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn files_under(root: &Path) -> Vec<String> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    let mut out = Vec::new();
    if root.exists() {
        walk(root, root, &mut out);
    }
    out.sort();
    out
}

fn listed(m: &RunManifest) -> Vec<String> {
    let mut v: Vec<String> = m.artifacts.iter().map(|a| a.path.clone()).collect();
    v.push(MANIFEST_FILE.to_string());
    v.sort();
    v
}

#[test]
fn small_run_is_complete_and_verifiable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = execute(&cfg).unwrap();
    let manifest = RunManifest::load(dir.path()).unwrap();
    assert_eq!(manifest, run.manifest);
    manifest.verify(dir.path()).unwrap();
    assert_eq!(files_under(dir.path()), listed(&manifest));

    assert_eq!(run.grids.len(), 12);
    assert!(run.grids.iter().all(|g| g.shape() == (2, 6)));
    let grids = files_under(dir.path()).into_iter().filter(|f| f.starts_with(&format!("{GRID_DIR}/"))).count();
    assert_eq!(grids, 12);
    for v in Variant::ALL {
        let meta = load_meta_csv(dir.path().join(meta_file_name(v)), v).unwrap();
        assert_eq!(meta.n(), 12);
        assert_eq!(&meta, run.meta(v).unwrap());
    }
    let embeddings: Vec<String> = files_under(dir.path()).into_iter().filter(|f| f.starts_with("embedding_") && f.ends_with(".csv")).collect();
    assert_eq!(embeddings.len(), 6);
    assert_eq!(run.curves.len(), 9);
    for rep in [Representation::Tsne, Representation::Mds, Representation::Raw] {
        for v in Variant::ALL {
            assert_eq!(run.curve(rep, v).unwrap().sizes, [4, 8]);
        }
    }
    assert_eq!(run.confusion.class_names.len(), 6);
}

#[test]
fn tampering_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_pipeline(&small_config(dir.path())).unwrap();
    let target = dir.path().join(meta_file_name(Variant::R));
    let mut bytes = std::fs::read(&target).unwrap();
    bytes.push(b'\n');
    std::fs::write(&target, bytes).unwrap();
    assert!(manifest.verify(dir.path()).is_err());
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run_pipeline(&small_config(a.path())).unwrap();
    let mb = run_pipeline(&small_config(b.path())).unwrap();
    assert_eq!(ma.digests(), mb.digests());
    for f in files_under(a.path()).iter().filter(|f| f.ends_with(".csv")) {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let mut other = small_config(b.path());
    other.root_seed += 1;
    assert_ne!(run_pipeline(&other).unwrap().digests(), ma.digests());
}

#[test]
fn stages_one_at_a_time_match_a_full_run() {
    let (full, staged) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let whole = run_pipeline(&small_config(full.path())).unwrap();
    let cfg = small_config(staged.path());
    let mut last = None;
    for stage in Stage::ALL {
        let m = run_stage(&cfg, stage).unwrap();
        m.verify(staged.path()).unwrap();
        last = Some(m);
    }
    assert_eq!(last.unwrap().digests(), whole.digests());

    // re-running an early stage drops everything downstream of it
    let m = run_stage(&cfg, Stage::Meta).unwrap();
    m.verify(staged.path()).unwrap();
    assert!(files_under(staged.path()).iter().all(|f| !f.starts_with("embedding_") && !f.ends_with("confusion.csv")));
    assert!(run_stage(&cfg, Stage::Classify).is_err());
    // the failed stage leaves the earlier outputs in place
    let mut left = files_under(staged.path());
    left.push(MANIFEST_FILE.to_string());
    left.sort();
    assert_eq!(left, listed(&m));
}

#[test]
fn embed_without_meta_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_stage(&small_config(dir.path()), Stage::Embed).unwrap_err();
    assert!(err.to_string().contains("stage `embed`"), "{err}");
}

#[test]
fn late_failure_removes_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    // 12 meta-samples cannot train on 20
    cfg.meta_eval.sizes = vec![4, 20];
    cfg.meta_eval.confusion_size = 4;
    let err = execute(&cfg).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage, .. } if stage == "classify"), "{err}");
    assert_eq!(files_under(dir.path()), Vec::<String>::new());
}

/// Subjects 0 and 1 only hold class 0, subjects 2 and 3 only class 1, so a
/// half split can leave a training side with a single class.
fn segregated_problem() -> ClassificationProblem {
    let mut rows = Vec::new();
    let (mut labels, mut subjects) = (Vec::new(), Vec::new());
    let mut rng = RngStream::new(70).rng();
    for s in 0..4 {
        for _ in 0..60 {
            rows.push(vec![rand::Rng::random::<f64>(&mut rng) + (s / 2) as f64, rand::Rng::random::<f64>(&mut rng)]);
            labels.push(s / 2);
            subjects.push(s);
        }
    }
    ClassificationProblem::new(
        "segregated",
        Matrix::from_rows(&rows).unwrap(),
        labels,
        subjects,
        (0..4).map(|s| format!("s{s}")).collect(),
        vec!["a".into(), "b".into()],
    )
    .unwrap()
}

#[test]
fn instance_failure_names_stage_and_instance() {
    let inputs = tempfile::tempdir().unwrap();
    let good = generate_problem(
        &ProblemSpec {
            name: "good".into(),
            n_subjects: 6,
            samples_per_subject: 40,
            n_classes: 2,
            dim: 3,
            class_separation: 2.0,
            subject_shift: 0.2,
            covariance: CovarianceStyle::Spherical,
        },
        &RngStream::new(71),
    )
    .unwrap();
    let paths: Vec<PathBuf> = ["good", "segregated"].iter().map(|n| inputs.path().join(format!("{n}.csv"))).collect();
    save_problem_csv(&good, &paths[0]).unwrap();
    save_problem_csv(&segregated_problem(), &paths[1]).unwrap();

    let out = tempfile::tempdir().unwrap();
    let mut cfg = small_config(out.path());
    cfg.problems = ProblemSource::Files(paths);
    cfg.train_fraction = 0.5;
    cfg.repeats = 8;
    let err = execute(&cfg).unwrap_err();
    match &err {
        Error::Stage { stage, instance, .. } => {
            assert_eq!(stage, "evaluate");
            assert!(instance.as_deref().is_some_and(|i| i.starts_with("segregated-r")), "{err}");
        }
        other => panic!("untagged error {other}"),
    }
    assert_eq!(files_under(out.path()), Vec::<String>::new());
}

fn svg_counts(svg: &str) -> (usize, usize) {
    let doc = roxmltree::Document::parse(svg).unwrap();
    let count = |class: &str| doc.descendants().filter(|n| n.attribute("class") == Some(class)).count();
    (count("marker"), count("legend-entry"))
}

#[test]
fn scatter_of_120_points_has_120_markers_and_6_legend_entries() {
    let mut rng = RngStream::new(80).rng();
    let rows: Vec<[f64; 2]> = (0..120).map(|_| [rand::Rng::random::<f64>(&mut rng), rand::Rng::random::<f64>(&mut rng)]).collect();
    let labels: Vec<String> = (0..120).map(|i| format!("problem <{}> & co", i / 20)).collect();
    let e = Embedding2D {
        method: EmbeddingMethod::Tsne,
        source_variant: Variant::N,
        coords: Matrix::from_rows(&rows).unwrap(),
        instance_ids: (0..120).map(|i| format!("p{}-r{:02}", i / 20, i % 20)).collect(),
        labels: labels.clone(),
        seed: Some(1),
        error: Some(0.5),
    };
    assert_eq!(svg_counts(&render_scatter(&e, &labels)), (120, 6));
}

#[test]
fn written_plots_are_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&small_config(dir.path())).unwrap();
    let svgs: Vec<String> = files_under(dir.path()).into_iter().filter(|f| f.ends_with(".svg")).collect();
    assert_eq!(svgs.len(), 6);
    for f in svgs {
        let text = std::fs::read_to_string(dir.path().join(&f)).unwrap();
        assert_eq!(svg_counts(&text), (12, 6), "{f}");
        let e = load_embedding(dir.path().join(f.replace(".svg", ".csv"))).unwrap();
        assert_eq!(e.n(), 12);
    }
}
