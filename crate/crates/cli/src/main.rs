use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use metasim::embedding::load_embedding;
use metasim::error::Error;
use metasim::pipeline::{execute, run_stage, PipelineConfig, Stage};
use metasim::plot::render_scatter;
use metasim::synth::builtin_suite;
use metasim::tabular::save_problem_csv;

#[derive(Parser)]
#[command(name = "metasim", version, about = "Similarity of classification problems from classifier accuracies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the built-in problem suite as problem CSVs.
    Synth {
        #[arg(long, default_value_t = metasim::pipeline::config::DEFAULT_ROOT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the accuracy grid of every problem instance.
    Evaluate(RunArgs),
    /// Assemble meta-datasets from cached grids.
    Meta(RunArgs),
    /// Embed the meta-datasets written by `meta`.
    Embed(RunArgs),
    /// Learning curves and confusion matrix from the written embeddings.
    Classify(RunArgs),
    /// Run every stage.
    Pipeline(RunArgs),
    /// Render an embedding CSV as an SVG scatter plot.
    Plot {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `root_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> metasim::error::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.root_seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Prefixes errors that do not already name a stage.
fn tagged<T>(stage: &str, r: metasim::error::Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => anyhow!("{e}"),
        other => anyhow!("stage `{stage}`: {other}"),
    })
}

fn synth(seed: u64, out: &Path) -> Result<()> {
    let problems = tagged("synth", builtin_suite(seed))?;
    std::fs::create_dir_all(out).map_err(|e| anyhow!("stage `synth`: {}: {e}", out.display()))?;
    for p in &problems {
        let path = out.join(format!("{}.csv", p.name()));
        tagged("synth", save_problem_csv(p, &path))?;
        println!("{} ({} samples, {} subjects, {} classes, {} features)", path.display(), p.n_samples(), p.n_subjects(), p.n_classes(), p.dim());
    }
    Ok(())
}

fn stage(args: &RunArgs, stage: Stage) -> Result<()> {
    let cfg = tagged(stage.as_str(), args.load())?;
    let manifest = tagged(stage.as_str(), run_stage(&cfg, stage))?;
    println!("{stage}: {} artifacts listed in {}", manifest.artifacts.len(), cfg.output_dir.display());
    Ok(())
}

fn pipeline(args: &RunArgs) -> Result<()> {
    let cfg = tagged("pipeline", args.load())?;
    let run = tagged("pipeline", execute(&cfg))?;
    let sizes = &cfg.meta_eval.sizes;
    println!("mean 1-NN meta-accuracy by training size {sizes:?}");
    for c in &run.curves {
        let means: Vec<String> = c.curve.means().iter().map(|m| format!("{m:.3}")).collect();
        println!("  {:<4} {}  {}", c.representation.as_str(), c.variant, means.join(" "));
    }
    let m = &run.confusion;
    println!(
        "confusion ({} {}, size {}) in {}",
        cfg.meta_eval.confusion_representation.as_str(),
        cfg.meta_eval.confusion_variant,
        cfg.meta_eval.confusion_size,
        cfg.output_dir.join(metasim::pipeline::CONFUSION_FILE).display()
    );
    for (i, name) in m.class_names.iter().enumerate() {
        let row: Vec<String> = m.percentages[i].iter().map(|p| format!("{p:5.1}")).collect();
        println!("  {name:<16}{}", row.join(" "));
    }
    let total: f64 = run.manifest.stages.iter().map(|s| s.seconds).sum();
    println!("{} artifacts, {total:.1}s", run.manifest.artifacts.len());
    Ok(())
}

fn plot(embedding: &Path, out: &Path) -> Result<()> {
    let e = tagged("plot", load_embedding(embedding))?;
    let svg = render_scatter(&e, &e.labels);
    std::fs::write(out, svg).map_err(|e| anyhow!("stage `plot`: {}: {e}", out.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth { seed, out } => synth(*seed, out),
        Command::Evaluate(a) => stage(a, Stage::Evaluate),
        Command::Meta(a) => stage(a, Stage::Meta),
        Command::Embed(a) => stage(a, Stage::Embed),
        Command::Classify(a) => stage(a, Stage::Classify),
        Command::Pipeline(a) => pipeline(a),
        Command::Plot { embedding, out } => plot(embedding, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
