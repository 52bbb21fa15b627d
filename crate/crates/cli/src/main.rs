use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use findingscope::dimassign::Method;
use findingscope::pipeline::{
    parse_algorithms, run_all, run_stage_with, ExperimentConfig, ModelKind, PipelineError, Stage, StageOptions,
};

/// Cluster, classify and explain model-validation findings.
#[derive(Parser, Debug)]
#[command(name = "findingscope", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Copy a findings file (JSONL or CSV) into the output directory.
    Ingest,
    /// Generate a synthetic corpus.
    Synth,
    /// Stratified train/valid/test split.
    Split,
    /// Tokenize and build training vocabularies.
    Preprocess,
    /// Hashed bag-of-words embeddings in EMB1 format.
    EmbedHash,
    /// One clustering at the configured algorithm and k.
    Cluster,
    /// Every algorithm over the k range, with silhouette scores.
    Sweep,
    /// Cluster-to-label accuracy tables from the sweep.
    Assign,
    /// Fit a classifier on the training subset.
    Train,
    /// Grid search on the validation subset.
    Tune,
    /// Classification reports for every trained model.
    Eval,
    /// Token rankings and per-instance attributions.
    Attribute,
    /// Assemble report.md from existing artifacts.
    Report,
    /// Every stage in order.
    Run,
}

/// Command-line values take precedence over the configuration file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Findings file for `ingest`.
    #[arg(long, global = true)]
    findings: Option<PathBuf>,
    /// EMB1 title embeddings, used instead of `embed-hash`.
    #[arg(long, global = true)]
    title_embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    description_embeddings: Option<PathBuf>,
    /// Corpus size for `synth`.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Label profile: reference, uniform or name=weight,...
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Train,valid,test fractions, e.g. 0.6,0.2,0.2.
    #[arg(long, global = true)]
    ratios: Option<String>,
    /// dimension or severity.
    #[arg(long, global = true)]
    stratify: Option<String>,
    /// Classification target: dimension or severity.
    #[arg(long, global = true)]
    target: Option<String>,
    /// Hashed embedding width.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Comma-separated clustering algorithms, or `all`.
    #[arg(long, global = true)]
    algos: Option<String>,
    #[arg(long, global = true)]
    kmin: Option<usize>,
    #[arg(long, global = true)]
    kmax: Option<usize>,
    /// k for `cluster`.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// title, description or fused.
    #[arg(long, global = true)]
    features: Option<String>,
    /// majority, share or sampled.
    #[arg(long, global = true)]
    method: Option<String>,
    /// boost or logreg.
    #[arg(long, global = true, default_value = "boost")]
    model: String,
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    max_depth: Option<usize>,
    #[arg(long, global = true)]
    rounds: Option<usize>,
    /// TOML tuning grid.
    #[arg(long, global = true)]
    grid: Option<PathBuf>,
    #[arg(long, global = true)]
    top_k: Option<usize>,
}

fn config_err(e: impl ToString) -> PipelineError {
    PipelineError::Config(e.to_string())
}

fn build_config(o: &Overrides) -> Result<ExperimentConfig, PipelineError> {
    let mut c = match &o.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &o.out {
        c.output_dir = v.clone();
    }
    if let Some(v) = o.seed {
        c.seed = v;
    }
    if let Some(v) = &o.findings {
        c.data.findings = Some(v.clone());
    }
    if let Some(v) = &o.title_embeddings {
        c.data.title_embeddings = Some(v.clone());
    }
    if let Some(v) = &o.description_embeddings {
        c.data.description_embeddings = Some(v.clone());
    }
    if let Some(v) = o.n {
        c.synth.n = v;
    }
    if let Some(v) = &o.profile {
        c.synth.profile = v.clone();
    }
    if let Some(v) = &o.ratios {
        let parts: Vec<f64> = v
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| config_err(format!("--ratios: {e}")))?;
        c.split.ratios = parts.try_into().map_err(|_| config_err("--ratios needs three comma-separated fractions"))?;
    }
    if let Some(v) = &o.stratify {
        c.split.stratify = v.parse().map_err(config_err)?;
    }
    if let Some(v) = &o.target {
        c.target = v.parse().map_err(config_err)?;
    }
    if let Some(v) = o.dim {
        c.embed.dim = v;
    }
    if let Some(v) = &o.algos {
        let names: Vec<&str> = v.split(',').collect();
        parse_algorithms(&names)?;
        c.cluster.algorithms = names.iter().map(|s| s.trim().to_string()).collect();
        if names.len() == 1 && names[0] != "all" {
            c.cluster.algorithm = names[0].trim().parse().map_err(config_err)?;
        }
    }
    if let Some(v) = o.kmin {
        c.cluster.k_min = v;
    }
    if let Some(v) = o.kmax {
        c.cluster.k_max = v;
    }
    if let Some(v) = o.k {
        c.cluster.k = v;
    }
    if let Some(v) = &o.features {
        c.cluster.features = v.parse().map_err(config_err)?;
    }
    if let Some(v) = o.eta {
        c.boost.learning_rate = v;
    }
    if let Some(v) = o.lambda {
        c.boost.lambda = v;
    }
    if let Some(v) = o.gamma {
        c.boost.gamma = v;
    }
    if let Some(v) = o.max_depth {
        c.boost.max_depth = v;
    }
    if let Some(v) = o.rounds {
        c.boost.rounds = v;
    }
    if let Some(v) = &o.grid {
        c.tune.grid = Some(v.clone());
    }
    if let Some(v) = o.top_k {
        c.attribute.top_k = v;
    }
    Ok(c)
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let config = build_config(&cli.overrides)?;
    let model: ModelKind = cli.overrides.model.parse().map_err(config_err)?;
    let method: Option<Method> = cli.overrides.method.as_deref().map(str::parse).transpose().map_err(config_err)?;
    let stage = match cli.command {
        Command::Ingest => Stage::Ingest,
        Command::Synth => Stage::Synth,
        Command::Split => Stage::Split,
        Command::Preprocess => Stage::Preprocess,
        Command::EmbedHash => Stage::EmbedHash,
        Command::Cluster => Stage::Cluster,
        Command::Sweep => Stage::Sweep,
        Command::Assign => Stage::Assign,
        Command::Train => Stage::Train(model),
        Command::Tune => Stage::Tune,
        Command::Eval => Stage::Eval,
        Command::Attribute => Stage::Attribute,
        Command::Report => Stage::Report,
        Command::Run => {
            let manifest = run_all(&config)?;
            for (name, record) in &manifest.stages {
                eprintln!("{name:<14} {:>8.2}s  {} artifacts", record.wall_clock_seconds, record.artifacts.len());
            }
            println!("{}", config.output_dir.display());
            return Ok(());
        }
    };
    let record = run_stage_with(&config, stage, &StageOptions { assign_method: method })?;
    for name in record.artifacts.keys() {
        println!("{}", config.output_dir.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
