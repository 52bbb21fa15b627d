//! Stage-by-stage orchestration of the whole experiment.
//!
//! Every stage reads its inputs from and writes its artifacts to the output
//! directory, so stages can run one at a time from the command line or all
//! together through [`run_all`]. Each completed stage records the SHA-256 of
//! its artifacts and its wall-clock time in `manifest.json`. Given equal
//! configuration and inputs, every artifact other than the manifest is
//! byte-identical between runs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod config;
mod data;
mod report;
mod stages;

pub use config::{
    parse_algorithms, AssignConfig, AttributeConfig, ClusterFeatures, ClusterSection, DataConfig, EmbedConfig, ExperimentConfig,
    SplitConfig, SynthConfig, Target, TextConfig, TuneConfig,
};
pub use data::{build_dataset, cluster_matrix, Dataset};
pub use report::render_report;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("missing {artifact}: run `{stage}` first")]
    MissingArtifact { artifact: String, stage: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit code: 2 configuration, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) | PipelineError::MissingArtifact { .. } | PipelineError::Io { .. } => 3,
            PipelineError::Numeric(_) => 4,
        }
    }
}

impl From<crate::corpus::CorpusError> for PipelineError {
    fn from(e: crate::corpus::CorpusError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<crate::embedspace::EmbedError> for PipelineError {
    fn from(e: crate::embedspace::EmbedError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<crate::textprep::TextError> for PipelineError {
    fn from(e: crate::textprep::TextError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<crate::clusterlab::ClusterError> for PipelineError {
    fn from(e: crate::clusterlab::ClusterError) -> Self {
        use crate::clusterlab::ClusterError as E;
        match e {
            E::InvalidParam(_) | E::InvalidK { .. } | E::TooFewLeafEntries { .. } => PipelineError::Config(e.to_string()),
            E::NoConvergence(_) | E::ZeroDegree(_) | E::NotSymmetric => PipelineError::Numeric(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<crate::boostlab::BoostError> for PipelineError {
    fn from(e: crate::boostlab::BoostError) -> Self {
        use crate::boostlab::BoostError as E;
        match e {
            E::InvalidParam(_) | E::Grid(_) => PipelineError::Config(e.to_string()),
            E::Numeric(_) => PipelineError::Numeric(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<crate::dimassign::AssignError> for PipelineError {
    fn from(e: crate::dimassign::AssignError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<crate::metricsuite::MetricsError> for PipelineError {
    fn from(e: crate::metricsuite::MetricsError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<crate::attriblab::AttribError> for PipelineError {
    fn from(e: crate::attriblab::AttribError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Boost,
    Logreg,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Boost => "boost",
            ModelKind::Logreg => "logreg",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "boost" => Ok(ModelKind::Boost),
            "logreg" => Ok(ModelKind::Logreg),
            _ => Err(format!("unknown model {s:?}; expected boost or logreg")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Synth,
    Split,
    Preprocess,
    EmbedHash,
    Cluster,
    Sweep,
    Assign,
    Train(ModelKind),
    Tune,
    Eval,
    Attribute,
    Report,
}

impl Stage {
    /// Manifest key.
    pub fn key(self) -> String {
        match self {
            Stage::Ingest => "ingest".into(),
            Stage::Synth => "synth".into(),
            Stage::Split => "split".into(),
            Stage::Preprocess => "preprocess".into(),
            Stage::EmbedHash => "embed-hash".into(),
            Stage::Cluster => "cluster".into(),
            Stage::Sweep => "sweep".into(),
            Stage::Assign => "assign".into(),
            Stage::Train(m) => format!("train-{}", m.as_str()),
            Stage::Tune => "tune".into(),
            Stage::Eval => "eval".into(),
            Stage::Attribute => "attribute".into(),
            Stage::Report => "report".into(),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Artifact file name to SHA-256 hex digest.
    pub artifacts: BTreeMap<String, String>,
    /// SHA-256 of the configuration the stage ran with, as TOML.
    pub config_sha256: String,
    pub wall_clock_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Option<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST)).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Stage name to artifact hashes, without timings.
    pub fn hashes(&self) -> BTreeMap<&str, &BTreeMap<String, String>> {
        self.stages.iter().map(|(k, v)| (k.as_str(), &v.artifacts)).collect()
    }
}

/// Collects the files a stage writes.
pub(crate) struct ArtifactWriter<'a> {
    dir: &'a Path,
    artifacts: BTreeMap<String, String>,
}

impl<'a> ArtifactWriter<'a> {
    fn new(dir: &'a Path) -> Self {
        Self { dir, artifacts: BTreeMap::new() }
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents.as_ref()).map_err(|source| PipelineError::Io { path, source })?;
        self.artifacts.insert(name.to_string(), crate::util::sha256_hex(contents.as_ref()));
        Ok(())
    }
}

/// Options that only affect single-stage invocations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageOptions {
    /// Restricts `assign` to one method.
    pub assign_method: Option<crate::dimassign::Method>,
}

/// Runs one stage and records it in the manifest. The configuration is
/// validated before anything is written.
pub fn run_stage(config: &ExperimentConfig, stage: Stage) -> Result<StageRecord> {
    run_stage_with(config, stage, &StageOptions::default())
}

pub fn run_stage_with(config: &ExperimentConfig, stage: Stage, options: &StageOptions) -> Result<StageRecord> {
    config.validate()?;
    let dir = config.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
    let started = Instant::now();
    let mut writer = ArtifactWriter::new(dir);
    match stage {
        Stage::Ingest => stages::ingest(config, &mut writer)?,
        Stage::Synth => stages::synth(config, &mut writer)?,
        Stage::Split => stages::split(config, &mut writer)?,
        Stage::Preprocess => stages::preprocess(config, &mut writer)?,
        Stage::EmbedHash => stages::embed_hash(config, &mut writer)?,
        Stage::Cluster => stages::cluster(config, &mut writer)?,
        Stage::Sweep => stages::sweep(config, &mut writer)?,
        Stage::Assign => stages::assign(config, options, &mut writer)?,
        Stage::Train(kind) => stages::train(config, kind, &mut writer)?,
        Stage::Tune => stages::tune(config, &mut writer)?,
        Stage::Eval => stages::eval(config, &mut writer)?,
        Stage::Attribute => stages::attribute(config, &mut writer)?,
        Stage::Report => {
            let text = render_report(dir)?;
            writer.write("report.md", text)?;
        }
    }
    let record = StageRecord {
        artifacts: writer.artifacts,
        config_sha256: crate::util::sha256_hex(config.to_toml().as_bytes()),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };

    let mut manifest = RunManifest::load(dir).unwrap_or_else(|| RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        stages: BTreeMap::new(),
    });
    manifest.config = config.clone();
    manifest.stages.insert(stage.key(), record.clone());
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = dir.join(MANIFEST);
    std::fs::write(&path, text).map_err(|source| PipelineError::Io { path, source })?;
    Ok(record)
}

/// The stage sequence for a full run under `config`.
pub fn plan(config: &ExperimentConfig) -> Vec<Stage> {
    let mut stages = vec![if config.data.findings.is_some() { Stage::Ingest } else { Stage::Synth }, Stage::Split, Stage::Preprocess];
    if config.data.title_embeddings.is_none() {
        stages.push(Stage::EmbedHash);
    }
    stages.extend([Stage::Sweep, Stage::Assign, Stage::Train(ModelKind::Boost), Stage::Train(ModelKind::Logreg)]);
    if config.tune.grid.is_some() {
        stages.push(Stage::Tune);
    }
    stages.extend([Stage::Eval, Stage::Attribute, Stage::Report]);
    stages
}

/// Runs every stage of [`plan`] in order.
pub fn run_all(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate()?;
    for stage in plan(config) {
        run_stage(config, stage)?;
    }
    RunManifest::load(&config.output_dir).ok_or_else(|| PipelineError::Data("manifest missing after run".into()))
}
