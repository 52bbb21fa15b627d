use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::boostlab::{BoostParams, LogRegParams};
use crate::clusterlab::{Algorithm, ClusterConfig};
use crate::corpus::{LabelProfile, SeverityScale, SplitRatios, StratifyOn};
use crate::dimassign::Method;

/// Which columns the clustering stages see.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterFeatures {
    /// Title embedding, unit length.
    Title,
    /// Description embedding, unit length.
    Description,
    /// Both bags as counts plus both embeddings at unit length.
    Fused,
}

impl std::str::FromStr for ClusterFeatures {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "title" => Ok(Self::Title),
            "description" => Ok(Self::Description),
            "fused" => Ok(Self::Fused),
            _ => Err(format!("unknown feature selection {s:?}; expected title, description or fused")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Dimension,
    Severity,
}

impl std::str::FromStr for Target {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dimension" => Ok(Self::Dimension),
            "severity" => Ok(Self::Severity),
            _ => Err(format!("unknown target {s:?}; expected dimension or severity")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// JSONL or CSV findings; when unset the corpus comes from `synth`.
    pub findings: Option<PathBuf>,
    /// EMB1 files; when unset `embed-hash` provides them.
    pub title_embeddings: Option<PathBuf>,
    pub description_embeddings: Option<PathBuf>,
    pub severity_levels: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            findings: None,
            title_embeddings: None,
            description_embeddings: None,
            severity_levels: SeverityScale::default().levels().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    /// `reference`, `uniform` or `name=weight,...`.
    pub profile: String,
    pub separable: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n: 657, profile: "reference".into(), separable: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    pub stratify: StratifyOn,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { ratios: [0.6, 0.2, 0.2], stratify: StratifyOn::Dimension }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextConfig {
    pub min_df: usize,
    /// Replaces the bundled stopword list.
    pub stopwords: Option<PathBuf>,
    /// Replaces the bundled lemma exception table.
    pub lemma_exceptions: Option<PathBuf>,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self { min_df: 2, stopwords: None, lemma_exceptions: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub dim: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub features: ClusterFeatures,
    /// Algorithm and k for the single `cluster` stage.
    pub algorithm: Algorithm,
    pub k: usize,
    /// Algorithms for the sweep; `all` selects every one.
    pub algorithms: Vec<String>,
    pub k_min: usize,
    pub k_max: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub n_init: usize,
    pub batch_size: usize,
    pub batches_per_k: usize,
    pub birch_threshold: f64,
    pub birch_branching: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let c = ClusterConfig::default();
        Self {
            features: ClusterFeatures::Fused,
            algorithm: Algorithm::Kmeans,
            k: 9,
            algorithms: vec!["all".into()],
            k_min: 2,
            k_max: 15,
            max_iter: c.max_iter,
            tol: c.tol,
            n_init: c.n_init,
            batch_size: c.batch_size,
            batches_per_k: c.batches_per_k,
            birch_threshold: c.birch_threshold,
            birch_branching: c.birch_branching,
        }
    }
}

impl ClusterSection {
    pub fn params(&self) -> ClusterConfig {
        ClusterConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            n_init: self.n_init,
            batch_size: self.batch_size,
            batches_per_k: self.batches_per_k,
            birch_threshold: self.birch_threshold,
            birch_branching: self.birch_branching,
        }
    }

    /// Sweep algorithms in canonical order.
    pub fn algorithm_list(&self) -> Result<Vec<Algorithm>, PipelineError> {
        parse_algorithms(&self.algorithms)
    }
}

/// Parses algorithm names; `all` expands to every algorithm.
pub fn parse_algorithms<S: AsRef<str>>(names: &[S]) -> Result<Vec<Algorithm>, PipelineError> {
    let mut out = Vec::new();
    for name in names {
        let name = name.as_ref().trim();
        if name == "all" {
            out.extend(Algorithm::ALL);
        } else {
            out.push(name.parse::<Algorithm>().map_err(|e| PipelineError::Config(e.to_string()))?);
        }
    }
    out.sort_by_key(|a| Algorithm::ALL.iter().position(|b| b == a));
    out.dedup();
    if out.is_empty() {
        return Err(PipelineError::Config("no clustering algorithms selected".into()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignConfig {
    pub methods: Vec<Method>,
}

impl Default for AssignConfig {
    fn default() -> Self {
        Self { methods: vec![Method::Majority, Method::Share, Method::Sampled] }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    /// TOML grid file; without one `tune` is skipped by `run`.
    pub grid: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributeConfig {
    pub top_k: usize,
}

impl Default for AttributeConfig {
    fn default() -> Self {
        Self { top_k: 10 }
    }
}

/// Everything a run needs. Loaded from TOML; every key is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub target: Target,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub split: SplitConfig,
    pub text: TextConfig,
    pub embed: EmbedConfig,
    pub cluster: ClusterSection,
    pub assign: AssignConfig,
    pub boost: BoostParams,
    pub logreg: LogRegParams,
    pub tune: TuneConfig,
    pub attribute: AttributeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: PathBuf::from("findingscope-out"),
            target: Target::Dimension,
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            split: SplitConfig::default(),
            text: TextConfig::default(),
            embed: EmbedConfig::default(),
            cluster: ClusterSection::default(),
            assign: AssignConfig::default(),
            boost: BoostParams::default(),
            logreg: LogRegParams::default(),
            tune: TuneConfig::default(),
            attribute: AttributeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn severity_scale(&self) -> Result<SeverityScale, PipelineError> {
        SeverityScale::new(self.data.severity_levels.iter().cloned()).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn split_ratios(&self) -> Result<SplitRatios, PipelineError> {
        let [a, b, c] = self.split.ratios;
        SplitRatios::new(a, b, c).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn label_profile(&self) -> Result<LabelProfile, PipelineError> {
        LabelProfile::parse(&self.synth.profile).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Checks every parameter and that referenced input files exist.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.severity_scale()?;
        self.split_ratios()?;
        self.label_profile()?;
        if self.synth.n == 0 {
            return bad("synth.n must be positive".into());
        }
        if self.text.min_df == 0 {
            return bad("text.min_df must be at least 1".into());
        }
        if self.embed.dim == 0 {
            return bad("embed.dim must be positive".into());
        }
        self.cluster.params().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.cluster.algorithm_list()?;
        if self.cluster.k_min < 2 || self.cluster.k_max < self.cluster.k_min {
            return bad(format!("need 2 <= k_min <= k_max (got {}..{})", self.cluster.k_min, self.cluster.k_max));
        }
        if self.cluster.k < 1 {
            return bad("cluster.k must be positive".into());
        }
        if self.assign.methods.is_empty() {
            return bad("assign.methods is empty".into());
        }
        self.boost.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.boost.rounds == 0 {
            return bad("boost.rounds must be positive".into());
        }
        self.logreg.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.attribute.top_k == 0 {
            return bad("attribute.top_k must be at least 1".into());
        }
        if self.data.title_embeddings.is_some() != self.data.description_embeddings.is_some() {
            return bad("set both data.title_embeddings and data.description_embeddings, or neither".into());
        }
        let files = [
            &self.data.findings,
            &self.data.title_embeddings,
            &self.data.description_embeddings,
            &self.text.stopwords,
            &self.text.lemma_exceptions,
            &self.tune.grid,
        ];
        for path in files.into_iter().flatten() {
            if !path.is_file() {
                return bad(format!("file not found: {}", path.display()));
            }
        }
        Ok(())
    }
}
