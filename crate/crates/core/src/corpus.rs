//! Finding records, ingestion, the synthetic corpus generator and
//! stratified train/valid/test splitting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{largest_remainder, stable_hash};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: invalid dimension {value:?}; expected one of: {}", Dimension::valid_names())]
    InvalidDimension { line: usize, value: String },
    #[error("line {line}: invalid severity {value:?}; expected one of: {levels}")]
    InvalidSeverity { line: usize, value: String, levels: String },
    #[error("line {line}: invalid model category {value:?}; expected PD, LGD or EAD")]
    InvalidModelCategory { line: usize, value: String },
    #[error("line {line}: invalid date {value:?} in {field} (expected YYYY-MM-DD)")]
    InvalidDate { line: usize, field: &'static str, value: String },
    #[error("line {line}: field {field} is missing or blank")]
    BlankField { line: usize, field: &'static str },
    #[error("line {line}: due_date precedes finding_date")]
    DueBeforeFinding { line: usize },
    #[error("label profile is empty")]
    EmptyProfile,
    #[error("label profile must sum to 1 (got {0})")]
    ProfileSum(f64),
    #[error("invalid profile entry {0:?}")]
    InvalidProfileEntry(String),
    #[error("corpus size must be at least 1")]
    EmptyCorpus,
    #[error("split ratios must lie in (0,1) and sum to 1 (got {0}, {1}, {2})")]
    InvalidRatios(f64, f64, f64),
    #[error("finding {id:?} has no {label} label to stratify on")]
    MissingLabel { id: String, label: &'static str },
    #[error("severity scale needs at least two distinct levels")]
    InvalidScale,
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// The nine validation dimensions a finding can be filed under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Documentation,
    ModelInput,
    ModelEnvironment,
    ModelOutput,
    ModelDesign,
    ImpactAssessment,
    MarginOfConservatism,
    ModelUse,
    ModelImplementation,
}

impl Dimension {
    pub const ALL: [Dimension; 9] = [
        Dimension::Documentation,
        Dimension::ModelInput,
        Dimension::ModelEnvironment,
        Dimension::ModelOutput,
        Dimension::ModelDesign,
        Dimension::ImpactAssessment,
        Dimension::MarginOfConservatism,
        Dimension::ModelUse,
        Dimension::ModelImplementation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Documentation => "documentation",
            Dimension::ModelInput => "model_input",
            Dimension::ModelEnvironment => "model_environment",
            Dimension::ModelOutput => "model_output",
            Dimension::ModelDesign => "model_design",
            Dimension::ImpactAssessment => "impact_assessment",
            Dimension::MarginOfConservatism => "margin_of_conservatism",
            Dimension::ModelUse => "model_use",
            Dimension::ModelImplementation => "model_implementation",
        }
    }

    pub fn index(self) -> usize {
        Dimension::ALL.iter().position(|&d| d == self).unwrap()
    }

    fn valid_names() -> String {
        Dimension::ALL.iter().map(|d| d.as_str()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("unknown dimension {0:?}")]
pub struct UnknownDimension(pub String);

impl FromStr for Dimension {
    type Err = UnknownDimension;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Dimension::ALL
            .iter()
            .copied()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| UnknownDimension(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelCategory {
    PD,
    LGD,
    EAD,
}

impl ModelCategory {
    pub const ALL: [ModelCategory; 3] = [ModelCategory::PD, ModelCategory::LGD, ModelCategory::EAD];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelCategory::PD => "PD",
            ModelCategory::LGD => "LGD",
            ModelCategory::EAD => "EAD",
        }
    }
}

impl FromStr for ModelCategory {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        ModelCategory::ALL.iter().copied().find(|c| c.as_str() == s).ok_or(())
    }
}

/// A severity level name. Validity is relative to a [`SeverityScale`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Severity(String);

impl Severity {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered set of severity levels, lowest first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityScale {
    levels: Vec<String>,
}

impl Default for SeverityScale {
    fn default() -> Self {
        Self { levels: vec!["low".into(), "medium".into(), "high".into()] }
    }
}

impl SeverityScale {
    pub fn new<S: Into<String>>(levels: impl IntoIterator<Item = S>) -> Result<Self> {
        let levels: Vec<String> = levels.into_iter().map(Into::into).collect();
        let distinct: HashSet<&String> = levels.iter().collect();
        if levels.len() < 2 || distinct.len() != levels.len() || levels.iter().any(|l| l.trim().is_empty()) {
            return Err(CorpusError::InvalidScale);
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn parse(&self, value: &str) -> Option<Severity> {
        self.levels.iter().find(|l| *l == value).map(|l| Severity(l.clone()))
    }

    pub fn rank(&self, severity: &Severity) -> Option<usize> {
        self.levels.iter().position(|l| *l == severity.0)
    }

    pub fn level(&self, rank: usize) -> Severity {
        Severity(self.levels[rank].clone())
    }
}

/// One validation finding.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Finding {
    pub id: String,
    pub title: String,
    pub description: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension: Option<Dimension>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_category: Option<ModelCategory>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finding_date: Option<NaiveDate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub due_date: Option<NaiveDate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub person_to_act: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action_plan: Option<String>,
}

impl Finding {
    /// A finding with only the mandatory fields set.
    pub fn new(id: impl Into<String>, title: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            description: description.into(),
            dimension: None,
            severity: None,
            model_category: None,
            finding_date: None,
            due_date: None,
            person_to_act: None,
            action_plan: None,
        }
    }
}

/// Field-by-field view of one input record before validation.
#[derive(Debug, Default, Deserialize)]
struct RawRecord {
    id: Option<String>,
    title: Option<String>,
    description: Option<String>,
    dimension: Option<String>,
    severity: Option<String>,
    model_category: Option<String>,
    finding_date: Option<String>,
    due_date: Option<String>,
    person_to_act: Option<String>,
    action_plan: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FindingsFormat {
    Jsonl,
    Csv,
}

impl FindingsFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FindingsFormat::Csv,
            _ => FindingsFormat::Jsonl,
        }
    }
}

const FIELDS: [&str; 10] = [
    "id",
    "title",
    "description",
    "dimension",
    "severity",
    "model_category",
    "finding_date",
    "due_date",
    "person_to_act",
    "action_plan",
];

fn non_blank(v: Option<String>) -> Option<String> {
    v.filter(|s| !s.trim().is_empty())
}

fn parse_date(line: usize, field: &'static str, value: Option<String>) -> Result<Option<NaiveDate>> {
    match non_blank(value) {
        None => Ok(None),
        Some(v) => NaiveDate::parse_from_str(v.trim(), "%Y-%m-%d")
            .map(Some)
            .map_err(|_| CorpusError::InvalidDate { line, field, value: v }),
    }
}

fn validate(raw: RawRecord, line: usize, scale: &SeverityScale) -> Result<Finding> {
    let id = non_blank(raw.id).ok_or(CorpusError::BlankField { line, field: "id" })?;
    let title = non_blank(raw.title).ok_or(CorpusError::BlankField { line, field: "title" })?;
    let description =
        non_blank(raw.description).ok_or(CorpusError::BlankField { line, field: "description" })?;
    let dimension = match non_blank(raw.dimension) {
        None => None,
        Some(v) => Some(v.parse::<Dimension>().map_err(|_| CorpusError::InvalidDimension { line, value: v })?),
    };
    let severity = match non_blank(raw.severity) {
        None => None,
        Some(v) => Some(scale.parse(&v).ok_or_else(|| CorpusError::InvalidSeverity {
            line,
            value: v.clone(),
            levels: scale.levels().join(", "),
        })?),
    };
    let model_category = match non_blank(raw.model_category) {
        None => None,
        Some(v) => Some(v.parse::<ModelCategory>().map_err(|_| CorpusError::InvalidModelCategory { line, value: v })?),
    };
    let finding_date = parse_date(line, "finding_date", raw.finding_date)?;
    let due_date = parse_date(line, "due_date", raw.due_date)?;
    if let (Some(f), Some(d)) = (finding_date, due_date) {
        if d < f {
            return Err(CorpusError::DueBeforeFinding { line });
        }
    }
    Ok(Finding {
        id,
        title,
        description,
        dimension,
        severity,
        model_category,
        finding_date,
        due_date,
        person_to_act: non_blank(raw.person_to_act),
        action_plan: non_blank(raw.action_plan),
    })
}

fn push_unique(out: &mut Vec<Finding>, seen: &mut HashSet<String>, f: Finding, line: usize) -> Result<()> {
    if !seen.insert(f.id.clone()) {
        return Err(CorpusError::DuplicateId { line, id: f.id });
    }
    out.push(f);
    Ok(())
}

/// Parses findings JSONL. Blank lines are skipped; unknown keys ignored.
pub fn parse_findings_jsonl(text: &str, scale: &SeverityScale) -> Result<Vec<Finding>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line)
            .map_err(|e| CorpusError::Malformed { line: line_no, message: e.to_string() })?;
        let finding = validate(raw, line_no, scale)?;
        push_unique(&mut out, &mut seen, finding, line_no)?;
    }
    Ok(out)
}

/// Parses RFC-4180 CSV with a mandatory header row.
pub fn parse_findings_csv(text: &str, scale: &SeverityScale) -> Result<Vec<Finding>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Malformed { line: 1, message: e.to_string() })?
        .clone();
    let columns: Vec<Option<usize>> =
        FIELDS.iter().map(|f| headers.iter().position(|h| h.trim() == *f)).collect();
    if columns[0].is_none() {
        if headers.is_empty() {
            return Ok(Vec::new());
        }
        return Err(CorpusError::Malformed { line: 1, message: "header row lacks an id column".into() });
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            CorpusError::Malformed { line, message: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let get = |slot: usize| columns[slot].and_then(|c| record.get(c)).map(str::to_string);
        let raw = RawRecord {
            id: get(0),
            title: get(1),
            description: get(2),
            dimension: get(3),
            severity: get(4),
            model_category: get(5),
            finding_date: get(6),
            due_date: get(7),
            person_to_act: get(8),
            action_plan: get(9),
        };
        let finding = validate(raw, line, scale)?;
        push_unique(&mut out, &mut seen, finding, line)?;
    }
    Ok(out)
}

/// Reads findings from a JSONL or CSV file.
pub fn load_findings(path: &Path, format: FindingsFormat, scale: &SeverityScale) -> Result<Vec<Finding>> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    match format {
        FindingsFormat::Jsonl => parse_findings_jsonl(&text, scale),
        FindingsFormat::Csv => parse_findings_csv(&text, scale),
    }
}

/// Renders findings as JSONL, one object per line, absent fields omitted.
pub fn write_findings_jsonl(findings: &[Finding]) -> String {
    let mut out = String::new();
    for f in findings {
        out.push_str(&serde_json::to_string(f).expect("finding serializes"));
        out.push('\n');
    }
    out
}

/// Renders findings as CSV with the full header; absent fields are empty.
pub fn write_findings_csv(findings: &[Finding]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FIELDS).expect("in-memory write");
    for f in findings {
        let date = |d: Option<NaiveDate>| d.map(|d| d.to_string()).unwrap_or_default();
        w.write_record([
            f.id.clone(),
            f.title.clone(),
            f.description.clone(),
            f.dimension.map(|d| d.as_str().to_string()).unwrap_or_default(),
            f.severity.as_ref().map(|s| s.0.clone()).unwrap_or_default(),
            f.model_category.map(|c| c.as_str().to_string()).unwrap_or_default(),
            date(f.finding_date),
            date(f.due_date),
            f.person_to_act.clone().unwrap_or_default(),
            f.action_plan.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Target label distribution for the synthetic generator.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelProfile {
    weights: Vec<(Dimension, f64)>,
}

/// Per-dimension supports of the train/valid/test tables of the reference
/// corpus (657 findings in total).
const REFERENCE_COUNTS: [(Dimension, u32); 9] = [
    (Dimension::Documentation, 52),
    (Dimension::ModelInput, 181),
    (Dimension::ModelEnvironment, 45),
    (Dimension::ModelOutput, 103),
    (Dimension::ModelDesign, 139),
    (Dimension::ImpactAssessment, 21),
    (Dimension::MarginOfConservatism, 69),
    (Dimension::ModelUse, 18),
    (Dimension::ModelImplementation, 29),
];

impl LabelProfile {
    pub fn new(weights: Vec<(Dimension, f64)>) -> Result<Self> {
        if weights.is_empty() {
            return Err(CorpusError::EmptyProfile);
        }
        if weights.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(CorpusError::ProfileSum(f64::NAN));
        }
        let sum: f64 = weights.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::ProfileSum(sum));
        }
        Ok(Self { weights })
    }

    /// Label shares of the reference corpus.
    pub fn reference() -> Self {
        let total: u32 = REFERENCE_COUNTS.iter().map(|(_, c)| c).sum();
        Self {
            weights: REFERENCE_COUNTS.iter().map(|&(d, c)| (d, c as f64 / total as f64)).collect(),
        }
    }

    pub fn uniform() -> Self {
        Self { weights: Dimension::ALL.iter().map(|&d| (d, 1.0 / 9.0)).collect() }
    }

    /// Parses `reference`, `uniform`, or `name=weight,...` (weights are
    /// normalized to sum to one).
    pub fn parse(spec: &str) -> Result<Self> {
        match spec.trim() {
            "reference" => return Ok(Self::reference()),
            "uniform" => return Ok(Self::uniform()),
            "" => return Err(CorpusError::EmptyProfile),
            _ => {}
        }
        let mut weights = Vec::new();
        for entry in spec.split(',') {
            let (name, w) = entry.split_once('=').ok_or_else(|| CorpusError::InvalidProfileEntry(entry.into()))?;
            let dim: Dimension =
                name.trim().parse().map_err(|_| CorpusError::InvalidProfileEntry(entry.into()))?;
            let w: f64 = w.trim().parse().map_err(|_| CorpusError::InvalidProfileEntry(entry.into()))?;
            weights.push((dim, w));
        }
        let sum: f64 = weights.iter().map(|(_, w)| w).sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(CorpusError::ProfileSum(sum));
        }
        Self::new(weights.into_iter().map(|(d, w)| (d, w / sum)).collect())
    }

    pub fn weights(&self) -> &[(Dimension, f64)] {
        &self.weights
    }

    /// Per-label counts for a corpus of `n`, by largest remainder.
    pub fn counts(&self, n: usize) -> Vec<(Dimension, usize)> {
        let w: Vec<f64> = self.weights.iter().map(|(_, w)| *w).collect();
        self.weights.iter().map(|(d, _)| *d).zip(largest_remainder(n, &w)).collect()
    }
}

/// Knobs for the synthetic text generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    /// Share of content words drawn from the finding's own dimension pool.
    pub signal_rate: f64,
    /// Share drawn from a randomly chosen other dimension's pool.
    pub confusion_rate: f64,
    /// Share drawn from the vocabulary common to all dimensions.
    pub shared_rate: f64,
    /// When set, only own-pool and filler words are emitted, which makes
    /// the labels perfectly recoverable from the text.
    pub separable: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { signal_rate: 0.3, confusion_rate: 0.12, shared_rate: 0.28, separable: false }
    }
}

fn pool(dim: Dimension) -> &'static [&'static str] {
    match dim {
        Dimension::Documentation => &[
            "documentation", "document", "code", "description", "chapter", "appendix", "manual", "version",
            "reference", "section", "traceability", "archive",
        ],
        Dimension::ModelInput => &[
            "customer", "sample", "missing", "quality", "availability", "source", "field", "record",
            "adequacy", "extraction", "cleansing", "outlier",
        ],
        Dimension::ModelEnvironment => &[
            "scope", "representativeness", "population", "segment", "coverage", "portfolio", "environment",
            "perimeter", "macroeconomic", "alignment", "within", "external",
        ],
        Dimension::ModelOutput => &[
            "threshold", "rating", "grade", "observe", "calibration", "discriminatory", "backtesting", "gini",
            "accuracy", "month", "predictive", "estimate",
        ],
        Dimension::ModelDesign => &[
            "downturn", "specification", "methodology", "variable", "regression", "driver", "parameter",
            "statistical", "segmentation", "assumption", "weighting", "transformation",
        ],
        Dimension::ImpactAssessment => &[
            "impact", "calculate", "capital", "rwa", "quantification", "difference", "effect", "expected",
            "shortfall", "simulation", "materiality", "exposure",
        ],
        Dimension::MarginOfConservatism => &[
            "moc", "conservatism", "margin", "deficiency", "uncertainty", "addon", "category", "apply",
            "estimation", "error", "buffer", "trigger",
        ],
        Dimension::ModelUse => &[
            "decision", "use", "usage", "approval", "pricing", "limit", "strategy", "process", "business", "new",
            "need", "committee",
        ],
        Dimension::ModelImplementation => &[
            "isd", "implementation", "implement", "system", "deployment", "production", "software", "interface",
            "plan", "release", "migration", "platform",
        ],
    }
}

const SHARED: &[&str] = &[
    "model", "data", "default", "risk", "analysis", "development", "perform", "credit", "update", "include",
    "level", "order", "lgd", "pd", "ead", "md",
];

const FILLER: &[&str] = &[
    "validation", "finding", "identified", "observed", "regarding", "current", "relevant", "additional",
    "required", "ensure", "provide", "review", "insufficient", "appropriate", "unit", "team",
];

const GLUE: &[&str] = &["the", "of", "in", "is", "was", "not", "and", "for", "to", "a", "with", "on", "are"];

const SEVERITY_CUES: [&[&str]; 3] = [&["minor", "cosmetic"], &["moderate", "partial"], &["material", "critical"]];

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words[rng.gen_range(0..words.len())]
}

fn content_word(rng: &mut ChaCha8Rng, dim: Dimension, opts: &SynthOptions) -> &'static str {
    if opts.separable {
        return if rng.gen_bool(0.6) { pick(rng, pool(dim)) } else { pick(rng, FILLER) };
    }
    let u: f64 = rng.gen();
    if u < opts.signal_rate {
        pick(rng, pool(dim))
    } else if u < opts.signal_rate + opts.confusion_rate {
        let others: Vec<Dimension> = Dimension::ALL.iter().copied().filter(|&d| d != dim).collect();
        let other = others[rng.gen_range(0..others.len())];
        pick(rng, pool(other))
    } else if u < opts.signal_rate + opts.confusion_rate + opts.shared_rate {
        pick(rng, SHARED)
    } else {
        pick(rng, FILLER)
    }
}

fn sentence(rng: &mut ChaCha8Rng, words: Vec<&str>) -> String {
    let mut out = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            out.push(' ');
            if rng.gen_bool(0.25) {
                out.push_str(pick(rng, GLUE));
                out.push(' ');
            }
        }
        match w {
            // acronyms keep their usual spelling
            &"moc" => out.push_str("MoC"),
            &"isd" => out.push_str("ISD"),
            &"lgd" | &"pd" | &"ead" | &"md" | &"rwa" => out.push_str(&w.to_uppercase()),
            _ if i == 0 => {
                let mut c = w.chars();
                if let Some(first) = c.next() {
                    out.extend(first.to_uppercase());
                    out.push_str(c.as_str());
                }
            }
            _ => out.push_str(w),
        }
    }
    out
}

/// Generates a deterministic keyword-pool corpus with default options.
pub fn generate_synthetic_corpus(n: usize, seed: u64, profile: &LabelProfile) -> Result<Vec<Finding>> {
    generate_synthetic_corpus_with(n, seed, profile, &SynthOptions::default(), &SeverityScale::default())
}

pub fn generate_synthetic_corpus_with(
    n: usize,
    seed: u64,
    profile: &LabelProfile,
    opts: &SynthOptions,
    scale: &SeverityScale,
) -> Result<Vec<Finding>> {
    if n == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    if profile.weights.is_empty() {
        return Err(CorpusError::EmptyProfile);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<Dimension> = Vec::with_capacity(n);
    for (dim, count) in profile.counts(n) {
        labels.extend(std::iter::repeat_n(dim, count));
    }
    labels.shuffle(&mut rng);

    let base_date = NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date");
    let width = n.to_string().len().max(4);
    let levels = scale.levels().len();
    let mut out = Vec::with_capacity(n);
    for (i, dim) in labels.into_iter().enumerate() {
        let title_len = rng.gen_range(4..=7);
        let title_words: Vec<&str> = (0..title_len).map(|_| content_word(&mut rng, dim, opts)).collect();
        let title = sentence(&mut rng, title_words);

        let rank = rng.gen_range(0..levels);
        let desc_len = rng.gen_range(18..=30);
        let mut desc_words: Vec<&str> = (0..desc_len).map(|_| content_word(&mut rng, dim, opts)).collect();
        if rng.gen_bool(0.6) {
            let cue_bucket = (rank * SEVERITY_CUES.len()) / levels;
            let at = rng.gen_range(0..desc_words.len());
            desc_words.insert(at, pick(&mut rng, SEVERITY_CUES[cue_bucket]));
        }
        let mut description = sentence(&mut rng, desc_words);
        description.push('.');

        let category = ModelCategory::ALL[rng.gen_range(0..3)];
        let finding_date = base_date + Days::new(rng.gen_range(0..1800));
        let due_date = finding_date + Days::new(rng.gen_range(30..=365));
        let owner = rng.gen_range(1..=12);
        let plan = format!("Revise {} and {} before the next review.", pick(&mut rng, pool(dim)), pick(&mut rng, SHARED));
        out.push(Finding {
            id: format!("F{:0width$}", i + 1),
            title,
            description,
            dimension: Some(dim),
            severity: Some(scale.level(rank)),
            model_category: Some(category),
            finding_date: Some(finding_date),
            due_date: Some(due_date),
            person_to_act: Some(format!("owner_{owner:02}")),
            action_plan: Some(plan),
        });
    }
    Ok(out)
}

/// Train/valid/test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let ok = [train, valid, test].iter().all(|r| *r > 0.0 && *r < 1.0)
            && ((train + valid + test) - 1.0).abs() <= 1e-9;
        if !ok {
            return Err(CorpusError::InvalidRatios(train, valid, test));
        }
        Ok(Self { train, valid, test })
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.valid, self.test]
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.6, valid: 0.2, test: 0.2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratifyOn {
    Dimension,
    Severity,
}

impl StratifyOn {
    pub fn label_of(self, f: &Finding) -> Option<String> {
        match self {
            StratifyOn::Dimension => f.dimension.map(|d| d.as_str().to_string()),
            StratifyOn::Severity => f.severity.as_ref().map(|s| s.0.clone()),
        }
    }

    fn name(self) -> &'static str {
        match self {
            StratifyOn::Dimension => "dimension",
            StratifyOn::Severity => "severity",
        }
    }
}

impl FromStr for StratifyOn {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dimension" => Ok(StratifyOn::Dimension),
            "severity" => Ok(StratifyOn::Severity),
            _ => Err(format!("unknown stratification {s:?}; expected dimension or severity")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Valid,
    Test,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Train, Subset::Valid, Subset::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Valid => "valid",
            Subset::Test => "test",
        }
    }
}

impl FromStr for Subset {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Subset::ALL.iter().copied().find(|x| x.as_str() == s).ok_or(())
    }
}

/// Outcome of a stratified split. Each subset keeps corpus order.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<Finding>,
    pub valid: Vec<Finding>,
    pub test: Vec<Finding>,
    /// Per-finding subset, aligned with the input slice.
    pub membership: Vec<Subset>,
    pub warnings: Vec<String>,
}

/// Stratified three-way split.
///
/// Global subset sizes follow largest-remainder rounding of the ratios.
/// Each stratum gets the floor of its quota per subset; the remaining
/// units are handed out by descending fractional remainder subject to the
/// stratum and subset totals. Within a stratum, members are ordered by a
/// `(seed, stratum, id)` hash, so membership does not depend on input
/// order. Strata with fewer than three members go to train with a warning.
pub fn stratified_split(findings: &[Finding], ratios: SplitRatios, on: StratifyOn, seed: u64) -> Result<Split> {
    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, f) in findings.iter().enumerate() {
        let label = on
            .label_of(f)
            .ok_or_else(|| CorpusError::MissingLabel { id: f.id.clone(), label: on.name() })?;
        strata.entry(label).or_default().push(i);
    }

    let mut membership = vec![Subset::Train; findings.len()];
    let mut warnings = Vec::new();
    let mut eligible: Vec<(&String, &Vec<usize>)> = Vec::new();
    for (name, members) in &strata {
        if members.len() < 3 {
            warnings.push(format!(
                "stratum {name:?} has only {} member(s); assigned to train",
                members.len()
            ));
        } else {
            eligible.push((name, members));
        }
    }

    let r = ratios.as_array();
    let total: usize = eligible.iter().map(|(_, m)| m.len()).sum();
    let targets = largest_remainder(total, &r);

    // floors, then leftovers along rows (strata) and columns (subsets)
    let mut alloc: Vec<[usize; 3]> = Vec::with_capacity(eligible.len());
    let mut remainders = Vec::new();
    let mut row_left = Vec::with_capacity(eligible.len());
    for (s, (_, members)) in eligible.iter().enumerate() {
        let n_s = members.len() as f64;
        let mut cell = [0usize; 3];
        for j in 0..3 {
            let quota = n_s * r[j];
            cell[j] = quota.floor() as usize;
            remainders.push((quota - quota.floor(), s, j));
        }
        row_left.push(members.len() - cell.iter().sum::<usize>());
        alloc.push(cell);
    }
    let mut col_left: Vec<usize> =
        (0..3).map(|j| targets[j] - alloc.iter().map(|c| c[j]).sum::<usize>()).collect();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for &(_, s, j) in &remainders {
        if row_left[s] > 0 && col_left[j] > 0 {
            alloc[s][j] += 1;
            row_left[s] -= 1;
            col_left[j] -= 1;
        }
    }
    // a stratum can still owe units when its best cells were taken; fill
    // in remainder order without the one-unit cap
    while row_left.iter().any(|&x| x > 0) {
        let &(_, s, j) = remainders
            .iter()
            .find(|&&(_, s, j)| row_left[s] > 0 && col_left[j] > 0)
            .expect("row and column leftovers balance");
        alloc[s][j] += 1;
        row_left[s] -= 1;
        col_left[j] -= 1;
    }

    for (s, (name, members)) in eligible.iter().enumerate() {
        let mut keyed: Vec<(u64, &str, usize)> = members
            .iter()
            .map(|&i| (stable_hash(seed, [name.as_bytes(), findings[i].id.as_bytes()]), findings[i].id.as_str(), i))
            .collect();
        keyed.sort();
        let [a_train, a_valid, _] = alloc[s];
        for (rank, &(_, _, i)) in keyed.iter().enumerate() {
            membership[i] = if rank < a_train {
                Subset::Train
            } else if rank < a_train + a_valid {
                Subset::Valid
            } else {
                Subset::Test
            };
        }
    }

    let collect = |which: Subset| -> Vec<Finding> {
        findings.iter().zip(&membership).filter(|(_, m)| **m == which).map(|(f, _)| f.clone()).collect()
    };
    Ok(Split {
        train: collect(Subset::Train),
        valid: collect(Subset::Valid),
        test: collect(Subset::Test),
        membership,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scale() -> SeverityScale {
        SeverityScale::default()
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        assert!(parse_findings_jsonl("", &scale()).unwrap().is_empty());
        assert!(parse_findings_csv("", &scale()).unwrap().is_empty());
    }

    #[test]
    fn minimal_record_has_no_optional_fields() {
        let got = parse_findings_jsonl(r#"{"id":"a","title":"T","description":"D"}"#, &scale()).unwrap();
        assert_eq!(got, vec![Finding::new("a", "T", "D")]);
    }

    #[test]
    fn invalid_dimension_lists_valid_values() {
        let line = r#"{"id":"a","title":"T","description":"D","dimension":"model_inputs"}"#;
        let err = parse_findings_jsonl(line, &scale()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, CorpusError::InvalidDimension { line: 1, .. }));
        for d in Dimension::ALL {
            assert!(msg.contains(d.as_str()), "{msg}");
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"id\":\"a\",\"title\":\"T\",\"description\":\"D\"}\n{not json\n";
        match parse_findings_jsonl(text, &scale()) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = "{\"id\":\"a\",\"title\":\"T\",\"description\":\"D\"}\n{\"id\":\"a\",\"title\":\"T\",\"description\":\"E\"}\n";
        assert!(matches!(parse_findings_jsonl(text, &scale()), Err(CorpusError::DuplicateId { line: 2, .. })));
    }

    #[test]
    fn blank_title_and_reversed_dates_are_rejected() {
        let blank = r#"{"id":"a","title":"  ","description":"D"}"#;
        assert!(matches!(parse_findings_jsonl(blank, &scale()), Err(CorpusError::BlankField { field: "title", .. })));
        let dates = r#"{"id":"a","title":"T","description":"D","finding_date":"2021-05-01","due_date":"2021-04-01"}"#;
        assert!(matches!(parse_findings_jsonl(dates, &scale()), Err(CorpusError::DueBeforeFinding { .. })));
    }

    #[test]
    fn unknown_fields_are_ignored_and_csv_quoting_works() {
        let csv = "id,title,description,extra,dimension\n1,\"A, quoted\",\"multi\nline\",zzz,documentation\n";
        let got = parse_findings_csv(csv, &scale()).unwrap();
        assert_eq!(got[0].title, "A, quoted");
        assert_eq!(got[0].description, "multi\nline");
        assert_eq!(got[0].dimension, Some(Dimension::Documentation));
        let json = r#"{"id":"a","title":"T","description":"D","color":"red","severity":"high"}"#;
        let got = parse_findings_jsonl(json, &scale()).unwrap();
        assert_eq!(got[0].severity.as_ref().unwrap().as_str(), "high");
    }

    #[test]
    fn severity_must_belong_to_scale() {
        let json = r#"{"id":"a","title":"T","description":"D","severity":"extreme"}"#;
        assert!(matches!(parse_findings_jsonl(json, &scale()), Err(CorpusError::InvalidSeverity { .. })));
        assert!(SeverityScale::new(["only"]).is_err());
        assert!(SeverityScale::new(["a", "a"]).is_err());
    }

    #[test]
    fn generator_matches_profile_counts() {
        let profile = LabelProfile::reference();
        let corpus = generate_synthetic_corpus(657, 1, &profile).unwrap();
        assert_eq!(corpus.len(), 657);
        for (dim, expected) in REFERENCE_COUNTS {
            let got = corpus.iter().filter(|f| f.dimension == Some(dim)).count();
            assert_eq!(got, expected as usize, "{dim}");
        }
    }

    #[test]
    fn single_finding_takes_the_most_probable_label() {
        let corpus = generate_synthetic_corpus(1, 9, &LabelProfile::reference()).unwrap();
        assert_eq!(corpus[0].dimension, Some(Dimension::ModelInput));
    }

    #[test]
    fn generator_is_deterministic() {
        let p = LabelProfile::uniform();
        let a = write_findings_jsonl(&generate_synthetic_corpus(50, 3, &p).unwrap());
        let b = write_findings_jsonl(&generate_synthetic_corpus(50, 3, &p).unwrap());
        assert_eq!(a, b);
        let c = write_findings_jsonl(&generate_synthetic_corpus(50, 4, &p).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn profile_validation() {
        assert!(matches!(LabelProfile::new(vec![]), Err(CorpusError::EmptyProfile)));
        assert!(LabelProfile::new(vec![(Dimension::ModelUse, 0.5)]).is_err());
        let p = LabelProfile::parse("model_use=1,documentation=3").unwrap();
        assert_eq!(p.counts(4), vec![(Dimension::ModelUse, 1), (Dimension::Documentation, 3)]);
        assert!(LabelProfile::parse("model_usage=1").is_err());
    }

    #[test]
    fn split_sizes_match_reference_tables() {
        let corpus = generate_synthetic_corpus(657, 1, &LabelProfile::reference()).unwrap();
        let split = stratified_split(&corpus, SplitRatios::default(), StratifyOn::Dimension, 5).unwrap();
        assert_eq!((split.train.len(), split.valid.len(), split.test.len()), (394, 132, 131));
        assert!(split.warnings.is_empty());
    }

    #[test]
    fn single_stratum_exact_fractions() {
        let corpus: Vec<Finding> = (0..10)
            .map(|i| Finding { dimension: Some(Dimension::ModelUse), ..Finding::new(format!("{i}"), "t", "d") })
            .collect();
        let split = stratified_split(&corpus, SplitRatios::default(), StratifyOn::Dimension, 1).unwrap();
        assert_eq!((split.train.len(), split.valid.len(), split.test.len()), (6, 2, 2));
    }

    #[test]
    fn tiny_stratum_goes_to_train_with_warning() {
        let mut corpus: Vec<Finding> = (0..10)
            .map(|i| Finding { dimension: Some(Dimension::ModelUse), ..Finding::new(format!("{i}"), "t", "d") })
            .collect();
        corpus.push(Finding { dimension: Some(Dimension::Documentation), ..Finding::new("x", "t", "d") });
        let split = stratified_split(&corpus, SplitRatios::default(), StratifyOn::Dimension, 1).unwrap();
        assert_eq!(split.warnings.len(), 1);
        assert!(split.train.iter().any(|f| f.id == "x"));
        assert_eq!(split.train.len() + split.valid.len() + split.test.len(), 11);
    }

    #[test]
    fn missing_label_is_an_error() {
        let corpus = vec![Finding::new("a", "t", "d")];
        assert!(matches!(
            stratified_split(&corpus, SplitRatios::default(), StratifyOn::Severity, 1),
            Err(CorpusError::MissingLabel { .. })
        ));
    }

    #[test]
    fn ratios_are_validated() {
        assert!(SplitRatios::new(0.6, 0.2, 0.2).is_ok());
        assert!(SplitRatios::new(0.6, 0.3, 0.2).is_err());
        assert!(SplitRatios::new(1.0, 0.0, 0.0).is_err());
    }
}
