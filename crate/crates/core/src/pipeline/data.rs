//! Reading stage artifacts back and assembling feature matrices.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{ClusterFeatures, ExperimentConfig, Target};
use super::{PipelineError, Result};
use crate::corpus::{parse_findings_jsonl, Dimension, Finding, Subset};
use crate::embedspace::{fuse_features, load_embeddings, Block, EmbeddingMatrix, FeatureLayout};
use crate::linalg::{normalize_in_place, Matrix};
use crate::textprep::{vectorize, Lemmatizer, Preprocessor, Stopwords, Vocabulary};

pub(crate) const FINDINGS: &str = "findings.jsonl";
pub(crate) const SPLIT: &str = "split.csv";
pub(crate) const TOKENS: &str = "tokens.jsonl";
pub(crate) const VOCABULARY: &str = "vocabulary.csv";
pub(crate) const TITLE_EMB: &str = "title.emb";
pub(crate) const DESCRIPTION_EMB: &str = "description.emb";
pub(crate) const SWEEP: &str = "sweep.json";

/// Path of an artifact that must already exist.
pub(crate) fn require(dir: &Path, artifact: &str, stage: &str) -> Result<PathBuf> {
    let path = dir.join(artifact);
    if path.is_file() {
        Ok(path)
    } else {
        Err(PipelineError::MissingArtifact { artifact: artifact.to_string(), stage: stage.to_string() })
    }
}

pub(crate) fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

pub(crate) fn read_findings(config: &ExperimentConfig) -> Result<Vec<Finding>> {
    let path = require(&config.output_dir, FINDINGS, "synth` or `ingest")?;
    Ok(parse_findings_jsonl(&read(&path)?, &config.severity_scale()?)?)
}

pub(crate) fn split_csv(findings: &[Finding], membership: &[Subset]) -> String {
    let mut out = String::from("id,subset\n");
    for (f, s) in findings.iter().zip(membership) {
        out.push_str(&format!("{},{}\n", f.id, s.as_str()));
    }
    out
}

/// Subset of every finding, in corpus order.
pub(crate) fn read_split(config: &ExperimentConfig, findings: &[Finding]) -> Result<Vec<Subset>> {
    let text = read(&require(&config.output_dir, SPLIT, "split")?)?;
    let mut lines = text.lines();
    if lines.next() != Some("id,subset") {
        return Err(PipelineError::Data(format!("{SPLIT}: bad header")));
    }
    let mut out = Vec::with_capacity(findings.len());
    for (line, f) in lines.zip(findings) {
        let (id, subset) = line.split_once(',').ok_or_else(|| PipelineError::Data(format!("{SPLIT}: bad row {line:?}")))?;
        if id != f.id {
            return Err(PipelineError::Data(format!("{SPLIT} does not match {FINDINGS}; rerun `split`")));
        }
        out.push(subset.parse().map_err(|_| PipelineError::Data(format!("{SPLIT}: unknown subset {subset:?}")))?);
    }
    if out.len() != findings.len() {
        return Err(PipelineError::Data(format!("{SPLIT} does not match {FINDINGS}; rerun `split`")));
    }
    Ok(out)
}

pub(crate) fn preprocessor(config: &ExperimentConfig) -> Result<Preprocessor> {
    let stopwords = match &config.text.stopwords {
        Some(p) => Stopwords::parse(&read(p)?),
        None => Stopwords::default(),
    };
    let lemmatizer = match &config.text.lemma_exceptions {
        Some(p) => Lemmatizer::parse(&read(p)?)?,
        None => Lemmatizer::default(),
    };
    Ok(Preprocessor::new(stopwords, lemmatizer))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct TokenRecord {
    pub id: String,
    pub title: Vec<String>,
    pub description: Vec<String>,
}

pub(crate) fn read_tokens(config: &ExperimentConfig, findings: &[Finding]) -> Result<Vec<TokenRecord>> {
    let text = read(&require(&config.output_dir, TOKENS, "preprocess")?)?;
    let records: Vec<TokenRecord> = text
        .lines()
        .map(|l| serde_json::from_str(l).map_err(|e| PipelineError::Data(format!("{TOKENS}: {e}"))))
        .collect::<Result<_>>()?;
    if records.len() != findings.len() || records.iter().zip(findings).any(|(r, f)| r.id != f.id) {
        return Err(PipelineError::Data(format!("{TOKENS} does not match {FINDINGS}; rerun `preprocess`")));
    }
    Ok(records)
}

pub(crate) fn vocabulary_csv(title: &Vocabulary, description: &Vocabulary) -> String {
    let mut out = String::from("block,token,doc_freq\n");
    for (name, v) in [("title", title), ("description", description)] {
        for (t, df) in v.tokens().iter().zip(v.doc_freq()) {
            out.push_str(&format!("{name},{t},{df}\n"));
        }
    }
    out
}

pub(crate) fn read_vocabularies(config: &ExperimentConfig) -> Result<(Vocabulary, Vocabulary)> {
    let text = read(&require(&config.output_dir, VOCABULARY, "preprocess")?)?;
    let mut parts: [(Vec<String>, Vec<usize>); 2] = Default::default();
    for line in text.lines().skip(1) {
        let bad = || PipelineError::Data(format!("{VOCABULARY}: bad row {line:?}"));
        let mut f = line.split(',');
        let (block, token, df) = (f.next().ok_or_else(bad)?, f.next().ok_or_else(bad)?, f.next().ok_or_else(bad)?);
        let slot = match block {
            "title" => 0,
            "description" => 1,
            _ => return Err(bad()),
        };
        parts[slot].0.push(token.to_string());
        parts[slot].1.push(df.parse().map_err(|_| bad())?);
    }
    let [(tt, tdf), (dt, ddf)] = parts;
    let min_df = config.text.min_df;
    Ok((Vocabulary::from_parts(tt, tdf, min_df), Vocabulary::from_parts(dt, ddf, min_df)))
}

fn embeddings_for(config: &ExperimentConfig, configured: &Option<PathBuf>, artifact: &str) -> Result<EmbeddingMatrix> {
    match configured {
        Some(p) => Ok(load_embeddings(p)?),
        None => Ok(load_embeddings(&require(&config.output_dir, artifact, "embed-hash")?)?),
    }
}

/// Rows of `m` in the order of `ids`.
fn aligned_rows<'a>(m: &'a EmbeddingMatrix, ids: &[String], what: &str) -> Result<Vec<&'a [f64]>> {
    ids.iter()
        .map(|id| {
            m.position(id)
                .map(|i| m.row(i))
                .ok_or_else(|| PipelineError::Data(format!("{what} embeddings have no row for finding {id:?}")))
        })
        .collect()
}

/// Fused features and targets for the whole corpus.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub layout: Arc<FeatureLayout>,
    pub x: Matrix,
    pub targets: Vec<usize>,
    pub classes: Vec<String>,
    pub subsets: Vec<Subset>,
}

impl Dataset {
    pub fn indices(&self, subset: Subset) -> Vec<usize> {
        (0..self.ids.len()).filter(|&i| self.subsets[i] == subset).collect()
    }

    pub fn rows(&self, subset: Subset) -> (Matrix, Vec<usize>, Vec<usize>) {
        let idx = self.indices(subset);
        let targets = idx.iter().map(|&i| self.targets[i]).collect();
        (self.x.select_rows(&idx), targets, idx)
    }
}

pub(crate) fn class_names(config: &ExperimentConfig) -> Result<Vec<String>> {
    Ok(match config.target {
        Target::Dimension => Dimension::ALL.iter().map(|d| d.as_str().to_string()).collect(),
        Target::Severity => config.severity_scale()?.levels().to_vec(),
    })
}

pub(crate) fn targets_of(config: &ExperimentConfig, findings: &[Finding]) -> Result<Vec<usize>> {
    let scale = config.severity_scale()?;
    findings
        .iter()
        .map(|f| {
            let t = match config.target {
                Target::Dimension => f.dimension.map(Dimension::index),
                Target::Severity => f.severity.as_ref().and_then(|s| scale.rank(s)),
            };
            t.ok_or_else(|| PipelineError::Data(format!("finding {:?} has no {:?} label", f.id, config.target)))
        })
        .collect()
}

/// Loads findings, split, tokens, vocabularies and embeddings from the
/// output directory and fuses them into one matrix.
pub fn build_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let findings = read_findings(config)?;
    let subsets = read_split(config, &findings)?;
    let tokens = read_tokens(config, &findings)?;
    let (title_vocab, description_vocab) = read_vocabularies(config)?;
    let title_emb = embeddings_for(config, &config.data.title_embeddings, TITLE_EMB)?;
    let description_emb = embeddings_for(config, &config.data.description_embeddings, DESCRIPTION_EMB)?;
    let ids: Vec<String> = findings.iter().map(|f| f.id.clone()).collect();
    let title_rows = aligned_rows(&title_emb, &ids, "title")?;
    let description_rows = aligned_rows(&description_emb, &ids, "description")?;

    let layout = Arc::new(FeatureLayout::new(
        title_vocab.tokens().to_vec(),
        description_vocab.tokens().to_vec(),
        title_emb.dim(),
        description_emb.dim(),
    ));
    let mut values = Vec::with_capacity(ids.len() * layout.total());
    for (i, rec) in tokens.iter().enumerate() {
        let fv = fuse_features(
            &vectorize(&rec.title, &title_vocab),
            &vectorize(&rec.description, &description_vocab),
            title_rows[i],
            description_rows[i],
            &layout,
        )?;
        values.extend(fv.values);
    }
    let x = Matrix::from_vec(ids.len(), layout.total(), values);
    if !x.is_finite() {
        return Err(PipelineError::Data("feature matrix contains non-finite values".into()));
    }
    Ok(Dataset { ids, layout, x, targets: targets_of(config, &findings)?, classes: class_names(config)?, subsets })
}

/// Columns used for clustering, with every embedding block scaled to unit
/// length per row.
pub fn cluster_matrix(ds: &Dataset, features: ClusterFeatures) -> Matrix {
    let blocks: &[Block] = match features {
        ClusterFeatures::Title => &[Block::TitleEmbedding],
        ClusterFeatures::Description => &[Block::DescriptionEmbedding],
        ClusterFeatures::Fused => &Block::ALL,
    };
    let width: usize = blocks.iter().map(|&b| ds.layout.width(b)).sum();
    let mut out = Matrix::zeros(ds.x.rows(), width);
    for i in 0..ds.x.rows() {
        let src = ds.x.row(i);
        let dst = out.row_mut(i);
        let mut at = 0;
        for &b in blocks {
            let r = ds.layout.range(b);
            let len = r.len();
            dst[at..at + len].copy_from_slice(&src[r]);
            if !b.is_bag() {
                normalize_in_place(&mut dst[at..at + len]);
            }
            at += len;
        }
    }
    out
}
