//! Token rankings and per-instance feature contributions.
//!
//! Contributions follow the decision path: every split on the way to the
//! leaf credits its feature with the change in the expected subtree value,
//! where a subtree's expected value is the Hessian-weighted mean of its
//! leaves. Summed over the path this telescopes to `leaf - root`, so the
//! baseline plus all contributions reproduces the margin exactly. These are
//! path attributions, not Shapley values: a feature's credit depends on
//! where in the tree it is split.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boostlab::{BoostedModel, LogRegModel, Node};
use crate::embedspace::{Block, FeatureLayout, FeatureSlot};
use crate::util::fmt_f64;

#[derive(Debug, Error, PartialEq)]
pub enum AttribError {
    #[error("top_k must be at least 1")]
    TopK,
    #[error("layout has {got} features, the model expects {expected}")]
    Layout { got: usize, expected: usize },
    #[error("class {class} is out of range for {classes} classes")]
    Class { class: usize, classes: usize },
}

pub type Result<T> = std::result::Result<T, AttribError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedToken {
    pub token: String,
    pub score: f64,
}

/// Highest-scoring tokens per class, best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenRanking {
    pub classes: Vec<String>,
    pub per_class: Vec<Vec<RankedToken>>,
    pub top_k: usize,
}

fn top(scores: BTreeMap<&str, f64>, top_k: usize) -> Vec<RankedToken> {
    let mut v: Vec<RankedToken> = scores.into_iter().map(|(t, s)| RankedToken { token: t.to_string(), score: s }).collect();
    // BTreeMap order is lexicographic and the sort is stable
    v.sort_by(|a, b| b.score.total_cmp(&a.score));
    v.truncate(top_k);
    v
}

fn check_layout(layout: &FeatureLayout, expected: usize, top_k: usize) -> Result<()> {
    if top_k < 1 {
        return Err(AttribError::TopK);
    }
    if layout.total() != expected {
        return Err(AttribError::Layout { got: layout.total(), expected });
    }
    Ok(())
}

/// Token importance as the summed split gain of that token's bag features
/// in the class's trees. A token present in both bags gets the sum of both
/// columns; embedding components are left out. Only tokens that were split
/// on appear.
pub fn rank_tokens_gain(model: &BoostedModel, layout: &FeatureLayout, top_k: usize) -> Result<TokenRanking> {
    check_layout(layout, model.n_features, top_k)?;
    let per_class = model
        .trees
        .iter()
        .map(|trees| {
            let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
            for node in trees.iter().flat_map(|t| &t.nodes) {
                if let Node::Split { feature, gain, .. } = *node {
                    if let Some(FeatureSlot::Token { token, .. }) = layout.describe(feature) {
                        *scores.entry(token).or_default() += gain;
                    }
                }
            }
            top(scores, top_k)
        })
        .collect();
    Ok(TokenRanking { classes: model.classes.clone(), per_class, top_k })
}

/// Token importance as the absolute standardized coefficient, summed over
/// both bags. Every vocabulary token is scored, so zero weights rank
/// lexicographically.
pub fn rank_tokens_logreg(model: &LogRegModel, layout: &FeatureLayout, top_k: usize) -> Result<TokenRanking> {
    check_layout(layout, model.n_features(), top_k)?;
    let per_class = model
        .weights
        .iter()
        .map(|w| {
            let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
            for (f, &v) in w.iter().enumerate() {
                if let Some(FeatureSlot::Token { token, .. }) = layout.describe(f) {
                    *scores.entry(token).or_default() += v.abs();
                }
            }
            top(scores, top_k)
        })
        .collect();
    Ok(TokenRanking { classes: model.classes.clone(), per_class, top_k })
}

impl TokenRanking {
    /// `class,rank,token,score` rows, ranks from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,rank,token,score\n");
        for (class, entries) in self.classes.iter().zip(&self.per_class) {
            for (r, e) in entries.iter().enumerate() {
                out.push_str(&format!("{class},{},{},{}\n", r + 1, e.token, fmt_f64(e.score)));
            }
        }
        out
    }

    /// One column per class, one row per rank.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| rank |");
        for c in &self.classes {
            out.push_str(&format!(" {c} |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(self.classes.len()));
        out.push('\n');
        let depth = self.per_class.iter().map(Vec::len).max().unwrap_or(0);
        for r in 0..depth {
            out.push_str(&format!("| {} |", r + 1));
            for entries in &self.per_class {
                out.push_str(&format!(" {} |", entries.get(r).map_or("", |e| e.token.as_str())));
            }
            out.push('\n');
        }
        out
    }
}

/// Additive explanation of one class margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub baseline: f64,
    pub contributions: Vec<f64>,
    pub class: usize,
}

impl AttributionVector {
    pub fn reconstruct(&self) -> f64 {
        self.baseline + self.contributions.iter().sum::<f64>()
    }
}

/// Caches the expected node values of every tree.
pub struct PathExplainer<'a> {
    model: &'a BoostedModel,
    expected: Vec<Vec<Vec<f64>>>,
}

impl<'a> PathExplainer<'a> {
    pub fn new(model: &'a BoostedModel) -> Self {
        let expected = model.trees.iter().map(|trees| trees.iter().map(|t| t.expected_values()).collect()).collect();
        Self { model, expected }
    }

    pub fn explain(&self, x: &[f64], class: usize) -> Result<AttributionVector> {
        let m = self.model;
        if x.len() != m.n_features {
            return Err(AttribError::Layout { got: x.len(), expected: m.n_features });
        }
        if class >= m.classes.len() {
            return Err(AttribError::Class { class, classes: m.classes.len() });
        }
        let eta = m.params.learning_rate;
        let mut contributions = vec![0.0; m.n_features];
        let mut baseline = m.base_score[class];
        for (tree, e) in m.trees[class].iter().zip(&self.expected[class]) {
            baseline += eta * e[0];
            let mut i = 0;
            while let Node::Split { feature, threshold, left, right, .. } = tree.nodes[i] {
                let next = if x[feature] <= threshold { left } else { right };
                contributions[feature] += eta * (e[next] - e[i]);
                i = next;
            }
        }
        Ok(AttributionVector { baseline, contributions, class })
    }
}

pub fn path_attribution(model: &BoostedModel, x: &[f64], class: usize) -> Result<AttributionVector> {
    PathExplainer::new(model).explain(x, class)
}

/// Mean over instances of the summed |contribution| within each block.
pub fn block_summary(attributions: &[AttributionVector], layout: &FeatureLayout) -> Vec<(Block, f64)> {
    Block::ALL
        .iter()
        .map(|&block| {
            let range = layout.range(block);
            let total: f64 = attributions
                .iter()
                .map(|a| a.contributions.get(range.clone()).map_or(0.0, |s| s.iter().map(|v| v.abs()).sum()))
                .sum();
            let mean = if attributions.is_empty() { 0.0 } else { total / attributions.len() as f64 };
            (block, mean)
        })
        .collect()
}

/// One JSON object per instance with its nonzero contributions by feature
/// name.
pub fn attributions_jsonl(ids: &[String], attributions: &[AttributionVector], layout: &FeatureLayout, classes: &[String]) -> String {
    #[derive(Serialize)]
    struct Line<'a> {
        id: &'a str,
        class: &'a str,
        baseline: f64,
        contributions: BTreeMap<String, f64>,
    }
    let mut out = String::new();
    for (id, a) in ids.iter().zip(attributions) {
        let contributions =
            a.contributions.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(f, &v)| (layout.feature_name(f), v)).collect();
        let line = Line { id, class: &classes[a.class], baseline: a.baseline, contributions };
        out.push_str(&serde_json::to_string(&line).expect("serializes"));
        out.push('\n');
    }
    out
}
