//! Second-order gradient boosted trees and a logistic regression baseline.
//!
//! Multiclass boosting uses the softmax cross-entropy with one regression
//! tree per class per round and a diagonal Hessian. A tree is fitted to the
//! per-instance pairs `(g, h)`; a leaf holding instances with gradient sum
//! `G` and Hessian sum `H` gets the weight `-G / (H + lambda)`, and a split
//! is scored by
//!
//! ```text
//! gain = 1/2 [ G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda) ] - gamma
//! ```
//!
//! which is the drop in the regularized quadratic objective
//! `sum_j [ G_j w_j + 1/2 (H_j + lambda) w_j^2 ] + gamma T`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod logreg;
mod model;
mod tree;
mod tune;

pub use logreg::{logreg_objective, train_logreg, LogRegModel, LogRegParams};
pub use model::{predict_boosted, train_boosted, train_boosted_traced, BoostedModel, TrainingTrace};
pub use tree::{best_split, Node, RegressionTree, SplitCandidate};
pub use tune::{parse_grid, tune, TuneGrid, TuneRecord, TuneResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoostError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("training needs at least two distinct classes")]
    SingleClass,
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("label {label} is out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("input has {got} features, the model expects {expected}")]
    LayoutMismatch { got: usize, expected: usize },
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("model JSON: {0}")]
    Json(String),
    #[error("tuning grid: {0}")]
    Grid(String),
}

pub type Result<T> = std::result::Result<T, BoostError>;

/// Boosting hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    /// Trees per class.
    pub rounds: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Penalty per leaf; a split must gain more than this.
    pub gamma: f64,
    pub max_depth: usize,
    pub min_child_hessian: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self { rounds: 100, learning_rate: 0.3, lambda: 1.0, gamma: 0.0, max_depth: 6, min_child_hessian: 1e-3, seed: 0 }
    }
}

impl BoostParams {
    /// A learning rate of 0 is accepted so the prior-only model can be
    /// produced through the same path.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BoostError::InvalidParam(m.to_string()));
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return bad("learning_rate must lie in [0, 1]");
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be finite and non-negative");
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad("gamma must be finite and non-negative");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if !(self.min_child_hessian >= 0.0) || !self.min_child_hessian.is_finite() {
            return bad("min_child_hessian must be finite and non-negative");
        }
        Ok(())
    }
}

/// First and second derivative of the loss with respect to one raw score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientPair {
    pub g: f64,
    pub h: f64,
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy `-log softmax(scores)[label]`.
pub fn softmax_loss(label: usize, scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    lse - scores[label]
}

/// Per-class `(g, h)` for one instance: `g_c = p_c - [label = c]` and
/// `h_c = p_c (1 - p_c)`.
pub fn softmax_grad_hess(label: usize, scores: &[f64]) -> Vec<GradientPair> {
    softmax(scores)
        .into_iter()
        .enumerate()
        .map(|(c, p)| GradientPair { g: p - if c == label { 1.0 } else { 0.0 }, h: p * (1.0 - p) })
        .collect()
}

/// `-G / (H + lambda)`.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> Result<f64> {
    let den = h + lambda;
    if !(den > 0.0) {
        return Err(BoostError::Numeric(format!("leaf with H + lambda = {den}")));
    }
    Ok(-g / den)
}

/// Gain of splitting a node with sums `(g, h)` into `(gl, hl)` and the rest.
pub fn split_gain(gl: f64, hl: f64, g: f64, h: f64, lambda: f64, gamma: f64) -> f64 {
    let (gr, hr) = (g - gl, h - hl);
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}
