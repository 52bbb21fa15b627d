use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, Presorted};
use super::{softmax, softmax_grad_hess, softmax_loss, BoostError, BoostParams, GradientPair, Node, RegressionTree, Result};
use crate::linalg::Matrix;

/// Trained multiclass ensemble. The margin of class `c` is
/// `base_score[c] + learning_rate * sum_k trees[c][k](x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub classes: Vec<String>,
    pub n_features: usize,
    pub base_score: Vec<f64>,
    /// `trees[c][k]` is the tree of class `c` from round `k`.
    pub trees: Vec<Vec<RegressionTree>>,
    pub params: BoostParams,
}

/// Training loss and regularized objective, before the first round and
/// after each round.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Summed cross-entropy over the training rows.
    pub loss: Vec<f64>,
    /// `loss` plus the complexity of all trees so far, counted as
    /// `gamma T + 1/2 lambda sum w^2` on the shrunk leaf values.
    pub objective: Vec<f64>,
}

pub(crate) fn check_training_input(x: &Matrix, labels: &[usize], n_classes: usize) -> Result<()> {
    if x.rows() != labels.len() {
        return Err(BoostError::LengthMismatch { rows: x.rows(), labels: labels.len() });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(BoostError::LabelOutOfRange { label, classes: n_classes });
    }
    if !x.is_finite() {
        return Err(BoostError::NonFinite);
    }
    let first = labels.first().copied();
    if first.is_none() || labels.iter().all(|&l| Some(l) == first) {
        return Err(BoostError::SingleClass);
    }
    Ok(())
}

/// Log class priors. A class without training rows gets half a count so
/// its score stays finite.
fn log_priors(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    counts.iter().map(|&c| if c > 0 { (c as f64 / n).ln() } else { (0.5 / n).ln() }).collect()
}

fn complexity(tree: &RegressionTree, params: &BoostParams) -> f64 {
    let eta = params.learning_rate;
    params.gamma * tree.n_leaves() as f64 + 0.5 * params.lambda * tree.leaves().map(|w| (eta * w) * (eta * w)).sum::<f64>()
}

pub fn train_boosted(x: &Matrix, labels: &[usize], classes: &[String], params: &BoostParams) -> Result<BoostedModel> {
    train_boosted_traced(x, labels, classes, params).map(|(m, _)| m)
}

/// Boosting from the log priors: each round computes `(g, h)` at the
/// current scores, grows one tree per class, and adds its shrunk output.
pub fn train_boosted_traced(
    x: &Matrix,
    labels: &[usize],
    classes: &[String],
    params: &BoostParams,
) -> Result<(BoostedModel, TrainingTrace)> {
    params.validate()?;
    let n_classes = classes.len();
    check_training_input(x, labels, n_classes)?;
    let n = x.rows();
    let base_score = log_priors(labels, n_classes);
    let mut scores: Vec<Vec<f64>> = vec![base_score.clone(); n];
    let data = Presorted::new(x);
    let mut trees: Vec<Vec<RegressionTree>> = vec![Vec::with_capacity(params.rounds); n_classes];

    let loss_of = |scores: &[Vec<f64>]| labels.iter().zip(scores).map(|(&l, s)| softmax_loss(l, s)).sum::<f64>();
    let mut trace = TrainingTrace::default();
    let mut omega = 0.0;
    trace.loss.push(loss_of(&scores));
    trace.objective.push(trace.loss[0]);

    for _ in 0..params.rounds {
        let pairs: Vec<Vec<GradientPair>> = labels.iter().zip(&scores).map(|(&l, s)| softmax_grad_hess(l, s)).collect();
        let round: Vec<RegressionTree> = (0..n_classes)
            .into_par_iter()
            .map(|c| {
                let column: Vec<GradientPair> = pairs.iter().map(|p| p[c]).collect();
                grow_tree(&data, &column, params)
            })
            .collect::<Result<_>>()?;
        for (c, tree) in round.into_iter().enumerate() {
            if !tree.is_finite() {
                return Err(BoostError::Numeric("non-finite value in a trained tree".into()));
            }
            for (i, s) in scores.iter_mut().enumerate() {
                s[c] += params.learning_rate * tree.predict(x.row(i));
            }
            omega += complexity(&tree, params);
            trees[c].push(tree);
        }
        let loss = loss_of(&scores);
        if !loss.is_finite() {
            return Err(BoostError::Numeric("training loss is not finite".into()));
        }
        trace.loss.push(loss);
        trace.objective.push(loss + omega);
    }

    let model = BoostedModel { classes: classes.to_vec(), n_features: x.cols(), base_score, trees, params: params.clone() };
    Ok((model, trace))
}

impl BoostedModel {
    pub fn n_rounds(&self) -> usize {
        self.trees.first().map_or(0, Vec::len)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(BoostError::LayoutMismatch { got: x.len(), expected: self.n_features });
        }
        Ok(())
    }

    /// Per-class raw scores, accumulated in round order.
    pub fn margins(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let eta = self.params.learning_rate;
        Ok(self
            .base_score
            .iter()
            .zip(&self.trees)
            .map(|(&base, trees)| trees.iter().fold(base, |s, t| s + eta * t.predict(x)))
            .collect())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.margins(x)?))
    }

    /// Most probable class; ties go to the lower index.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        let m = self.margins(x)?;
        Ok(argmax(&m))
    }

    pub fn predict_classes(&self, x: &Matrix) -> Result<Vec<usize>> {
        x.iter_rows().map(|r| self.predict_class(r)).collect()
    }

    /// The model after its first `rounds` rounds.
    pub fn truncated(&self, rounds: usize) -> Self {
        let mut m = self.clone();
        for t in &mut m.trees {
            t.truncate(rounds);
        }
        m.params.rounds = rounds.min(self.n_rounds());
        m
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    /// Parses and structurally validates a model document.
    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| BoostError::Json(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BoostError::Json(m));
        let c = self.classes.len();
        if c < 2 || self.base_score.len() != c || self.trees.len() != c {
            return bad("class list, base scores and tree lists must agree and hold at least two classes".into());
        }
        if self.trees.iter().any(|t| t.len() != self.trees[0].len()) {
            return bad("every class needs the same number of trees".into());
        }
        if !self.base_score.iter().all(|v| v.is_finite()) {
            return bad("base scores must be finite".into());
        }
        self.params.validate().or_else(|e| bad(e.to_string()))?;
        for tree in self.trees.iter().flatten() {
            if tree.nodes.is_empty() || !tree.is_finite() {
                return bad("trees must be nonempty and finite".into());
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                if let Node::Split { feature, left, right, .. } = *node {
                    // children after their parent rules out cycles
                    if feature >= self.n_features || left <= i || right <= i || left >= tree.nodes.len() || right >= tree.nodes.len() {
                        return bad(format!("malformed split node {i}"));
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Class probabilities for one row.
pub fn predict_boosted(model: &BoostedModel, x: &[f64]) -> Result<Vec<f64>> {
    model.predict_proba(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boostlab::{leaf_weight, best_split};

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn toy() -> (Matrix, Vec<usize>) {
        let rows: Vec<[f64; 2]> = (0..40).map(|i| [(i % 10) as f64, (i / 10) as f64]).collect();
        let labels = (0..40).map(|i| usize::from(i % 10 >= 5) + usize::from(i / 10 >= 3)).collect();
        (Matrix::from_rows(&rows), labels)
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        assert_eq!(train_boosted(&x, &[1, 1], &names(2), &BoostParams::default()).unwrap_err(), BoostError::SingleClass);
    }

    #[test]
    fn zero_learning_rate_keeps_priors() {
        let (x, y) = toy();
        let params = BoostParams { learning_rate: 0.0, rounds: 5, ..Default::default() };
        let m = train_boosted(&x, &y, &names(3), &params).unwrap();
        for r in x.iter_rows() {
            assert_eq!(m.margins(r).unwrap(), m.base_score);
        }
        let mut counts = [0.0; 3];
        y.iter().for_each(|&l| counts[l] += 1.0);
        for c in 0..3 {
            assert!((m.base_score[c] - (counts[c] / 40.0f64).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_ensemble_predicts_priors() {
        let (x, y) = toy();
        let m = train_boosted(&x, &y, &names(3), &BoostParams::default()).unwrap().truncated(0);
        let p = predict_boosted(&m, x.row(0)).unwrap();
        assert_eq!(p, softmax(&m.base_score));
    }

    #[test]
    fn stump_matches_hand_construction() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]);
        let y = [0, 0, 1, 1];
        let params = BoostParams { rounds: 1, max_depth: 1, ..Default::default() };
        let m = train_boosted(&x, &y, &names(2), &params).unwrap();
        // both classes start at log(1/2); p = 1/2 everywhere
        let pairs: Vec<GradientPair> = y.iter().map(|&l| softmax_grad_hess(l, &m.base_score)[0]).collect();
        let split = best_split(&x, &[0, 1, 2, 3], &pairs, &params).unwrap();
        assert_eq!(split.threshold, 2.5);
        let left = leaf_weight(-1.0, 0.5, 1.0).unwrap();
        let right = leaf_weight(1.0, 0.5, 1.0).unwrap();
        let tree = &m.trees[0][0];
        assert_eq!(tree.predict(&[1.5]), left);
        assert_eq!(tree.predict(&[3.5]), right);
        let margin = m.margins(&[1.0]).unwrap()[0];
        assert_eq!(margin, 0.5f64.ln() + 0.3 * left);
    }

    #[test]
    fn layout_mismatch_and_json_round_trip() {
        let (x, y) = toy();
        let m = train_boosted(&x, &y, &names(3), &BoostParams { rounds: 3, ..Default::default() }).unwrap();
        assert!(m.margins(&[1.0]).is_err());
        let text = m.to_json();
        let back = BoostedModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), text);
        assert!(BoostedModel::from_json("{}").is_err());
    }

    #[test]
    fn learns_the_toy_grid() {
        let (x, y) = toy();
        let (m, trace) = train_boosted_traced(&x, &y, &names(3), &BoostParams { rounds: 30, ..Default::default() }).unwrap();
        assert_eq!(m.predict_classes(&x).unwrap(), y);
        for w in trace.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }
}
