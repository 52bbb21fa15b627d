use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{leaf_weight, split_gain, BoostParams, GradientPair, Result};
use crate::linalg::Matrix;

/// A node of a regression tree. Instances with `x[feature] <= threshold`
/// go left. `cover` is the Hessian sum of the training instances that
/// reached the node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize, gain: f64, cover: f64 },
    Leaf { weight: f64, cover: f64 },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }
}

/// Binary tree stored in preorder; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    /// Index of the leaf that `x` reaches.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Raw (unshrunk) leaf weight for `x`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { weight, .. } => weight,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { weight, .. } => Some(weight),
            Node::Split { .. } => None,
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Hessian-weighted mean leaf value of every subtree. A subtree with
    /// zero cover falls back to the plain mean of its children.
    pub fn expected_values(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.nodes.len()];
        // preorder: children always follow their parent
        for i in (0..self.nodes.len()).rev() {
            e[i] = match self.nodes[i] {
                Node::Leaf { weight, .. } => weight,
                Node::Split { left, right, cover, .. } => {
                    let (cl, cr) = (self.nodes[left].cover(), self.nodes[right].cover());
                    if cover > 0.0 && cl + cr > 0.0 {
                        (cl * e[left] + cr * e[right]) / (cl + cr)
                    } else {
                        0.5 * (e[left] + e[right])
                    }
                }
            };
        }
        e
    }

    pub fn is_finite(&self) -> bool {
        self.nodes.iter().all(|n| match *n {
            Node::Leaf { weight, cover } => weight.is_finite() && cover.is_finite(),
            Node::Split { threshold, gain, cover, .. } => threshold.is_finite() && gain.is_finite() && cover.is_finite(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Point strictly between `a < b` that sends `a` left and `b` right under
/// `x <= t`. The midpoint unless rounding pushes it onto `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) * 0.5;
    if m >= b || !m.is_finite() {
        a
    } else {
        m
    }
}

/// Best threshold on one feature. `sorted` holds the node's instances in
/// ascending feature order; the scan keeps the first maximum, so ties go to
/// the lowest threshold.
fn scan_feature(
    column: &[f64],
    sorted: &[usize],
    grads: &[GradientPair],
    g: f64,
    h: f64,
    params: &BoostParams,
) -> Option<(f64, f64)> {
    let (first, last) = (column[*sorted.first()?], column[*sorted.last()?]);
    if first == last {
        return None;
    }
    let mut best: Option<(f64, f64)> = None;
    let (mut gl, mut hl) = (0.0, 0.0);
    for w in sorted.windows(2) {
        let (i, j) = (w[0], w[1]);
        gl += grads[i].g;
        hl += grads[i].h;
        let (a, b) = (column[i], column[j]);
        if a == b {
            continue;
        }
        let hr = h - hl;
        if hl < params.min_child_hessian || hr < params.min_child_hessian {
            continue;
        }
        if !(hl + params.lambda > 0.0) || !(hr + params.lambda > 0.0) {
            continue;
        }
        let gain = split_gain(gl, hl, g, h, params.lambda, params.gamma);
        if gain > 0.0 && best.is_none_or(|(b, _)| gain > b) {
            best = Some((gain, midpoint(a, b)));
        }
    }
    best
}

/// Best split over `features`, each paired with the node's instances sorted
/// by that feature. Ties go to the earlier feature in the list.
#[allow(clippy::too_many_arguments)]
fn best_over(
    columns: &[Vec<f64>],
    features: &[usize],
    lists: &[Vec<usize>],
    grads: &[GradientPair],
    g: f64,
    h: f64,
    params: &BoostParams,
    parallel: bool,
) -> Option<SplitCandidate> {
    let scan = |(&f, sorted): (&usize, &Vec<usize>)| {
        scan_feature(&columns[f], sorted, grads, g, h, params).map(|(gain, threshold)| SplitCandidate { feature: f, threshold, gain })
    };
    let per_feature: Vec<Option<SplitCandidate>> = if parallel {
        features.par_iter().zip(lists.par_iter()).map(scan).collect()
    } else {
        features.iter().zip(lists).map(scan).collect()
    };
    per_feature.into_iter().flatten().fold(None, |best: Option<SplitCandidate>, c| match best {
        Some(b) if b.gain >= c.gain => Some(b),
        _ => Some(c),
    })
}

/// Exact greedy split search for the node holding `instances`. `grads` is
/// indexed by row of `x`. Returns the split with the largest positive gain
/// whose children both reach `min_child_hessian`; ties go to the lowest
/// feature index, then the lowest threshold.
pub fn best_split(x: &Matrix, instances: &[usize], grads: &[GradientPair], params: &BoostParams) -> Option<SplitCandidate> {
    let columns = columns_of(x);
    let g: f64 = instances.iter().map(|&i| grads[i].g).sum();
    let h: f64 = instances.iter().map(|&i| grads[i].h).sum();
    let lists: Vec<Vec<usize>> = columns.iter().map(|col| sorted_by(col, instances)).collect();
    let features: Vec<usize> = (0..x.cols()).collect();
    best_over(&columns, &features, &lists, grads, g, h, params, false)
}

pub(crate) fn columns_of(x: &Matrix) -> Vec<Vec<f64>> {
    (0..x.cols()).map(|f| x.iter_rows().map(|r| r[f]).collect()).collect()
}

/// `instances` stably sorted by `column` value.
pub(crate) fn sorted_by(column: &[f64], instances: &[usize]) -> Vec<usize> {
    let mut v = instances.to_vec();
    v.sort_by(|&a, &b| column[a].total_cmp(&column[b]).then(a.cmp(&b)));
    v
}

/// Shared, per-training data for growing trees.
pub(crate) struct Presorted {
    pub columns: Vec<Vec<f64>>,
    /// Features that take more than one value on the training rows.
    pub active: Vec<usize>,
    /// Per active feature, all training rows in ascending order.
    pub sorted: Vec<Vec<usize>>,
    pub n: usize,
}

impl Presorted {
    pub fn new(x: &Matrix) -> Self {
        let columns = columns_of(x);
        let all: Vec<usize> = (0..x.rows()).collect();
        let active: Vec<usize> = (0..x.cols())
            .filter(|&f| columns[f].iter().any(|&v| v != columns[f][0]))
            .collect();
        let sorted = active.iter().map(|&f| sorted_by(&columns[f], &all)).collect();
        Self { columns, active, sorted, n: x.rows() }
    }
}

/// Below this many (instance, feature) pairs a node is scanned serially.
const PARALLEL_WORK: usize = 50_000;

struct Grower<'a> {
    data: &'a Presorted,
    grads: &'a [GradientPair],
    params: &'a BoostParams,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

impl Grower<'_> {
    fn grow(&mut self, lists: Vec<Vec<usize>>, members: &[usize], depth: usize) -> Result<usize> {
        let id = self.nodes.len();
        let g: f64 = members.iter().map(|&i| self.grads[i].g).sum();
        let h: f64 = members.iter().map(|&i| self.grads[i].h).sum();
        self.nodes.push(Node::Leaf { weight: 0.0, cover: h });

        let split = if depth < self.params.max_depth && members.len() > 1 && !lists.is_empty() {
            let parallel = members.len() * lists.len() >= PARALLEL_WORK;
            best_over(&self.data.columns, &self.data.active, &lists, self.grads, g, h, self.params, parallel)
        } else {
            None
        };
        let Some(split) = split else {
            self.nodes[id] = Node::Leaf { weight: leaf_weight(g, h, self.params.lambda)?, cover: h };
            return Ok(id);
        };

        let column = &self.data.columns[split.feature];
        for &i in members {
            self.goes_left[i] = column[i] <= split.threshold;
        }
        let (mut left_lists, mut right_lists) = (Vec::with_capacity(lists.len()), Vec::with_capacity(lists.len()));
        for list in lists {
            let (l, r): (Vec<usize>, Vec<usize>) = list.into_iter().partition(|&i| self.goes_left[i]);
            left_lists.push(l);
            right_lists.push(r);
        }
        let (left_members, right_members): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| self.goes_left[i]);

        let left = self.grow(left_lists, &left_members, depth + 1)?;
        let right = self.grow(right_lists, &right_members, depth + 1)?;
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right, gain: split.gain, cover: h };
        Ok(id)
    }
}

/// Grows one tree depth-first on all training rows.
pub(crate) fn grow_tree(data: &Presorted, grads: &[GradientPair], params: &BoostParams) -> Result<RegressionTree> {
    let members: Vec<usize> = (0..data.n).collect();
    let mut grower = Grower { data, grads, params, nodes: Vec::new(), goes_left: vec![false; data.n] };
    grower.grow(data.sorted.clone(), &members, 0)?;
    Ok(RegressionTree { nodes: grower.nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp(g: &[f64]) -> Vec<GradientPair> {
        g.iter().map(|&g| GradientPair { g, h: 1.0 }).collect()
    }

    fn plain() -> BoostParams {
        BoostParams { lambda: 0.0, gamma: 0.0, min_child_hessian: 0.0, ..Default::default() }
    }

    #[test]
    fn hand_example() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]);
        let s = best_split(&x, &[0, 1, 2, 3], &gp(&[-1.0, -1.0, 1.0, 1.0]), &plain()).unwrap();
        assert_eq!(s, SplitCandidate { feature: 0, threshold: 2.5, gain: 2.0 });
    }

    #[test]
    fn constant_features_give_no_split() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [1.0, 5.0], [1.0, 5.0]]);
        assert_eq!(best_split(&x, &[0, 1, 2], &gp(&[-1.0, 0.0, 1.0]), &plain()), None);
    }

    #[test]
    fn ties_go_to_the_lowest_feature() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0]]);
        let s = best_split(&x, &[0, 1], &gp(&[-1.0, 1.0]), &plain()).unwrap();
        assert_eq!(s.feature, 0);
    }

    #[test]
    fn gamma_and_min_child_hessian_block_splits() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]);
        let g = gp(&[-1.0, -1.0, 1.0, 1.0]);
        assert_eq!(best_split(&x, &[0, 1, 2, 3], &g, &BoostParams { gamma: 2.0, ..plain() }), None);
        assert_eq!(best_split(&x, &[0, 1, 2, 3], &g, &BoostParams { min_child_hessian: 2.5, ..plain() }), None);
    }

    #[test]
    fn adjacent_floats_split_cleanly() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = midpoint(a, b);
        assert!(a <= t && b > t);
    }

    #[test]
    fn grown_tree_respects_depth_and_routes() {
        let rows: Vec<[f64; 2]> = (0..16).map(|i| [i as f64, (i % 4) as f64]).collect();
        let x = Matrix::from_rows(&rows);
        let g: Vec<GradientPair> = (0..16).map(|i| GradientPair { g: if i % 3 == 0 { 1.0 } else { -1.0 }, h: 0.5 }).collect();
        let params = BoostParams { max_depth: 2, ..Default::default() };
        let tree = grow_tree(&Presorted::new(&x), &g, &params).unwrap();
        assert!(tree.depth() <= 2);
        assert!(tree.is_finite());
        let e = tree.expected_values();
        let root_mean: f64 = (0..16).map(|i| tree.predict(x.row(i)) * 0.5).sum::<f64>() / 8.0;
        assert!((e[0] - root_mean).abs() < 1e-12);
    }
}
