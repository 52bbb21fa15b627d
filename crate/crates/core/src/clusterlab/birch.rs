use super::ward::WardTree;
use super::{check_data, Algorithm, AlgorithmParams, ClusterAssignment, ClusterError, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::util::relabel_by_first_appearance;

/// Clustering feature `(N, LS, SS)`: count, linear sum and sum of squared
/// norms of a set of points.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusteringFeature {
    pub n: f64,
    pub ls: Vec<f64>,
    pub ss: f64,
}

impl ClusteringFeature {
    pub fn from_point(p: &[f64]) -> Self {
        Self { n: 1.0, ls: p.to_vec(), ss: p.iter().map(|v| v * v).sum() }
    }

    pub fn empty(dim: usize) -> Self {
        Self { n: 0.0, ls: vec![0.0; dim], ss: 0.0 }
    }

    pub fn add(&mut self, other: &ClusteringFeature) {
        self.n += other.n;
        self.ss += other.ss;
        self.ls.iter_mut().zip(&other.ls).for_each(|(a, b)| *a += b);
    }

    pub fn merged(&self, other: &ClusteringFeature) -> Self {
        let mut m = self.clone();
        m.add(other);
        m
    }

    pub fn centroid(&self) -> Vec<f64> {
        self.ls.iter().map(|v| v / self.n).collect()
    }

    /// Root-mean-square distance of the members to their centroid.
    pub fn radius(&self) -> f64 {
        let c2: f64 = self.ls.iter().map(|v| (v / self.n) * (v / self.n)).sum();
        (self.ss / self.n - c2).max(0.0).sqrt()
    }
}

#[derive(Debug)]
struct Entry {
    cf: ClusteringFeature,
    members: Vec<usize>,
}

#[derive(Debug)]
struct Child {
    cf: ClusteringFeature,
    node: Box<Node>,
}

#[derive(Debug)]
enum Node {
    Leaf(Vec<Entry>),
    Internal(Vec<Child>),
}

fn nearest_centroid<'a, I: Iterator<Item = &'a ClusteringFeature>>(cfs: I, p: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, cf) in cfs.enumerate() {
        let d = sq_dist(&cf.centroid(), p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Splits `items` around the farthest pair of centroids; every other item
/// goes to the nearer seed (the first seed on ties).
fn split_by_farthest_pair<T>(items: Vec<T>, cf: impl Fn(&T) -> &ClusteringFeature) -> (Vec<T>, Vec<T>) {
    let centroids: Vec<Vec<f64>> = items.iter().map(|t| cf(t).centroid()).collect();
    let mut seeds = (0, 1, -1.0);
    for i in 0..centroids.len() {
        for j in (i + 1)..centroids.len() {
            let d = sq_dist(&centroids[i], &centroids[j]);
            if d > seeds.2 {
                seeds = (i, j, d);
            }
        }
    }
    let (s1, s2, _) = seeds;
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (i, item) in items.into_iter().enumerate() {
        let to_left = if i == s1 {
            true
        } else if i == s2 {
            false
        } else {
            sq_dist(&centroids[i], &centroids[s1]) <= sq_dist(&centroids[i], &centroids[s2])
        };
        if to_left {
            left.push(item);
        } else {
            right.push(item);
        }
    }
    (left, right)
}

fn sum_cf<'a>(dim: usize, cfs: impl Iterator<Item = &'a ClusteringFeature>) -> ClusteringFeature {
    let mut total = ClusteringFeature::empty(dim);
    for cf in cfs {
        total.add(cf);
    }
    total
}

impl Node {
    fn cf(&self, dim: usize) -> ClusteringFeature {
        match self {
            Node::Leaf(entries) => sum_cf(dim, entries.iter().map(|e| &e.cf)),
            Node::Internal(children) => sum_cf(dim, children.iter().map(|c| &c.cf)),
        }
    }

    /// Inserts a point; returns the two halves if this node overflowed.
    fn insert(&mut self, index: usize, p: &[f64], threshold: f64, branching: usize) -> Option<(Node, Node)> {
        match self {
            Node::Leaf(entries) => {
                let point = ClusteringFeature::from_point(p);
                if !entries.is_empty() {
                    let best = nearest_centroid(entries.iter().map(|e| &e.cf), p);
                    let merged = entries[best].cf.merged(&point);
                    if merged.radius() <= threshold {
                        entries[best].cf = merged;
                        entries[best].members.push(index);
                        return None;
                    }
                }
                entries.push(Entry { cf: point, members: vec![index] });
                if entries.len() > branching {
                    let (a, b) = split_by_farthest_pair(std::mem::take(entries), |e| &e.cf);
                    return Some((Node::Leaf(a), Node::Leaf(b)));
                }
                None
            }
            Node::Internal(children) => {
                let best = nearest_centroid(children.iter().map(|c| &c.cf), p);
                let dim = p.len();
                let split = children[best].node.insert(index, p, threshold, branching);
                match split {
                    None => children[best].cf.add(&ClusteringFeature::from_point(p)),
                    Some((a, b)) => {
                        children.remove(best);
                        children.insert(best, Child { cf: b.cf(dim), node: Box::new(b) });
                        children.insert(best, Child { cf: a.cf(dim), node: Box::new(a) });
                    }
                }
                if children.len() > branching {
                    let (a, b) = split_by_farthest_pair(std::mem::take(children), |c| &c.cf);
                    return Some((Node::Internal(a), Node::Internal(b)));
                }
                None
            }
        }
    }

    fn collect_entries<'a>(&'a self, out: &mut Vec<&'a Entry>) {
        match self {
            Node::Leaf(entries) => out.extend(entries.iter()),
            Node::Internal(children) => children.iter().for_each(|c| c.node.collect_entries(out)),
        }
    }
}

/// A built CF tree together with the Ward merge path over its leaf
/// entries, so it can be cut at any k.
#[derive(Debug)]
pub struct BirchTree {
    n: usize,
    threshold: f64,
    branching: usize,
    entry_cfs: Vec<ClusteringFeature>,
    entry_members: Vec<Vec<usize>>,
    ward: WardTree,
}

impl BirchTree {
    pub fn build(x: &Matrix, threshold: f64, branching: usize) -> Result<Self> {
        check_data(x, 1)?;
        if !(threshold > 0.0) || branching < 2 {
            return Err(ClusterError::InvalidParam("birch needs threshold > 0 and branching >= 2".into()));
        }
        let dim = x.cols();
        let mut root = Node::Leaf(Vec::new());
        for (i, p) in x.iter_rows().enumerate() {
            if let Some((a, b)) = root.insert(i, p, threshold, branching) {
                root = Node::Internal(vec![
                    Child { cf: a.cf(dim), node: Box::new(a) },
                    Child { cf: b.cf(dim), node: Box::new(b) },
                ]);
            }
        }
        let mut entries = Vec::new();
        root.collect_entries(&mut entries);
        let centroids: Vec<Vec<f64>> = entries.iter().map(|e| e.cf.centroid()).collect();
        let weights: Vec<f64> = entries.iter().map(|e| e.cf.n).collect();
        let ward = WardTree::build_weighted(&Matrix::from_rows(&centroids), &weights)?;
        Ok(Self {
            n: x.rows(),
            threshold,
            branching,
            entry_cfs: entries.iter().map(|e| e.cf.clone()).collect(),
            entry_members: entries.iter().map(|e| e.members.clone()).collect(),
            ward,
        })
    }

    pub fn leaf_entries(&self) -> &[ClusteringFeature] {
        &self.entry_cfs
    }

    pub fn entry_members(&self) -> &[Vec<usize>] {
        &self.entry_members
    }

    pub fn cut(&self, k: usize) -> Result<ClusterAssignment> {
        if k == 0 || k > self.n {
            return Err(ClusterError::InvalidK { k, n: self.n });
        }
        if k > self.entry_cfs.len() {
            return Err(ClusterError::TooFewLeafEntries { k, entries: self.entry_cfs.len() });
        }
        let entry_labels = self.ward.cut(k)?;
        let mut labels = vec![0; self.n];
        for (members, &label) in self.entry_members.iter().zip(&entry_labels) {
            for &i in members {
                labels[i] = label;
            }
        }
        Ok(ClusterAssignment {
            labels: relabel_by_first_appearance(&labels, k).0,
            k,
            algorithm: Algorithm::Birch,
            params: AlgorithmParams::Birch {
                threshold: self.threshold,
                branching_factor: self.branching,
                leaf_entries: self.entry_cfs.len(),
            },
            seed: 0,
            inertia: None,
        })
    }
}

/// BIRCH: CF-tree summarisation followed by Ward clustering of the leaf
/// entries (weighted by their point counts).
pub fn birch(x: &Matrix, k: usize, threshold: f64, branching_factor: usize) -> Result<ClusterAssignment> {
    check_data(x, k)?;
    BirchTree::build(x, threshold, branching_factor)?.cut(k)
}
