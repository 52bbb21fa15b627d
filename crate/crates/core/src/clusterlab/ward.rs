use super::{check_data, Algorithm, AlgorithmParams, ClusterAssignment, ClusterError, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::util::relabel_by_first_appearance;

/// One agglomeration step. Clusters are named by their smallest member
/// index; the merged cluster keeps the name `a` (`a < b`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    /// Ward increase `|A||B|/(|A|+|B|) * ||mu_A - mu_B||^2`.
    pub delta: f64,
    pub size: f64,
}

/// Full Ward merge path down to a single cluster. Cutting it at any `k`
/// gives the same partition as running the agglomeration to `k` directly.
#[derive(Clone, Debug, PartialEq)]
pub struct WardTree {
    n: usize,
    merges: Vec<Merge>,
}

fn ward_delta(wa: f64, wb: f64, ma: &[f64], mb: &[f64]) -> f64 {
    wa * wb / (wa + wb) * sq_dist(ma, mb)
}

impl WardTree {
    /// Ward agglomeration of unit-weight points.
    pub fn build(x: &Matrix) -> Result<Self> {
        Self::build_weighted(x, &vec![1.0; x.rows()])
    }

    /// Ward agglomeration where row `i` stands for `weights[i]` coincident
    /// points (used to cluster BIRCH subcluster centroids).
    ///
    /// Each step merges the pair with the smallest increase; exact ties go
    /// to the lexicographically smallest `(a, b)` pair of cluster names.
    pub fn build_weighted(x: &Matrix, weights: &[f64]) -> Result<Self> {
        check_data(x, 1)?;
        let n = x.rows();
        if weights.len() != n || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(ClusterError::InvalidParam("weights must be positive, one per row".into()));
        }
        let mut centroid: Vec<Vec<f64>> = x.iter_rows().map(|r| r.to_vec()).collect();
        let mut weight = weights.to_vec();
        let mut active = vec![true; n];
        let mut delta = vec![f64::INFINITY; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                delta[i * n + j] = ward_delta(weight[i], weight[j], &centroid[i], &centroid[j]);
            }
        }
        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        for _ in 1..n {
            let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
            for i in (0..n).filter(|&i| active[i]) {
                let row = &delta[i * n..(i + 1) * n];
                for j in ((i + 1)..n).filter(|&j| active[j]) {
                    if row[j] < best.0 {
                        best = (row[j], i, j);
                    }
                }
            }
            let (d, a, b) = best;
            let (wa, wb) = (weight[a], weight[b]);
            let merged: Vec<f64> =
                centroid[a].iter().zip(&centroid[b]).map(|(p, q)| (wa * p + wb * q) / (wa + wb)).collect();
            centroid[a] = merged;
            weight[a] = wa + wb;
            active[b] = false;
            merges.push(Merge { a, b, delta: d, size: wa + wb });
            for c in (0..n).filter(|&c| active[c] && c != a) {
                let v = ward_delta(weight[a], weight[c], &centroid[a], &centroid[c]);
                let (lo, hi) = if c < a { (c, a) } else { (a, c) };
                delta[lo * n + hi] = v;
            }
        }
        Ok(Self { n, merges })
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Labels after `n - k` merges, renumbered by first appearance.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.n {
            return Err(ClusterError::InvalidK { k, n: self.n });
        }
        let mut owner: Vec<usize> = (0..self.n).collect();
        for m in &self.merges[..self.n - k] {
            owner[m.b] = m.a;
        }
        let mut labels = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let mut r = i;
            while owner[r] != r {
                r = owner[r];
            }
            labels.push(r);
        }
        Ok(relabel_by_first_appearance(&labels, self.n).0)
    }
}

pub fn agglomerative_ward(x: &Matrix, k: usize) -> Result<ClusterAssignment> {
    check_data(x, k)?;
    let labels = WardTree::build(x)?.cut(k)?;
    Ok(ClusterAssignment {
        labels,
        k,
        algorithm: Algorithm::AgglomerativeWard,
        params: AlgorithmParams::AgglomerativeWard,
        seed: 0,
        inertia: None,
    })
}
