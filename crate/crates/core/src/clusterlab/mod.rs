//! The five clustering algorithms, silhouette scoring and the k sweep.
//!
//! All algorithms use the Euclidean metric and are deterministic for a
//! given seed. Returned labels are renumbered by first appearance, so two
//! runs that find the same partition also produce the same label vector.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

mod birch;
mod eigen;
mod kmeans;
mod minibatch;
mod silhouette;
mod spectral;
mod sweep;
mod ward;

pub use birch::{birch, BirchTree, ClusteringFeature};
pub use eigen::{jacobi_eigen, SymmetricEigen};
pub use kmeans::{kmeans, KMeansFit, KMeansOptions};
pub use minibatch::{minibatch_kmeans, MiniBatchOptions};
pub use silhouette::{silhouette, silhouette_from_distances, SilhouetteReport};
pub use spectral::{spectral, SpectralEmbedding};
pub use sweep::{run_algorithm, sweep, write_assignments_csv, SweepCell, SweepResult};
pub use ward::{agglomerative_ward, Merge, WardTree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("need 1 <= k <= n (k = {k}, n = {n})")]
    InvalidK { k: usize, n: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("dataset contains non-finite values")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("k = {k} exceeds the {entries} BIRCH leaf entries; lower the threshold")]
    TooFewLeafEntries { k: usize, entries: usize },
    #[error("point {0} has zero affinity to every other point")]
    ZeroDegree(usize),
    #[error("Jacobi eigensolver did not converge in {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix is not square and symmetric")]
    NotSymmetric,
    #[error("silhouette needs 2 <= k <= n - 1 (k = {k}, n = {n})")]
    SilhouetteK { k: usize, n: usize },
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("{labels} labels for {rows} rows")]
    LabelLength { labels: usize, rows: usize },
}

pub type Result<T> = std::result::Result<T, ClusterError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Kmeans,
    Minibatch,
    AgglomerativeWard,
    Birch,
    Spectral,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::AgglomerativeWard, Algorithm::Birch, Algorithm::Kmeans, Algorithm::Minibatch, Algorithm::Spectral];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Kmeans => "kmeans",
            Algorithm::Minibatch => "minibatch",
            Algorithm::AgglomerativeWard => "agglomerative_ward",
            Algorithm::Birch => "birch",
            Algorithm::Spectral => "spectral",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = ClusterError;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| ClusterError::InvalidParam(format!("unknown algorithm {s:?}")))
    }
}

/// Parameters recorded alongside an assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmParams {
    Kmeans { max_iter: usize, tol: f64, n_init: usize, refine: bool },
    Minibatch { batch_size: usize, n_batches: usize },
    AgglomerativeWard,
    Birch { threshold: f64, branching_factor: usize, leaf_entries: usize },
    Spectral { sigma: f64, n_init: usize },
}

/// A partition of the dataset rows into `k` clusters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    pub algorithm: Algorithm,
    pub params: AlgorithmParams,
    pub seed: u64,
    pub inertia: Option<f64>,
}

impl ClusterAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Default settings for every algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub n_init: usize,
    pub batch_size: usize,
    /// Mini-batch iterations per cluster; the run uses `k * batches_per_k`.
    pub batches_per_k: usize,
    pub birch_threshold: f64,
    pub birch_branching: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-6,
            n_init: 10,
            batch_size: 32,
            batches_per_k: 100,
            birch_threshold: 0.5,
            birch_branching: 50,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ClusterError::InvalidParam(m.to_string()));
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be non-negative");
        }
        if self.n_init == 0 {
            return bad("n_init must be positive");
        }
        if self.batch_size == 0 || self.batches_per_k == 0 {
            return bad("batch_size and batches_per_k must be positive");
        }
        if !(self.birch_threshold > 0.0) {
            return bad("birch threshold must be positive");
        }
        if self.birch_branching < 2 {
            return bad("birch branching factor must be at least 2");
        }
        Ok(())
    }

    pub fn kmeans_options(&self) -> KMeansOptions {
        KMeansOptions { max_iter: self.max_iter, tol: self.tol, n_init: self.n_init, refine: true }
    }
}

pub(crate) fn check_data(x: &Matrix, k: usize) -> Result<()> {
    if x.rows() == 0 {
        return Err(ClusterError::Empty);
    }
    if k == 0 || k > x.rows() {
        return Err(ClusterError::InvalidK { k, n: x.rows() });
    }
    if !x.is_finite() {
        return Err(ClusterError::NonFinite);
    }
    Ok(())
}

/// Total within-cluster sum of squared distances to the cluster means.
pub fn within_sse(x: &Matrix, labels: &[usize], k: usize) -> f64 {
    let d = x.cols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in x.iter_rows().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(row).for_each(|(s, v)| *s += v);
    }
    let means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| if c > 0 { v / c as f64 } else { 0.0 }).collect())
        .collect();
    x.iter_rows().zip(labels).map(|(row, &l)| crate::linalg::sq_dist(row, &means[l])).sum()
}
