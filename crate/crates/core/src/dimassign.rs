//! Turning clusterings into label predictions.
//!
//! Two rules are provided. The majority rule predicts each cluster's modal
//! label for every member. The share rule predicts a member's label by a
//! draw from its cluster's empirical label distribution; its accuracy is
//! reported as the exact expectation, with a seeded sampler alongside.
//!
//! Labels are plain indices into a name list, so the same code serves
//! dimensions and severities.

use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clusterlab::Algorithm;
use crate::util::{fmt_f64, stable_hash};

#[derive(Debug, Error, PartialEq)]
pub enum AssignError {
    #[error("{clusters} cluster labels for {targets} targets")]
    LengthMismatch { clusters: usize, targets: usize },
    #[error("cluster label {label} is out of range for k = {k}")]
    ClusterOutOfRange { label: usize, k: usize },
    #[error("target label {label} is out of range for {labels} labels")]
    TargetOutOfRange { label: usize, labels: usize },
    #[error("assignment map covers {got} clusters, expected {expected}")]
    MapSize { got: usize, expected: usize },
}

pub type Result<T> = std::result::Result<T, AssignError>;

/// Label counts per cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterLabelProfile {
    label_names: Vec<String>,
    /// `counts[c][d]`.
    counts: Vec<Vec<usize>>,
    /// Cluster of each point, in input order.
    point_clusters: Vec<usize>,
}

impl ClusterLabelProfile {
    /// Builds the profile from per-point cluster and target labels.
    pub fn from_points(clusters: &[usize], k: usize, targets: &[usize], label_names: Vec<String>) -> Result<Self> {
        if clusters.len() != targets.len() {
            return Err(AssignError::LengthMismatch { clusters: clusters.len(), targets: targets.len() });
        }
        let mut counts = vec![vec![0; label_names.len()]; k];
        for (&c, &d) in clusters.iter().zip(targets) {
            if c >= k {
                return Err(AssignError::ClusterOutOfRange { label: c, k });
            }
            if d >= label_names.len() {
                return Err(AssignError::TargetOutOfRange { label: d, labels: label_names.len() });
            }
            counts[c][d] += 1;
        }
        Ok(Self { label_names, counts, point_clusters: clusters.to_vec() })
    }

    /// Builds the profile from a count table; points are laid out cluster by
    /// cluster.
    pub fn from_counts(counts: Vec<Vec<usize>>, label_names: Vec<String>) -> Result<Self> {
        for row in &counts {
            if row.len() != label_names.len() {
                return Err(AssignError::TargetOutOfRange { label: row.len(), labels: label_names.len() });
            }
        }
        let point_clusters =
            counts.iter().enumerate().flat_map(|(c, row)| std::iter::repeat_n(c, row.iter().sum())).collect();
        Ok(Self { label_names, counts, point_clusters })
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self) -> usize {
        self.point_clusters.len()
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn point_clusters(&self) -> &[usize] {
        &self.point_clusters
    }

    pub fn cluster_size(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    /// Corpus-wide count of each label.
    pub fn label_totals(&self) -> Vec<usize> {
        let mut totals = vec![0; self.label_names.len()];
        for row in &self.counts {
            totals.iter_mut().zip(row).for_each(|(t, v)| *t += v);
        }
        totals
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Majority,
    Share,
    Sampled,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Majority => "majority",
            Method::Share => "share",
            Method::Sampled => "sampled",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "majority" => Ok(Method::Majority),
            "share" => Ok(Method::Share),
            "sampled" => Ok(Method::Sampled),
            other => Err(format!("unknown assignment method {other:?}")),
        }
    }
}

/// Per-label and total accuracy of one assignment rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub label_names: Vec<String>,
    /// `None` for labels absent from the corpus.
    pub per_label: Vec<Option<f64>>,
    pub total: f64,
    pub method: Method,
    pub k: usize,
    pub algorithm: Option<Algorithm>,
}

impl AccuracyTable {
    pub fn get(&self, label: &str) -> Option<f64> {
        self.label_names.iter().position(|l| l == label).and_then(|i| self.per_label[i])
    }

    fn tag(mut self, algorithm: Option<Algorithm>) -> Self {
        self.algorithm = algorithm;
        self
    }
}

fn table(profile: &ClusterLabelProfile, hits: Vec<f64>, method: Method) -> AccuracyTable {
    let totals = profile.label_totals();
    let n: usize = totals.iter().sum();
    let per_label = hits.iter().zip(&totals).map(|(&h, &t)| (t > 0).then(|| h / t as f64)).collect();
    let total = if n > 0 { hits.iter().sum::<f64>() / n as f64 } else { 0.0 };
    AccuracyTable { label_names: profile.label_names.clone(), per_label, total, method, k: profile.k(), algorithm: None }
}

/// Modal label of every cluster. Ties go to the label with the larger
/// corpus-wide count, then to the lexicographically smaller name.
pub fn majority_assign(profile: &ClusterLabelProfile) -> Vec<usize> {
    let totals = profile.label_totals();
    let names = &profile.label_names;
    profile
        .counts
        .iter()
        .map(|row| {
            (0..names.len())
                .min_by(|&a, &b| {
                    row[b].cmp(&row[a]).then(totals[b].cmp(&totals[a])).then_with(|| names[a].cmp(&names[b]))
                })
                .unwrap_or(0)
        })
        .collect()
}

/// Accuracy of predicting `map[c]` for every member of cluster `c`.
pub fn majority_accuracy(profile: &ClusterLabelProfile, map: &[usize]) -> Result<AccuracyTable> {
    if map.len() != profile.k() {
        return Err(AssignError::MapSize { got: map.len(), expected: profile.k() });
    }
    let mut hits = vec![0.0; profile.label_names.len()];
    for (row, &d) in profile.counts.iter().zip(map) {
        if d >= hits.len() {
            return Err(AssignError::TargetOutOfRange { label: d, labels: hits.len() });
        }
        hits[d] += row[d] as f64;
    }
    Ok(table(profile, hits, Method::Majority))
}

/// Expected accuracy of the share rule: a member of cluster `c` is predicted
/// `d` with probability `count[c][d] / |c|`, so label `d` scores
/// `sum_c count[c][d]^2 / |c|` hits.
pub fn share_accuracy(profile: &ClusterLabelProfile) -> AccuracyTable {
    let mut hits = vec![0.0; profile.label_names.len()];
    for row in &profile.counts {
        let size: usize = row.iter().sum();
        if size == 0 {
            continue;
        }
        for (h, &v) in hits.iter_mut().zip(row) {
            *h += (v * v) as f64 / size as f64;
        }
    }
    table(profile, hits, Method::Share)
}

/// One categorical draw per point from its cluster's label distribution.
pub fn sampled_share_assign(profile: &ClusterLabelProfile, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(seed, [b"sampled_share".as_slice()]));
    profile
        .point_clusters
        .iter()
        .map(|&c| {
            let row = &profile.counts[c];
            let size: usize = row.iter().sum();
            let mut target = rng.gen_range(0..size);
            row.iter()
                .position(|&v| {
                    if target < v {
                        true
                    } else {
                        target -= v;
                        false
                    }
                })
                .expect("draw below cluster size")
        })
        .collect()
}

/// Accuracy of explicit per-point predictions against the true targets.
pub fn prediction_accuracy(profile: &ClusterLabelProfile, targets: &[usize], predictions: &[usize], method: Method) -> Result<AccuracyTable> {
    if targets.len() != predictions.len() {
        return Err(AssignError::LengthMismatch { clusters: predictions.len(), targets: targets.len() });
    }
    let mut hits = vec![0.0; profile.label_names.len()];
    for (&t, &p) in targets.iter().zip(predictions) {
        if t >= hits.len() {
            return Err(AssignError::TargetOutOfRange { label: t, labels: hits.len() });
        }
        if t == p {
            hits[t] += 1.0;
        }
    }
    Ok(table(profile, hits, method))
}

/// Accuracy table of the given method for one clustering.
pub fn evaluate(
    profile: &ClusterLabelProfile,
    targets: &[usize],
    method: Method,
    seed: u64,
    algorithm: Option<Algorithm>,
) -> Result<AccuracyTable> {
    let t = match method {
        Method::Majority => majority_accuracy(profile, &majority_assign(profile))?,
        Method::Share => share_accuracy(profile),
        Method::Sampled => prediction_accuracy(profile, targets, &sampled_share_assign(profile, seed), Method::Sampled)?,
    };
    Ok(t.tag(algorithm))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_f64)
}

/// Total accuracy grid: one row per k, one column per algorithm.
pub fn total_accuracy_csv(tables: &[AccuracyTable], algorithms: &[Algorithm], ks: &[usize]) -> String {
    let mut out = String::from("k");
    for a in algorithms {
        out.push(',');
        out.push_str(a.as_str());
    }
    out.push('\n');
    for &k in ks {
        out.push_str(&k.to_string());
        for &a in algorithms {
            out.push(',');
            let found = tables.iter().find(|t| t.k == k && t.algorithm == Some(a)).map(|t| t.total);
            out.push_str(&found.map_or_else(String::new, fmt_f64));
        }
        out.push('\n');
    }
    out
}

/// Per-label grid for one algorithm: one row per k, one column per label,
/// then the total.
pub fn per_label_csv(tables: &[AccuracyTable]) -> String {
    let Some(first) = tables.first() else {
        return String::new();
    };
    let mut out = String::from("k");
    for name in &first.label_names {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",total\n");
    for t in tables {
        out.push_str(&t.k.to_string());
        for &v in &t.per_label {
            out.push(',');
            out.push_str(&cell(v));
        }
        out.push(',');
        out.push_str(&fmt_f64(t.total));
        out.push('\n');
    }
    out
}
