use std::ops::RangeInclusive;

use rayon::prelude::*;

use super::birch::BirchTree;
use super::kmeans::kmeans;
use super::minibatch::{minibatch_kmeans, MiniBatchOptions};
use super::silhouette::silhouette_from_distances;
use super::spectral::SpectralEmbedding;
use super::ward::WardTree;
use super::{check_data, Algorithm, AlgorithmParams, ClusterAssignment, ClusterConfig, ClusterError, Result};
use crate::linalg::{pairwise_distances, Matrix};
use crate::util::stable_hash;

/// Seed for one `(algorithm, k)` cell, independent of execution order.
pub fn cell_seed(seed: u64, algorithm: Algorithm, k: usize) -> u64 {
    stable_hash(seed, [algorithm.as_str().as_bytes(), &(k as u64).to_le_bytes()])
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub algorithm: Algorithm,
    pub k: usize,
    pub outcome: std::result::Result<ClusterAssignment, String>,
    pub silhouette: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub algorithms: Vec<Algorithm>,
    pub ks: Vec<usize>,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, algorithm: Algorithm, k: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.algorithm == algorithm && c.k == k)
    }

    /// Silhouette grid as CSV: one row per k, one column per algorithm.
    pub fn silhouette_csv(&self) -> String {
        let mut out = String::from("k");
        for a in &self.algorithms {
            out.push(',');
            out.push_str(a.as_str());
        }
        out.push('\n');
        for &k in &self.ks {
            out.push_str(&k.to_string());
            for &a in &self.algorithms {
                out.push(',');
                if let Some(s) = self.cell(a, k).and_then(|c| c.silhouette) {
                    out.push_str(&crate::util::fmt_f64(s));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Shared, k-independent work for a sweep.
struct Prepared<'a> {
    x: &'a Matrix,
    distances: Matrix,
    ward: Option<std::result::Result<WardTree, ClusterError>>,
    birch: Option<std::result::Result<BirchTree, ClusterError>>,
    spectral: Option<std::result::Result<SpectralEmbedding, ClusterError>>,
}

fn run_cell(p: &Prepared<'_>, algorithm: Algorithm, k: usize, seed: u64, cfg: &ClusterConfig) -> Result<ClusterAssignment> {
    match algorithm {
        Algorithm::Kmeans => Ok(kmeans(p.x, k, seed, &cfg.kmeans_options())?.assignment),
        Algorithm::Minibatch => Ok(minibatch_kmeans(
            p.x,
            k,
            seed,
            &MiniBatchOptions { batch_size: cfg.batch_size, n_batches: cfg.batches_per_k * k },
        )?
        .assignment),
        Algorithm::AgglomerativeWard => {
            let tree = p.ward.as_ref().expect("prepared").as_ref().map_err(Clone::clone)?;
            Ok(ClusterAssignment {
                labels: tree.cut(k)?,
                k,
                algorithm,
                params: AlgorithmParams::AgglomerativeWard,
                seed,
                inertia: None,
            })
        }
        Algorithm::Birch => {
            let tree = p.birch.as_ref().expect("prepared").as_ref().map_err(Clone::clone)?;
            let mut a = tree.cut(k)?;
            a.seed = seed;
            Ok(a)
        }
        Algorithm::Spectral => {
            let emb = p.spectral.as_ref().expect("prepared").as_ref().map_err(Clone::clone)?;
            emb.cluster(k, seed, &cfg.kmeans_options())
        }
    }
}

/// Runs every `(algorithm, k)` cell. Cells run in parallel; each draws its
/// seed from [`cell_seed`], so results do not depend on scheduling. A
/// failing cell records its error and the sweep carries on.
pub fn sweep(
    x: &Matrix,
    algorithms: &[Algorithm],
    k_range: RangeInclusive<usize>,
    seed: u64,
    cfg: &ClusterConfig,
) -> Result<SweepResult> {
    cfg.validate()?;
    let ks: Vec<usize> = k_range.collect();
    let k_max = *ks.iter().max().ok_or_else(|| ClusterError::InvalidParam("empty k range".into()))?;
    if algorithms.is_empty() {
        return Err(ClusterError::InvalidParam("no algorithms selected".into()));
    }
    check_data(x, k_max.max(1))?;
    if ks.contains(&0) {
        return Err(ClusterError::InvalidK { k: 0, n: x.rows() });
    }

    let wants = |a: Algorithm| algorithms.contains(&a);
    let distances = pairwise_distances(x);
    let (ward, (birch, spectral)) = rayon::join(
        || wants(Algorithm::AgglomerativeWard).then(|| WardTree::build(x)),
        || {
            rayon::join(
                || wants(Algorithm::Birch).then(|| BirchTree::build(x, cfg.birch_threshold, cfg.birch_branching)),
                || wants(Algorithm::Spectral).then(|| SpectralEmbedding::from_distances(&distances)),
            )
        },
    );
    let prepared = Prepared { x, distances, ward, birch, spectral };

    let jobs: Vec<(Algorithm, usize)> =
        algorithms.iter().flat_map(|&a| ks.iter().map(move |&k| (a, k))).collect();
    let cells = jobs
        .par_iter()
        .map(|&(algorithm, k)| {
            let outcome = run_cell(&prepared, algorithm, k, cell_seed(seed, algorithm, k), cfg);
            let silhouette = outcome
                .as_ref()
                .ok()
                .and_then(|a| silhouette_from_distances(&prepared.distances, &a.labels).ok())
                .map(|r| r.mean_score);
            SweepCell { algorithm, k, outcome: outcome.map_err(|e| e.to_string()), silhouette }
        })
        .collect();
    Ok(SweepResult { algorithms: algorithms.to_vec(), ks, cells })
}

/// Runs a single algorithm at one k with the configured defaults.
pub fn run_algorithm(x: &Matrix, algorithm: Algorithm, k: usize, seed: u64, cfg: &ClusterConfig) -> Result<ClusterAssignment> {
    cfg.validate()?;
    check_data(x, k)?;
    match algorithm {
        Algorithm::Kmeans => Ok(kmeans(x, k, seed, &cfg.kmeans_options())?.assignment),
        Algorithm::Minibatch => Ok(minibatch_kmeans(
            x,
            k,
            seed,
            &MiniBatchOptions { batch_size: cfg.batch_size, n_batches: cfg.batches_per_k * k },
        )?
        .assignment),
        Algorithm::AgglomerativeWard => super::agglomerative_ward(x, k),
        Algorithm::Birch => super::birch(x, k, cfg.birch_threshold, cfg.birch_branching),
        Algorithm::Spectral => {
            if k < 2 {
                return Err(ClusterError::InvalidK { k, n: x.rows() });
            }
            SpectralEmbedding::from_data(x)?.cluster(k, seed, &cfg.kmeans_options())
        }
    }
}

/// `id,cluster` CSV for one assignment.
pub fn write_assignments_csv(ids: &[String], assignment: &ClusterAssignment) -> String {
    let mut out = String::from("id,cluster\n");
    for (id, l) in ids.iter().zip(&assignment.labels) {
        out.push_str(id);
        out.push(',');
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}
