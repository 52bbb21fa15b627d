//! Analysis toolkit for model-validation findings.
//!
//! The crate covers the whole path from raw finding records to reports:
//!
//! * [`corpus`]: finding records, JSONL/CSV ingestion, a synthetic corpus
//!   generator and stratified splitting.
//! * [`textprep`]: tokenization, stopword removal, rule-based lemmatization
//!   and bag-of-token vectors.
//! * [`embedspace`]: EMB1 embedding files, a feature-hashing fallback
//!   embedder and fused feature vectors.
//! * [`clusterlab`]: k-means, mini-batch k-means, Ward agglomerative, BIRCH
//!   and spectral clustering, silhouette scores and the k sweep.
//! * [`dimassign`]: turning clusters into label predictions (majority and
//!   share methods) and scoring them.
//! * [`boostlab`]: second-order gradient-boosted trees and a logistic
//!   regression benchmark.
//! * [`metricsuite`]: confusion matrices and precision/recall/F1 reports.
//! * [`attriblab`]: token rankings and additive per-instance attributions.
//! * [`pipeline`]: stage orchestration, artifacts and run manifests.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attriblab;
pub mod boostlab;
pub mod clusterlab;
pub mod corpus;
pub mod dimassign;
pub mod embedspace;
pub mod linalg;
pub mod metricsuite;
pub mod pipeline;
pub mod textprep;
pub mod util;
