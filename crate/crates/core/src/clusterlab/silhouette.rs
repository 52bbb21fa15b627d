use super::{ClusterError, Result};
use crate::linalg::{pairwise_distances, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct SilhouetteReport {
    /// Mean distance to the other members of the point's own cluster.
    pub a: Vec<f64>,
    /// Smallest mean distance to the members of another cluster.
    pub b: Vec<f64>,
    pub s: Vec<f64>,
    pub mean_score: f64,
}

/// Silhouette with Euclidean distances.
pub fn silhouette(x: &Matrix, labels: &[usize]) -> Result<SilhouetteReport> {
    if labels.len() != x.rows() {
        return Err(ClusterError::LabelLength { labels: labels.len(), rows: x.rows() });
    }
    silhouette_from_distances(&pairwise_distances(x), labels)
}

/// Silhouette from a precomputed distance matrix.
///
/// Labels must cover `0..k` with every cluster occupied and
/// `2 <= k <= n - 1`. Points in singleton clusters score 0, as do points
/// with `a = b = 0`.
pub fn silhouette_from_distances(d: &Matrix, labels: &[usize]) -> Result<SilhouetteReport> {
    let n = d.rows();
    if labels.len() != n {
        return Err(ClusterError::LabelLength { labels: labels.len(), rows: n });
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    if k < 2 || k + 1 > n {
        return Err(ClusterError::SilhouetteK { k, n });
    }
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(ClusterError::EmptyCluster(empty));
    }

    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|v| *v = 0.0);
        let row = d.row(i);
        for (j, &l) in labels.iter().enumerate() {
            sums[l] += row[j];
        }
        let own = labels[i];
        a[i] = if sizes[own] > 1 { sums[own] / (sizes[own] - 1) as f64 } else { 0.0 };
        b[i] = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a[i].max(b[i]);
        s[i] = if sizes[own] == 1 || denom == 0.0 { 0.0 } else { (b[i] - a[i]) / denom };
    }
    let mean_score = s.iter().sum::<f64>() / n as f64;
    Ok(SilhouetteReport { a, b, s, mean_score })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> Matrix {
        Matrix::from_rows(&points.iter().map(|&p| vec![p]).collect::<Vec<_>>())
    }

    #[test]
    fn two_tight_clusters() {
        let r = silhouette(&line(&[0.0, 0.1, 10.0, 10.1]), &[0, 0, 1, 1]).unwrap();
        // point 0: a = 0.1, b = (10 + 10.1) / 2
        let s0 = (10.05 - 0.1) / 10.05;
        // point 1: a = 0.1, b = (9.9 + 10.0) / 2
        let s1 = (9.95 - 0.1) / 9.95;
        let expected = (2.0 * s0 + 2.0 * s1) / 4.0;
        assert!((r.mean_score - expected).abs() < 1e-9);
        assert!(r.mean_score >= 0.97);
    }

    #[test]
    fn singleton_scores_zero() {
        let r = silhouette(&line(&[0.0, 0.2, 5.0]), &[0, 0, 1]).unwrap();
        assert_eq!(r.s[2], 0.0);
    }

    #[test]
    fn identical_points_score_zero() {
        let r = silhouette(&line(&[1.0, 1.0, 1.0, 1.0]), &[0, 0, 1, 1]).unwrap();
        assert!(r.s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn k_outside_range() {
        let x = line(&[0.0, 1.0, 2.0]);
        assert!(matches!(silhouette(&x, &[0, 0, 0]), Err(ClusterError::SilhouetteK { k: 1, .. })));
        assert!(matches!(silhouette(&x, &[0, 1, 2]), Err(ClusterError::SilhouetteK { k: 3, .. })));
        assert!(matches!(silhouette(&line(&[0.0, 1.0, 2.0, 3.0]), &[0, 2, 2, 0]), Err(ClusterError::EmptyCluster(1))));
    }
}
