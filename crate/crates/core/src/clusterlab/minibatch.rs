use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kmeans::{assign, finish, kmeans_plus_plus, nearest, repair_empty, KMeansFit};
use super::{check_data, Algorithm, AlgorithmParams, ClusterError, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MiniBatchOptions {
    pub batch_size: usize,
    pub n_batches: usize,
}

/// Mini-batch k-means with per-centre learning rates `1 / count`.
///
/// Each batch is drawn without replacement (size capped at n). Points in a
/// batch are assigned against the centres as they stood before the batch,
/// then folded in one at a time. Seeding is the same k-means++ draw that
/// [`super::kmeans`] uses for its first restart with the same seed.
pub fn minibatch_kmeans(x: &Matrix, k: usize, seed: u64, opts: &MiniBatchOptions) -> Result<KMeansFit> {
    check_data(x, k)?;
    if opts.batch_size == 0 || opts.n_batches == 0 {
        return Err(ClusterError::InvalidParam("batch_size and n_batches must be positive".into()));
    }
    let n = x.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(x, k, &mut rng);
    let mut counts = vec![0u64; k];
    let batch_size = opts.batch_size.min(n);
    for _ in 0..opts.n_batches {
        let batch = sample(&mut rng, n, batch_size).into_vec();
        let cached: Vec<usize> = batch.iter().map(|&i| nearest(x.row(i), &centroids).0).collect();
        for (&i, &c) in batch.iter().zip(&cached) {
            counts[c] += 1;
            let eta = 1.0 / counts[c] as f64;
            centroids
                .row_mut(c)
                .iter_mut()
                .zip(x.row(i))
                .for_each(|(m, v)| *m = (1.0 - eta) * *m + eta * v);
        }
    }
    let mut labels = vec![0; n];
    assign(x, &centroids, &mut labels);
    let inertia = repair_empty(x, &mut labels, &mut centroids);
    Ok(finish(
        x,
        labels,
        centroids,
        vec![inertia],
        inertia,
        k,
        seed,
        Algorithm::Minibatch,
        AlgorithmParams::Minibatch { batch_size: opts.batch_size, n_batches: opts.n_batches },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clusterlab::{kmeans, KMeansOptions};
    use rand::Rng;

    fn blobs(seed: u64, per: usize, gap: f64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for c in 0..2 {
            for _ in 0..per {
                rows.push(vec![c as f64 * gap + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            }
        }
        Matrix::from_rows(&rows)
    }

    fn sorted_rows(m: &Matrix) -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> = m.iter_rows().map(|r| r.to_vec()).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows
    }

    #[test]
    fn full_batch_single_pass_matches_one_lloyd_step() {
        let x = blobs(3, 20, 6.0);
        for seed in 0..10 {
            let mb = minibatch_kmeans(&x, 3, seed, &MiniBatchOptions { batch_size: x.rows(), n_batches: 1 }).unwrap();
            let km = kmeans(&x, 3, seed, &KMeansOptions { max_iter: 1, tol: 0.0, n_init: 1, refine: false }).unwrap();
            for (a, b) in sorted_rows(&mb.centroids).iter().zip(sorted_rows(&km.centroids).iter()) {
                for (u, v) in a.iter().zip(b) {
                    assert!((u - v).abs() < 1e-9, "seed {seed}: {a:?} vs {b:?}");
                }
            }
        }
    }

    #[test]
    fn one_cluster_labels_all_zero() {
        let x = blobs(1, 10, 3.0);
        let fit = minibatch_kmeans(&x, 1, 5, &MiniBatchOptions { batch_size: 4, n_batches: 50 }).unwrap();
        assert!(fit.assignment.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn agrees_with_kmeans_on_separated_blobs() {
        let x = blobs(9, 50, 20.0);
        let mb = minibatch_kmeans(&x, 2, 4, &MiniBatchOptions { batch_size: 32, n_batches: 200 }).unwrap();
        let km = kmeans(&x, 2, 4, &KMeansOptions::default()).unwrap();
        let agree = mb.assignment.labels.iter().zip(&km.assignment.labels).filter(|(a, b)| a == b).count();
        let agreement = agree.max(x.rows() - agree) as f64 / x.rows() as f64;
        assert!(agreement >= 0.98, "{agreement}");
    }
}
