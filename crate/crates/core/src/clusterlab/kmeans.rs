use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_data, Algorithm, AlgorithmParams, ClusterAssignment, ClusterError, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::util::relabel_by_first_appearance;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Stop once the relative inertia improvement falls below this.
    pub tol: f64,
    pub n_init: usize,
    /// Follow Lloyd with single-point moves that lower the SSE.
    pub refine: bool,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { max_iter: 300, tol: 1e-6, n_init: 10, refine: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub assignment: ClusterAssignment,
    /// Row `c` is the centroid of cluster `c`.
    pub centroids: Matrix,
    /// Inertia after the seeding assignment, after every Lloyd step and
    /// after refinement (when it changed anything) of the winning restart.
    pub inertia_history: Vec<f64>,
}

/// Nearest centroid and its squared distance; ties go to the lower index.
pub(crate) fn nearest(row: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter_rows().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Greedy k-means++ seeding: the first centre uniformly, then for each
/// further centre `2 + ln k` candidates drawn with probability proportional
/// to the squared distance to the nearest centre, keeping the candidate
/// that leaves the smallest total squared distance (earliest on ties).
pub(crate) fn kmeans_plus_plus(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = x.rows();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = Matrix::zeros(k, x.cols());
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = x.iter_rows().map(|r| sq_dist(r, x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            let pick = rng.gen_range(0..n);
            centroids.row_mut(c).copy_from_slice(x.row(pick));
            continue;
        }
        let mut best: Option<(f64, Vec<f64>, usize)> = None;
        for _ in 0..trials {
            let pick = draw_weighted(&d2, total, rng);
            let next: Vec<f64> = x.iter_rows().zip(&d2).map(|(row, &d)| d.min(sq_dist(row, x.row(pick)))).collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|(p, _, _)| potential < *p) {
                best = Some((potential, next, pick));
            }
        }
        let (_, next, pick) = best.expect("at least one trial");
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        d2 = next;
    }
    centroids
}

fn draw_weighted(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if w > 0.0 && acc > target {
            return i;
        }
    }
    // rounding can leave target just above the final sum
    weights.iter().rposition(|&w| w > 0.0).expect("positive mass")
}

pub(crate) fn assign(x: &Matrix, centroids: &Matrix, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, row) in x.iter_rows().enumerate() {
        let (c, d) = nearest(row, centroids);
        labels[i] = c;
        inertia += d;
    }
    inertia
}

fn update_means(x: &Matrix, labels: &[usize], centroids: &mut Matrix) {
    let k = centroids.rows();
    let d = x.cols();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (row, &l) in x.iter_rows().zip(labels.iter()) {
        counts[l] += 1;
        sums.row_mut(l).iter_mut().zip(row).for_each(|(s, v)| *s += v);
    }
    for c in 0..k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            centroids.row_mut(c).iter_mut().zip(sums.row(c)).for_each(|(m, s)| *m = s / n);
        }
    }
}

/// Gives every empty cluster the point farthest from its own centroid,
/// taken from a cluster that can spare one. Returns the new inertia.
pub(crate) fn repair_empty(x: &Matrix, labels: &mut [usize], centroids: &mut Matrix) -> f64 {
    let k = centroids.rows();
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for (i, row) in x.iter_rows().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let dist = sq_dist(row, centroids.row(labels[i]));
            if far.is_none_or(|(_, best)| dist > best) {
                far = Some((i, dist));
            }
        }
        if let Some((i, _)) = far {
            counts[labels[i]] -= 1;
            labels[i] = c;
            counts[c] = 1;
            centroids.row_mut(c).copy_from_slice(x.row(i));
        }
    }
    inertia_of(x, centroids, labels)
}

fn inertia_of(x: &Matrix, centroids: &Matrix, labels: &[usize]) -> f64 {
    x.iter_rows().zip(labels).map(|(r, &l)| sq_dist(r, centroids.row(l))).sum()
}

/// Hartigan refinement: moves single points between clusters while a move
/// strictly lowers the SSE, then recomputes the means. Moving `x` from `a`
/// to `b` changes the SSE by
/// `|b|/(|b|+1) ||x - mu_b||^2 - |a|/(|a|-1) ||x - mu_a||^2`.
pub(crate) fn hartigan(x: &Matrix, labels: &mut [usize], centroids: &mut Matrix, max_passes: usize) -> f64 {
    let k = centroids.rows();
    let d = x.cols();
    let mut sums = Matrix::zeros(k, d);
    let mut sizes = vec![0usize; k];
    for (row, &l) in x.iter_rows().zip(labels.iter()) {
        sizes[l] += 1;
        sums.row_mut(l).iter_mut().zip(row).for_each(|(s, v)| *s += v);
    }
    let mean = |sums: &Matrix, sizes: &[usize], c: usize| -> Vec<f64> {
        sums.row(c).iter().map(|s| s / sizes[c] as f64).collect()
    };
    let mut means: Vec<Vec<f64>> = (0..k).map(|c| mean(&sums, &sizes, c)).collect();
    for _ in 0..max_passes {
        let mut moved = false;
        for (i, row) in x.iter_rows().enumerate() {
            let a = labels[i];
            if sizes[a] < 2 {
                continue;
            }
            let remove = sizes[a] as f64 / (sizes[a] - 1) as f64 * sq_dist(row, &means[a]);
            let mut best = (a, 0.0);
            for b in (0..k).filter(|&b| b != a) {
                let delta = sizes[b] as f64 / (sizes[b] + 1) as f64 * sq_dist(row, &means[b]) - remove;
                // the relative margin keeps rounding noise from cycling points
                if delta < best.1 - 1e-12 * remove {
                    best = (b, delta);
                }
            }
            let b = best.0;
            if b == a {
                continue;
            }
            labels[i] = b;
            sizes[a] -= 1;
            sizes[b] += 1;
            sums.row_mut(a).iter_mut().zip(row).for_each(|(s, v)| *s -= v);
            sums.row_mut(b).iter_mut().zip(row).for_each(|(s, v)| *s += v);
            means[a] = mean(&sums, &sizes, a);
            means[b] = mean(&sums, &sizes, b);
            moved = true;
        }
        if !moved {
            break;
        }
    }
    update_means(x, labels, centroids);
    inertia_of(x, centroids, labels)
}

struct Run {
    labels: Vec<usize>,
    centroids: Matrix,
    history: Vec<f64>,
}

/// Lloyd iterations from the given centres.
pub(crate) fn lloyd(x: &Matrix, mut centroids: Matrix, max_iter: usize, tol: f64) -> (Vec<usize>, Matrix, Vec<f64>) {
    let mut labels = vec![0; x.rows()];
    assign(x, &centroids, &mut labels);
    let mut inertia = repair_empty(x, &mut labels, &mut centroids);
    let mut history = vec![inertia];
    for _ in 0..max_iter {
        let previous_labels = labels.clone();
        update_means(x, &labels, &mut centroids);
        assign(x, &centroids, &mut labels);
        let next = repair_empty(x, &mut labels, &mut centroids);
        history.push(next);
        let improvement = if inertia > 0.0 { (inertia - next) / inertia } else { 0.0 };
        inertia = next;
        if labels == previous_labels || improvement < tol {
            break;
        }
    }
    (labels, centroids, history)
}

/// Lloyd's k-means with k-means++ seeding and `n_init` restarts, each
/// optionally finished by [`hartigan`] moves; the restart with the lowest
/// inertia wins (earliest on ties).
pub fn kmeans(x: &Matrix, k: usize, seed: u64, opts: &KMeansOptions) -> Result<KMeansFit> {
    check_data(x, k)?;
    if opts.n_init == 0 || opts.max_iter == 0 {
        return Err(ClusterError::InvalidParam("n_init and max_iter must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Run)> = None;
    for _ in 0..opts.n_init {
        let init = kmeans_plus_plus(x, k, &mut rng);
        let (mut labels, mut centroids, mut history) = lloyd(x, init, opts.max_iter, opts.tol);
        let mut inertia = inertia_of(x, &centroids, &labels);
        if opts.refine {
            let refined = hartigan(x, &mut labels, &mut centroids, opts.max_iter);
            if refined != inertia {
                history.push(refined);
            }
            inertia = refined;
        }
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, Run { labels, centroids, history }));
        }
    }
    let (inertia, run) = best.expect("n_init >= 1");
    Ok(finish(x, run.labels, run.centroids, run.history, inertia, k, seed, Algorithm::Kmeans, AlgorithmParams::Kmeans {
        max_iter: opts.max_iter,
        tol: opts.tol,
        n_init: opts.n_init,
        refine: opts.refine,
    }))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn finish(
    x: &Matrix,
    labels: Vec<usize>,
    centroids: Matrix,
    history: Vec<f64>,
    inertia: f64,
    k: usize,
    seed: u64,
    algorithm: Algorithm,
    params: AlgorithmParams,
) -> KMeansFit {
    let (labels, map) = relabel_by_first_appearance(&labels, k);
    let mut ordered = Matrix::zeros(k, x.cols());
    for (old, &new) in map.iter().enumerate() {
        ordered.row_mut(new).copy_from_slice(centroids.row(old));
    }
    KMeansFit {
        assignment: ClusterAssignment { labels, k, algorithm, params, seed, inertia: Some(inertia) },
        centroids: ordered,
        inertia_history: history,
    }
}
