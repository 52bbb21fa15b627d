//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use findingscope::linalg::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    let data = (0..n * d).map(|_| rng.gen_range(-5.0..5.0)).collect();
    Matrix::from_vec(n, d, data)
}

fn sse_of(x: &Matrix, members: &[usize]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let d = x.cols();
    let mut mean = vec![0.0; d];
    for &i in members {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= members.len() as f64);
    members.iter().map(|&i| x.row(i).iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sum()
}

/// Smallest within-cluster SSE over every partition into exactly `k`
/// non-empty clusters, by enumerating restricted growth strings.
pub fn exhaustive_min_sse(x: &Matrix, k: usize) -> f64 {
    fn rec(x: &Matrix, k: usize, labels: &mut Vec<usize>, used: usize, best: &mut f64) {
        let n = x.rows();
        if labels.len() == n {
            if used == k {
                let sse: f64 = (0..k)
                    .map(|c| {
                        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                        sse_of(x, &members)
                    })
                    .sum();
                *best = best.min(sse);
            }
            return;
        }
        if used + (n - labels.len()) < k {
            return;
        }
        for c in 0..(used + 1).min(k) {
            labels.push(c);
            rec(x, k, labels, used.max(c + 1), best);
            labels.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(x, k, &mut Vec::new(), 0, &mut best);
    best
}

/// Ward agglomeration by brute force: every step recomputes the SSE
/// increase of every pair from scratch. Returns `(a, b, delta)` where
/// clusters are named by their smallest member.
pub fn ward_oracle(x: &Matrix) -> Vec<(usize, usize, f64)> {
    // kept sorted by smallest member, so scanning i < j visits names in order
    let mut clusters: Vec<Vec<usize>> = (0..x.rows()).map(|i| vec![i]).collect();
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let mut union = clusters[i].clone();
                union.extend(&clusters[j]);
                let delta = sse_of(x, &union) - sse_of(x, &clusters[i]) - sse_of(x, &clusters[j]);
                if best.is_none_or(|(b, _, _)| delta < b) {
                    best = Some((delta, i, j));
                }
            }
        }
        let (delta, i, j) = best.unwrap();
        out.push((clusters[i][0], clusters[j][0], delta));
        let absorbed = clusters.remove(j);
        clusters[i].extend(absorbed);
    }
    out
}

/// Mean silhouette straight from the definition.
pub fn brute_silhouette(x: &Matrix, labels: &[usize]) -> f64 {
    let n = x.rows();
    let k = labels.iter().max().unwrap() + 1;
    let dist = |i: usize, j: usize| x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let mut total = 0.0;
    for i in 0..n {
        let mean_to = |c: usize| {
            let others: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == c).collect();
            others.iter().map(|&j| dist(i, j)).sum::<f64>() / others.len() as f64
        };
        if labels.iter().filter(|&&l| l == labels[i]).count() == 1 {
            continue;
        }
        let a = mean_to(labels[i]);
        let b = (0..k).filter(|&c| c != labels[i]).map(mean_to).fold(f64::INFINITY, f64::min);
        if a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

/// Labels covering every one of `0..k` with the rest random.
pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.gen_range(0..=i));
    }
    labels
}

/// Random symmetric matrix with entries in [-1, 1].
pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-1.0..1.0);
            m.row_mut(i)[j] = v;
            m.row_mut(j)[i] = v;
        }
    }
    m
}

/// Cluster-by-label count table with every cluster non-empty.
pub fn random_counts(rng: &mut ChaCha8Rng, k: usize, labels: usize, max: usize) -> Vec<Vec<usize>> {
    (0..k)
        .map(|_| loop {
            let row: Vec<usize> = (0..labels).map(|_| if rng.gen_bool(0.3) { 0 } else { rng.gen_range(0..=max) }).collect();
            if row.iter().sum::<usize>() > 0 {
                break row;
            }
        })
        .collect()
}

/// First and second derivative of `f` at 0 by Richardson-extrapolated
/// central differences.
pub fn derivatives(f: impl Fn(f64) -> f64, step: f64) -> (f64, f64) {
    let d1 = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    let d2 = |h: f64| (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
    ((4.0 * d1(step / 2.0) - d1(step)) / 3.0, (4.0 * d2(step / 2.0) - d2(step)) / 3.0)
}

pub fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i}")).collect()
}
