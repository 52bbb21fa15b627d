use super::eigen::{jacobi_eigen, SymmetricEigen};
use super::kmeans::{kmeans, KMeansOptions};
use super::{check_data, Algorithm, AlgorithmParams, ClusterAssignment, ClusterError, Result};
use crate::linalg::{normalize_in_place, pairwise_distances, Matrix};

const JACOBI_TOL: f64 = 1e-10;

/// Eigen-decomposition of the normalized graph Laplacian of a dataset.
/// It does not depend on k, so one instance serves a whole sweep.
#[derive(Clone, Debug)]
pub struct SpectralEmbedding {
    eigen: SymmetricEigen,
    sigma: f64,
}

impl SpectralEmbedding {
    pub fn from_data(x: &Matrix) -> Result<Self> {
        check_data(x, 1)?;
        Self::from_distances(&pairwise_distances(x))
    }

    /// Gaussian affinity `exp(-d^2 / (2 sigma^2))` with sigma the median
    /// pairwise distance and a zero diagonal, then
    /// `L = I - D^{-1/2} W D^{-1/2}`.
    ///
    /// If the median distance is 0 the mean positive distance is used; if
    /// every distance is 0 all off-diagonal affinities are 1.
    pub fn from_distances(d: &Matrix) -> Result<Self> {
        let n = d.rows();
        if n == 0 {
            return Err(ClusterError::Empty);
        }
        let mut upper: Vec<f64> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| d[(i, j)]).collect();
        upper.sort_by(f64::total_cmp);
        let mut sigma = if upper.is_empty() {
            0.0
        } else if upper.len() % 2 == 1 {
            upper[upper.len() / 2]
        } else {
            0.5 * (upper[upper.len() / 2 - 1] + upper[upper.len() / 2])
        };
        if sigma == 0.0 {
            let positive: Vec<f64> = upper.iter().copied().filter(|&v| v > 0.0).collect();
            if !positive.is_empty() {
                sigma = positive.iter().sum::<f64>() / positive.len() as f64;
            }
        }

        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = if sigma > 0.0 { (-(d[(i, j)] * d[(i, j)]) / (2.0 * sigma * sigma)).exp() } else { 1.0 };
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        let degree: Vec<f64> = w.iter_rows().map(|r| r.iter().sum()).collect();
        if let Some(i) = degree.iter().position(|&deg| !(deg > 0.0)) {
            return Err(ClusterError::ZeroDegree(i));
        }
        let inv_sqrt: Vec<f64> = degree.iter().map(|deg| 1.0 / deg.sqrt()).collect();
        let mut lap = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let norm = inv_sqrt[i] * w[(i, j)] * inv_sqrt[j];
                lap[(i, j)] = if i == j { 1.0 - norm } else { -norm };
            }
        }
        // enforce exact symmetry for the solver
        for i in 0..n {
            for j in (i + 1)..n {
                lap[(j, i)] = lap[(i, j)];
            }
        }
        let eigen = jacobi_eigen(&lap, JACOBI_TOL)?;
        Ok(Self { eigen, sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    /// Rows of the first `k` eigenvectors, each scaled to unit length.
    pub fn embed(&self, k: usize) -> Matrix {
        let n = self.eigen.vectors.rows();
        let mut u = Matrix::zeros(n, k);
        for i in 0..n {
            for j in 0..k {
                u[(i, j)] = self.eigen.vectors[(i, j)];
            }
            normalize_in_place(u.row_mut(i));
        }
        u
    }

    pub fn cluster(&self, k: usize, seed: u64, opts: &KMeansOptions) -> Result<ClusterAssignment> {
        let n = self.eigen.vectors.rows();
        if k < 2 || k > n {
            return Err(ClusterError::InvalidK { k, n });
        }
        let fit = kmeans(&self.embed(k), k, seed, opts)?;
        Ok(ClusterAssignment {
            labels: fit.assignment.labels,
            k,
            algorithm: Algorithm::Spectral,
            params: AlgorithmParams::Spectral { sigma: self.sigma, n_init: opts.n_init },
            seed,
            inertia: None,
        })
    }
}

/// Normalized spectral clustering (Ng-Jordan-Weiss).
pub fn spectral(x: &Matrix, k: usize, seed: u64) -> Result<ClusterAssignment> {
    check_data(x, k)?;
    if k < 2 {
        return Err(ClusterError::InvalidK { k, n: x.rows() });
    }
    SpectralEmbedding::from_data(x)?.cluster(k, seed, &KMeansOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_must_be_at_least_two() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]);
        assert!(spectral(&x, 1, 0).is_err());
        assert!(spectral(&x, 4, 0).is_err());
    }

    #[test]
    fn isolated_point_has_zero_degree() {
        // the far point's affinities underflow to exactly zero
        let x = Matrix::from_rows(&[[0.0], [0.0], [0.0], [1.0], [1e6]]);
        assert_eq!(SpectralEmbedding::from_data(&x).unwrap_err(), ClusterError::ZeroDegree(4));
    }

    #[test]
    fn smallest_laplacian_eigenvalue_is_zero() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [3.0, 3.0]]);
        let e = SpectralEmbedding::from_data(&x).unwrap();
        assert!(e.eigenvalues()[0].abs() < 1e-10);
        assert!(e.eigenvalues().iter().all(|&v| v > -1e-10 && v < 2.0 + 1e-10));
    }

    #[test]
    fn separates_two_blobs() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [0.2, 0.1], [0.1, 0.3], [8.0, 8.0], [8.2, 7.9], [7.9, 8.1]]);
        assert_eq!(spectral(&x, 2, 3).unwrap().labels, vec![0, 0, 0, 1, 1, 1]);
    }
}
