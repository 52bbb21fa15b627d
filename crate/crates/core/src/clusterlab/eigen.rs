use super::{ClusterError, Result};
use crate::linalg::Matrix;

/// Eigen-decomposition of a real symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: Matrix,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm is at
/// most `tol` times the Frobenius norm of the input.
pub fn jacobi_eigen(a: &Matrix, tol: f64) -> Result<SymmetricEigen> {
    if !a.is_symmetric(0.0) {
        return Err(ClusterError::NotSymmetric);
    }
    if !a.is_finite() {
        return Err(ClusterError::NonFinite);
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    let limit = tol * scale;

    let off_norm = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * m[(i, j)] * m[(i, j)];
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_norm(&m) <= limit {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = m[(r, p)];
                    let arq = m[(r, q)];
                    let new_p = c * arp - s * arq;
                    let new_q = s * arp + c * arq;
                    m[(r, p)] = new_p;
                    m[(p, r)] = new_p;
                    m[(r, q)] = new_q;
                    m[(q, r)] = new_q;
                }
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
    }
    if !converged && off_norm(&m) > limit {
        return Err(ClusterError::NoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, col)] = v[(r, src)];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input_is_returned_exactly() {
        let mut a = Matrix::zeros(3, 3);
        a[(0, 0)] = 3.5;
        a[(1, 1)] = -1.25;
        a[(2, 2)] = 0.0;
        let e = jacobi_eigen(&a, 1e-10).unwrap();
        assert_eq!(e.values, vec![-1.25, 0.0, 3.5]);
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let e = jacobi_eigen(&a, 1e-10).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert_eq!(jacobi_eigen(&a, 1e-10).unwrap_err(), ClusterError::NotSymmetric);
    }
}
