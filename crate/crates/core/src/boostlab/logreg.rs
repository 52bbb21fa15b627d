use serde::{Deserialize, Serialize};

use super::model::{argmax, check_training_input};
use super::{softmax, BoostError, Result};
use crate::linalg::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegParams {
    /// Coefficient of `1/2 ||W||^2`; intercepts are not penalized.
    pub l2: f64,
    pub epochs: usize,
    /// Upper bound on the step size; see [`train_logreg`].
    pub step: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self { l2: 0.01, epochs: 500, step: 1.0 }
    }
}

impl LogRegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(BoostError::InvalidParam("l2 must be finite and non-negative".into()));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(BoostError::InvalidParam("step must be positive".into()));
        }
        Ok(())
    }
}

/// Multinomial logistic regression on standardized features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub classes: Vec<String>,
    pub means: Vec<f64>,
    /// 0 marks a feature that was constant in training; its weight stays 0.
    pub stds: Vec<f64>,
    /// `weights[c][f]` on the standardized feature `f`.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub params: LogRegParams,
    pub epochs_run: usize,
}

fn standardize_with(x: &Matrix, means: &[f64], stds: &[f64]) -> Matrix {
    let mut z = Matrix::zeros(x.rows(), x.cols());
    for (i, row) in x.iter_rows().enumerate() {
        for (f, v) in row.iter().enumerate() {
            z[(i, f)] = if stds[f] > 0.0 { (v - means[f]) / stds[f] } else { 0.0 };
        }
    }
    z
}

/// Mean cross-entropy plus `1/2 l2 ||W||^2` and its gradient. `theta` holds,
/// per class, the `d` weights followed by the intercept.
pub fn logreg_objective(z: &Matrix, labels: &[usize], n_classes: usize, theta: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let d = z.cols();
    let stride = d + 1;
    let n = z.rows() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; theta.len()];
    let mut scores = vec![0.0; n_classes];
    for (row, &y) in z.iter_rows().zip(labels) {
        for (c, s) in scores.iter_mut().enumerate() {
            let w = &theta[c * stride..c * stride + d];
            *s = theta[c * stride + d] + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        }
        value += super::softmax_loss(y, &scores);
        for (c, p) in softmax(&scores).into_iter().enumerate() {
            let r = (p - if c == y { 1.0 } else { 0.0 }) / n;
            let gw = &mut grad[c * stride..c * stride + d];
            gw.iter_mut().zip(row).for_each(|(g, v)| *g += r * v);
            grad[c * stride + d] += r;
        }
    }
    value /= n;
    for c in 0..n_classes {
        for f in 0..d {
            let w = theta[c * stride + f];
            value += 0.5 * l2 * w * w;
            grad[c * stride + f] += l2 * w;
        }
    }
    (value, grad)
}

/// Largest eigenvalue of `A^T A / n` for `A = [z | 1]`, by power iteration
/// from the all-ones vector.
fn gram_spectral_radius(z: &Matrix) -> f64 {
    let d = z.cols() + 1;
    let n = z.rows() as f64;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut out = vec![0.0; d];
        for row in z.iter_rows() {
            let a: f64 = row.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>() + v[d - 1];
            out[..d - 1].iter_mut().zip(row).for_each(|(o, x)| *o += a * x);
            out[d - 1] += a;
        }
        out.iter_mut().for_each(|o| *o /= n);
        let norm = out.iter().map(|o| o * o).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = out.into_iter().map(|o| o / norm).collect();
    }
    lambda
}

/// Full-batch gradient descent from zero weights. The cross-entropy part
/// takes a gradient step and the L2 part is applied in closed form,
/// `W <- (W - s grad) / (1 + s l2)`, which stays stable for any `l2`. The
/// step is `min(params.step, 1/L)` with `L` a curvature bound of the
/// cross-entropy. Stops when the gradient max-norm drops below 1e-6.
pub fn train_logreg(x: &Matrix, labels: &[usize], classes: &[String], params: &LogRegParams) -> Result<LogRegModel> {
    params.validate()?;
    let n_classes = classes.len();
    check_training_input(x, labels, n_classes)?;
    let d = x.cols();
    let n = x.rows() as f64;
    let means: Vec<f64> = (0..d).map(|f| x.iter_rows().map(|r| r[f]).sum::<f64>() / n).collect();
    let stds: Vec<f64> = (0..d)
        .map(|f| {
            let var = x.iter_rows().map(|r| (r[f] - means[f]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let z = standardize_with(x, &means, &stds);

    // the softmax cross-entropy Hessian is bounded by 1/2 of the Gram matrix
    let curvature = 0.5 * gram_spectral_radius(&z) * 1.05;
    let step = if curvature > 0.0 { params.step.min(1.0 / curvature) } else { params.step };

    let stride = d + 1;
    let mut theta = vec![0.0; n_classes * stride];
    let mut epochs_run = 0;
    for _ in 0..params.epochs {
        let (_, grad) = logreg_objective(&z, labels, n_classes, &theta, params.l2);
        if grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) < 1e-6 {
            break;
        }
        for c in 0..n_classes {
            for f in 0..d {
                let k = c * stride + f;
                let w = theta[k];
                let g_ce = grad[k] - params.l2 * w;
                theta[k] = (w - step * g_ce) / (1.0 + step * params.l2);
            }
            theta[c * stride + d] -= step * grad[c * stride + d];
        }
        epochs_run += 1;
    }
    if !theta.iter().all(|v| v.is_finite()) {
        return Err(BoostError::Numeric("logistic regression diverged".into()));
    }
    Ok(LogRegModel {
        classes: classes.to_vec(),
        means,
        stds,
        weights: (0..n_classes).map(|c| theta[c * stride..c * stride + d].to_vec()).collect(),
        intercepts: (0..n_classes).map(|c| theta[c * stride + d]).collect(),
        params: params.clone(),
        epochs_run,
    })
}

impl LogRegModel {
    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn margins(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(BoostError::LayoutMismatch { got: x.len(), expected: self.n_features() });
        }
        let z: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(f, v)| if self.stds[f] > 0.0 { (v - self.means[f]) / self.stds[f] } else { 0.0 })
            .collect();
        Ok(self
            .weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| b + w.iter().zip(&z).map(|(a, c)| a * c).sum::<f64>())
            .collect())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.margins(x)?))
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.margins(x)?))
    }

    pub fn predict_classes(&self, x: &Matrix) -> Result<Vec<usize>> {
        x.iter_rows().map(|r| self.predict_class(r)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| BoostError::Json(e.to_string()))?;
        let (c, d) = (m.classes.len(), m.means.len());
        if c < 2 || m.intercepts.len() != c || m.weights.len() != c || m.stds.len() != d || m.weights.iter().any(|w| w.len() != d) {
            return Err(BoostError::Json("inconsistent logistic regression shapes".into()));
        }
        Ok(m)
    }
}
