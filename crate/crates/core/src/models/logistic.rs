use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_fit_inputs, ModelKind, ScoredClassifier};
use crate::error::Result;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub l2_strength: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { l2_strength: 1.0, max_iters: 1000, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    /// Max-norm of the objective gradient at the returned solution.
    pub grad_norm: f64,
    pub converged: bool,
}

impl ScoredClassifier for LogisticModel {
    fn kind(&self) -> ModelKind {
        ModelKind::LogisticRegression
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.intercept + dot(&self.coef, row))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Weighted L2-regularized logistic loss and its gradient.
///
/// `params` holds the coefficients followed by the (unpenalized) intercept.
/// Loss = sum_i w_i [log(1 + e^{z_i}) - y_i z_i] + l2/2 * |coef|^2.
pub fn logistic_objective(x: &Matrix, labels: &[u8], weights: &[f64], l2: f64, params: &[f64]) -> (f64, Vec<f64>) {
    let d = x.ncols();
    let (coef, b) = (&params[..d], params[d]);
    let mut loss = 0.5 * l2 * coef.iter().map(|c| c * c).sum::<f64>();
    let mut grad: Vec<f64> = coef.iter().map(|c| l2 * c).chain(std::iter::once(0.0)).collect();
    for (i, row) in x.rows_iter().enumerate() {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let z = b + dot(coef, row);
        let y = f64::from(labels[i]);
        loss += w * (softplus(z) - y * z);
        let r = w * (sigmoid(z) - y);
        for (g, v) in grad[..d].iter_mut().zip(row) {
            *g += r * v;
        }
        grad[d] += r;
    }
    (loss, grad)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton directions safeguarded by an Armijo backtracking line search; falls
/// back to the negative gradient when the Hessian is not positive definite.
pub fn fit_logistic(x: &Matrix, labels: &[u8], weights: &[f64], p: &LogisticParams) -> Result<LogisticModel> {
    check_fit_inputs(x, labels, weights)?;
    let d = x.ncols();
    let l2 = p.l2_strength;
    let mut theta = vec![0.0; d + 1];
    let (mut loss, mut grad) = logistic_objective(x, labels, weights, l2, &theta);
    let mut iterations = 0;
    while iterations < p.max_iters && max_abs(&grad) >= p.tolerance {
        iterations += 1;
        let dir = newton_direction(x, weights, l2, &theta, &grad).unwrap_or_else(|| grad.iter().map(|g| -g).collect());
        let slope: f64 = dir.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let dir = if slope < 0.0 { dir } else { grad.iter().map(|g| -g).collect() };
        let slope: f64 = dir.iter().zip(&grad).map(|(a, b)| a * b).sum();

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, s)| t + step * s).collect();
            let (l, g) = logistic_objective(x, labels, weights, l2, &cand);
            if l.is_finite() && l <= loss + 1e-4 * step * slope {
                theta = cand;
                loss = l;
                grad = g;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let grad_norm = max_abs(&grad);
    Ok(LogisticModel {
        coef: theta[..d].to_vec(),
        intercept: theta[d],
        iterations,
        grad_norm,
        converged: grad_norm < p.tolerance,
    })
}

fn newton_direction(x: &Matrix, weights: &[f64], l2: f64, theta: &[f64], grad: &[f64]) -> Option<Vec<f64>> {
    let d = x.ncols();
    let mut h = DMatrix::<f64>::zeros(d + 1, d + 1);
    for (i, row) in x.rows_iter().enumerate() {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let s = sigmoid(theta[d] + dot(&theta[..d], row));
        let c = w * s * (1.0 - s);
        for a in 0..=d {
            let va = if a < d { row[a] } else { 1.0 };
            for b in 0..=a {
                let vb = if b < d { row[b] } else { 1.0 };
                h[(a, b)] += c * va * vb;
            }
        }
    }
    for a in 0..=d {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
        if a < d {
            h[(a, a)] += l2;
        }
    }
    let chol = h.cholesky()?;
    let g = DVector::from_column_slice(grad);
    let step = chol.solve(&g);
    let out: Vec<f64> = step.iter().map(|v| -v).collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}
