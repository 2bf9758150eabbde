use serde::{Deserialize, Serialize};

use super::{check_fit_inputs, class_weights, ModelKind, ScoredClassifier};
use crate::error::Result;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NaiveBayesParams {
    pub var_floor: f64,
}

impl Default for NaiveBayesParams {
    fn default() -> Self {
        Self { var_floor: 1e-9 }
    }
}

/// Gaussian naive Bayes with weighted class statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayesModel {
    pub log_prior: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub vars: [Vec<f64>; 2],
}

impl NaiveBayesModel {
    fn log_joint(&self, c: usize, row: &[f64]) -> f64 {
        let ll: f64 = row
            .iter()
            .zip(&self.means[c])
            .zip(&self.vars[c])
            .map(|((x, m), v)| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m).powi(2) / (2.0 * v))
            .sum();
        self.log_prior[c] + ll
    }
}

impl ScoredClassifier for NaiveBayesModel {
    fn kind(&self) -> ModelKind {
        ModelKind::NaiveBayes
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        let diff = self.log_joint(0, row) - self.log_joint(1, row);
        super::logistic::sigmoid(-diff)
    }
}

pub fn fit_gnb(x: &Matrix, labels: &[u8], weights: &[f64], p: &NaiveBayesParams) -> Result<NaiveBayesModel> {
    check_fit_inputs(x, labels, weights)?;
    let d = x.ncols();
    let cw = class_weights(labels, weights);
    let total = cw[0] + cw[1];
    let mut means = [vec![0.0; d], vec![0.0; d]];
    let mut vars = [vec![0.0; d], vec![0.0; d]];
    for (i, row) in x.rows_iter().enumerate() {
        let c = labels[i] as usize;
        for (m, v) in means[c].iter_mut().zip(row) {
            *m += weights[i] * v;
        }
    }
    for c in 0..2 {
        means[c].iter_mut().for_each(|m| *m /= cw[c]);
    }
    for (i, row) in x.rows_iter().enumerate() {
        let c = labels[i] as usize;
        for j in 0..d {
            vars[c][j] += weights[i] * (row[j] - means[c][j]).powi(2);
        }
    }
    for c in 0..2 {
        vars[c].iter_mut().for_each(|v| *v = (*v / cw[c]).max(p.var_floor));
    }
    Ok(NaiveBayesModel { log_prior: [(cw[0] / total).ln(), (cw[1] / total).ln()], means, vars })
}
