//! Pre-processing interventions: reweighing and learned fair representations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::sigmoid;

#[derive(Debug, Clone)]
pub struct ReweighResult {
    /// Weight per cell, indexed `[group][label]`.
    pub cell_weights: [[f64; 2]; 2],
    pub dataset: TabularDataset,
}

/// Weights each (group, label) cell by `n_group * n_label / (n * n_cell)`,
/// which makes group and label independent under the weighted distribution.
pub fn reweigh(ds: &TabularDataset) -> Result<ReweighResult> {
    let c = ds.cell_counts();
    if c.iter().flatten().any(|&v| v == 0) {
        return Err(Error::Mitigation("reweighing needs all four (group, label) cells nonempty".into()));
    }
    let n = ds.len() as f64;
    let n_group = [(c[0][0] + c[0][1]) as f64, (c[1][0] + c[1][1]) as f64];
    let n_label = [(c[0][0] + c[1][0]) as f64, (c[0][1] + c[1][1]) as f64];
    let mut cell_weights = [[0.0; 2]; 2];
    for g in 0..2 {
        for y in 0..2 {
            cell_weights[g][y] = n_group[g] * n_label[y] / (n * c[g][y] as f64);
        }
    }
    let weights = ds
        .protected()
        .iter()
        .zip(ds.labels())
        .map(|(&g, &y)| cell_weights[g as usize][y as usize])
        .collect();
    Ok(ReweighResult { cell_weights, dataset: ds.clone().with_weights(weights)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LfrParams {
    pub k: usize,
    pub a_x: f64,
    pub a_y: f64,
    pub a_z: f64,
    pub max_iters: usize,
    pub temperature: f64,
    /// Replace training labels by thresholded prototype label scores.
    pub relabel: bool,
    pub seed: u64,
}

impl Default for LfrParams {
    fn default() -> Self {
        Self { k: 10, a_x: 0.01, a_y: 1.0, a_z: 50.0, max_iters: 500, temperature: 1.0, relabel: false, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfrLoss {
    pub total: f64,
    pub reconstruction: f64,
    pub prediction: f64,
    pub parity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LfrModel {
    pub prototypes: Matrix,
    /// Per-prototype favorable-label score in `[0,1]`.
    pub label_weights: Vec<f64>,
    pub params: LfrParams,
    pub iterations: usize,
    pub final_loss: LfrLoss,
    /// Objective after initialization and after every accepted step.
    pub loss_history: Vec<f64>,
}

/// Softmax over negative squared distances to the prototypes.
fn memberships(row: &[f64], prototypes: &Matrix, temperature: f64, out: &mut [f64]) {
    for (k, m) in out.iter_mut().enumerate() {
        let d2: f64 = row.iter().zip(prototypes.row(k)).map(|(a, b)| (a - b).powi(2)).sum();
        *m = -d2 / temperature;
    }
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for m in out.iter_mut() {
        *m = (*m - max).exp();
        sum += *m;
    }
    out.iter_mut().for_each(|m| *m /= sum);
}

/// Problem data for the LFR objective; parameters are packed as
/// `[prototype rows..., label logits...]`.
pub struct LfrProblem<'a> {
    pub x: &'a Matrix,
    pub labels: &'a [u8],
    pub groups: &'a [u8],
    pub k: usize,
    pub a_x: f64,
    pub a_y: f64,
    pub a_z: f64,
    pub temperature: f64,
}

impl LfrProblem<'_> {
    pub fn param_len(&self) -> usize {
        self.k * self.x.ncols() + self.k
    }

    pub fn objective(&self, params: &[f64]) -> (LfrLoss, Vec<f64>) {
        let (n, d, k) = (self.x.nrows(), self.x.ncols(), self.k);
        let protos = Matrix::from_vec(k, d, params[..k * d].to_vec());
        let w: Vec<f64> = params[k * d..].iter().map(|&t| sigmoid(t)).collect();
        let n_f = n as f64;
        let n_grp = [
            self.groups.iter().filter(|&&g| g == 0).count() as f64,
            self.groups.iter().filter(|&&g| g == 1).count() as f64,
        ];

        let mut all_m = vec![0.0; n * k];
        let mut group_mean = [vec![0.0; k], vec![0.0; k]];
        for i in 0..n {
            let m = &mut all_m[i * k..(i + 1) * k];
            memberships(self.x.row(i), &protos, self.temperature, m);
            let g = self.groups[i] as usize;
            for (acc, v) in group_mean[g].iter_mut().zip(m.iter()) {
                *acc += v / n_grp[g];
            }
        }
        let sign: Vec<f64> = (0..k).map(|j| (group_mean[0][j] - group_mean[1][j]).signum()).collect();
        let parity = (0..k).map(|j| (group_mean[0][j] - group_mean[1][j]).abs()).sum::<f64>() / k as f64;

        let mut grad = vec![0.0; params.len()];
        let mut rec = 0.0;
        let mut pred = 0.0;
        let mut g_m = vec![0.0; k];
        let mut xhat = vec![0.0; d];
        for i in 0..n {
            let row = self.x.row(i);
            let m = &all_m[i * k..(i + 1) * k];
            xhat.iter_mut().for_each(|v| *v = 0.0);
            for (j, mj) in m.iter().enumerate() {
                for (h, p) in xhat.iter_mut().zip(protos.row(j)) {
                    *h += mj * p;
                }
            }
            let err: Vec<f64> = xhat.iter().zip(row).map(|(a, b)| a - b).collect();
            rec += err.iter().map(|e| e * e).sum::<f64>() / n_f;

            let yhat_raw: f64 = m.iter().zip(&w).map(|(a, b)| a * b).sum();
            let yhat = yhat_raw.clamp(1e-12, 1.0 - 1e-12);
            let y = f64::from(self.labels[i]);
            pred += -(y * yhat.ln() + (1.0 - y) * (1.0 - yhat).ln()) / n_f;
            let q = self.a_y * (-y / yhat + (1.0 - y) / (1.0 - yhat)) / n_f;

            let g = self.groups[i] as usize;
            let z_coef = self.a_z / k as f64 * if g == 0 { 1.0 / n_grp[0] } else { -1.0 / n_grp[1] };
            for j in 0..k {
                let proto = protos.row(j);
                let e_dot_v: f64 = err.iter().zip(proto).map(|(e, v)| e * v).sum();
                g_m[j] = self.a_x * 2.0 / n_f * e_dot_v + q * w[j] + z_coef * sign[j];
                // direct paths through the reconstruction and the label score
                for (t, e) in err.iter().enumerate() {
                    grad[j * d + t] += self.a_x * 2.0 / n_f * m[j] * e;
                }
                grad[k * d + j] += q * m[j] * w[j] * (1.0 - w[j]);
            }
            let mean_g: f64 = m.iter().zip(&g_m).map(|(a, b)| a * b).sum();
            for j in 0..k {
                let da = m[j] * (g_m[j] - mean_g);
                let proto = protos.row(j);
                for t in 0..d {
                    grad[j * d + t] += da * 2.0 / self.temperature * (row[t] - proto[t]);
                }
            }
        }
        let loss = LfrLoss {
            total: self.a_x * rec + self.a_y * pred + self.a_z * parity,
            reconstruction: rec,
            prediction: pred,
            parity,
        };
        (loss, grad)
    }
}

fn init_prototypes(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = x.ncols();
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.shuffle(rng);
    let mut chosen: Vec<&[f64]> = Vec::with_capacity(k);
    for &i in &order {
        if chosen.len() == k {
            break;
        }
        let row = x.row(i);
        if !chosen.contains(&row) {
            chosen.push(row);
        }
    }
    let mut out = Vec::with_capacity(k * d);
    for c in &chosen {
        out.extend_from_slice(c);
    }
    while out.len() < k * d {
        let base = if x.nrows() > 0 { x.row(order[out.len() / d % x.nrows()]).to_vec() } else { vec![0.0; d] };
        for v in base {
            let z: f64 = StandardNormal.sample(rng);
            out.push(v + 0.1 * z);
        }
    }
    out
}

pub fn lfr_fit(ds: &TabularDataset, p: &LfrParams) -> Result<LfrModel> {
    if p.k < 1 {
        return Err(Error::Parameter("LFR needs at least one prototype".into()));
    }
    if [p.a_x, p.a_y, p.a_z].iter().any(|a| !(*a >= 0.0 && a.is_finite())) || !(p.temperature > 0.0) {
        return Err(Error::Parameter("LFR coefficients must be nonnegative and temperature positive".into()));
    }
    let sizes = ds.group_sizes();
    if sizes[0] == 0 || sizes[1] == 0 {
        return Err(Error::Mitigation("LFR needs both protected groups".into()));
    }
    let problem = LfrProblem {
        x: ds.features(),
        labels: ds.labels(),
        groups: ds.protected(),
        k: p.k,
        a_x: p.a_x,
        a_y: p.a_y,
        a_z: p.a_z,
        temperature: p.temperature,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut params = init_prototypes(ds.features(), p.k, &mut rng);
    params.extend(std::iter::repeat_n(0.0, p.k));

    let (mut loss, mut grad) = problem.objective(&params);
    if !loss.total.is_finite() {
        return Err(Error::Mitigation("LFR objective is not finite at initialization".into()));
    }
    let mut history = vec![loss.total];
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < p.max_iters {
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        if g2 < 1e-24 {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = params.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            let (l, g) = problem.objective(&cand);
            if !l.total.is_finite() {
                step *= 0.5;
                continue;
            }
            if l.total <= loss.total - 1e-4 * step * g2 {
                params = cand;
                loss = l;
                grad = g;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if !loss.total.is_finite() {
                return Err(Error::Mitigation("LFR diverged; use a smaller step size".into()));
            }
            break;
        }
        iterations += 1;
        history.push(loss.total);
        step *= 2.0;
    }
    let d = ds.features().ncols();
    Ok(LfrModel {
        prototypes: Matrix::from_vec(p.k, d, params[..p.k * d].to_vec()),
        label_weights: params[p.k * d..].iter().map(|&t| sigmoid(t)).collect(),
        params: *p,
        iterations,
        final_loss: loss,
        loss_history: history,
    })
}

impl LfrModel {
    pub fn memberships(&self, row: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.label_weights.len()];
        memberships(row, &self.prototypes, self.params.temperature, &mut m);
        m
    }

    pub fn reconstruct_row(&self, row: &[f64]) -> Vec<f64> {
        let m = self.memberships(row);
        let mut out = vec![0.0; row.len()];
        for (j, mj) in m.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(self.prototypes.row(j)) {
                *o += mj * p;
            }
        }
        out
    }

    pub fn label_score(&self, row: &[f64]) -> f64 {
        self.memberships(row).iter().zip(&self.label_weights).map(|(a, b)| a * b).sum()
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let rows: Vec<Vec<f64>> = x.rows_iter().map(|r| self.reconstruct_row(r)).collect();
        if rows.is_empty() {
            return Matrix::zeros(0, x.ncols());
        }
        Matrix::from_rows(&rows)
    }
}

/// Replaces features by their prototype reconstructions (and labels by the
/// thresholded prototype label scores when `relabel` is set).
pub fn lfr_apply(model: &LfrModel, ds: &TabularDataset, relabel: bool) -> Result<TabularDataset> {
    if ds.features().ncols() != model.prototypes.ncols() {
        return Err(Error::Mitigation(format!(
            "LFR model expects {} features, dataset has {}",
            model.prototypes.ncols(),
            ds.features().ncols()
        )));
    }
    let out = ds.clone().with_features(model.transform(ds.features()))?;
    if relabel {
        let labels = ds.features().rows_iter().map(|r| u8::from(model.label_score(r) >= 0.5)).collect();
        return out.with_labels(labels);
    }
    Ok(out)
}
