//! In-processing reductions of fair classification to cost-sensitive
//! classification: exponentiated gradient and grid search.
//!
//! Cost-sensitive problems are handed to the base learner as a weighted
//! classification problem: each instance is labeled with its cheaper
//! prediction and weighted by the absolute cost difference. All costs are
//! scaled by the total instance weight so that zero multipliers reproduce
//! the original labels and weights exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{TabularDataset, PRIVILEGED, UNPRIVILEGED};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics;
use crate::models::{ModelKind, ModelSpec, ScoredClassifier, SharedClassifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    DemographicParity,
    EqualizedOdds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessConstraint {
    pub kind: ConstraintKind,
    pub eps: f64,
}

impl FairnessConstraint {
    pub fn new(kind: ConstraintKind) -> Self {
        Self { kind, eps: 0.01 }
    }
}

/// |SPD| for demographic parity, max(|TPR gap|, |FPR gap|) for equalized odds.
pub fn constraint_violation(preds: &[u8], labels: &[u8], groups: &[u8], kind: ConstraintKind) -> Result<f64> {
    Ok(match kind {
        ConstraintKind::DemographicParity => metrics::spd(preds, groups)?.abs(),
        ConstraintKind::EqualizedOdds => {
            let tpr = metrics::eod(preds, labels, groups)?;
            let fpr = metrics::fpr_gap(preds, labels, groups)?;
            tpr.abs().max(fpr.abs())
        }
    })
}

/// Weighted statistics of one training set used to build cost vectors.
struct Moments<'a> {
    labels: &'a [u8],
    groups: &'a [u8],
    weights: &'a [f64],
    total: f64,
    /// `[group][label]` weight sums
    cell: [[f64; 2]; 2],
}

impl<'a> Moments<'a> {
    fn new(ds: &'a TabularDataset) -> Result<Self> {
        let mut cell = [[0.0; 2]; 2];
        for ((&g, &y), &w) in ds.protected().iter().zip(ds.labels()).zip(ds.weights()) {
            cell[g as usize][y as usize] += w;
        }
        if cell.iter().flatten().any(|&w| w <= 0.0) {
            return Err(Error::Mitigation("reductions need every (group, label) cell populated".into()));
        }
        Ok(Self {
            labels: ds.labels(),
            groups: ds.protected(),
            weights: ds.weights(),
            total: ds.weights().iter().sum(),
            cell,
        })
    }

    fn group_w(&self, g: usize) -> f64 {
        self.cell[g][0] + self.cell[g][1]
    }

    fn label_w(&self, y: usize) -> f64 {
        self.cell[0][y] + self.cell[1][y]
    }

    /// Weighted mean of `h` conditioned on an optional group and optional label.
    fn mean(&self, h: &[f64], group: Option<usize>, label: Option<usize>) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &hi) in h.iter().enumerate() {
            let g = self.groups[i] as usize;
            let y = self.labels[i] as usize;
            if group.is_some_and(|a| a != g) || label.is_some_and(|b| b != y) {
                continue;
            }
            num += self.weights[i] * hi;
            den += self.weights[i];
        }
        num / den
    }

    fn error(&self, h: &[f64]) -> f64 {
        let e: f64 = (0..h.len())
            .map(|i| self.weights[i] * if self.labels[i] == 1 { 1.0 - h[i] } else { h[i] })
            .sum();
        e / self.total
    }

    /// Weighted group-gap violation, matching [`constraint_violation`] on unit weights.
    fn violation(&self, h: &[f64], kind: ConstraintKind) -> f64 {
        let (u, p) = (UNPRIVILEGED as usize, PRIVILEGED as usize);
        match kind {
            ConstraintKind::DemographicParity => (self.mean(h, Some(u), None) - self.mean(h, Some(p), None)).abs(),
            ConstraintKind::EqualizedOdds => {
                let tpr = self.mean(h, Some(u), Some(1)) - self.mean(h, Some(p), Some(1));
                let fpr = self.mean(h, Some(u), Some(0)) - self.mean(h, Some(p), Some(0));
                tpr.abs().max(fpr.abs())
            }
        }
    }

    /// Moments against the overall rate: one per group (parity) or per (group, label) (odds).
    fn moment_cells(kind: ConstraintKind) -> Vec<(usize, Option<usize>)> {
        match kind {
            ConstraintKind::DemographicParity => vec![(0, None), (1, None)],
            ConstraintKind::EqualizedOdds => vec![(0, Some(0)), (0, Some(1)), (1, Some(0)), (1, Some(1))],
        }
    }

    fn moment(&self, h: &[f64], cell: (usize, Option<usize>)) -> f64 {
        self.mean(h, Some(cell.0), cell.1) - self.mean(h, None, cell.1)
    }

    /// `total * d(moment)/d(h_i)`.
    fn moment_grad(&self, i: usize, cell: (usize, Option<usize>)) -> f64 {
        let g = self.groups[i] as usize;
        let y = self.labels[i] as usize;
        let w = self.weights[i];
        match cell.1 {
            None => self.total * w * (f64::from(u8::from(g == cell.0)) / self.group_w(cell.0) - 1.0 / self.total),
            Some(lab) if lab == y => {
                self.total
                    * w
                    * (f64::from(u8::from(g == cell.0)) / self.cell[cell.0][lab] - 1.0 / self.label_w(lab))
            }
            Some(_) => 0.0,
        }
    }

    /// `total * d(gap)/d(h_i)` for the unprivileged-minus-privileged gap on `label` (or overall).
    fn gap_grad(&self, i: usize, label: Option<usize>) -> f64 {
        let g = self.groups[i] as usize;
        let y = self.labels[i] as usize;
        let w = self.weights[i];
        let (u, p) = (UNPRIVILEGED as usize, PRIVILEGED as usize);
        match label {
            None => self.total * w * if g == u { 1.0 / self.group_w(u) } else { -1.0 / self.group_w(p) },
            Some(lab) if lab == y => {
                self.total * w * if g == u { 1.0 / self.cell[u][lab] } else { -1.0 / self.cell[p][lab] }
            }
            Some(_) => 0.0,
        }
    }

    /// Converts per-instance extra cost of predicting favorable into a weighted classification problem.
    fn cost_sensitive(&self, extra_cost1: &[f64]) -> (Vec<u8>, Vec<f64>) {
        (0..self.labels.len())
            .map(|i| {
                let w = self.weights[i];
                let y = self.labels[i];
                let cost0 = if y == 1 { w } else { 0.0 };
                let cost1 = (if y == 1 { 0.0 } else { w }) + extra_cost1[i];
                (u8::from(cost0 > cost1), (cost0 - cost1).abs())
            })
            .unzip()
    }
}

fn hard(scores: &[f64]) -> Vec<f64> {
    scores.iter().map(|&s| f64::from(u8::from(s >= 0.5))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub multipliers: Vec<f64>,
    /// Weighted training error of this round's classifier.
    pub error: f64,
    /// Weighted training violation of the mixture so far.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub multipliers: Vec<f64>,
    pub error: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMethod {
    ExponentiatedGradient,
    GridSearch,
}

/// Mixture of base classifiers; a single unit-weight member is deterministic.
#[derive(Debug, Clone)]
pub struct ReductionModel {
    pub method: ReductionMethod,
    pub members: Vec<(SharedClassifier, f64)>,
    pub constraint: FairnessConstraint,
    pub rounds: Vec<RoundLog>,
    pub candidates: Vec<Candidate>,
    pub selected: Option<usize>,
    /// Set when no candidate met the slack and the minimal-violation one was returned.
    pub infeasible: bool,
}

impl ReductionModel {
    pub fn is_deterministic(&self) -> bool {
        self.members.len() == 1 && self.members[0].1 == 1.0
    }
}

impl ScoredClassifier for ReductionModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Mixture
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        self.members.iter().map(|(m, w)| w * m.score_row(row)).sum()
    }

    fn score(&self, x: &Matrix) -> Vec<f64> {
        reduction_score(self, x)
    }
}

pub fn reduction_score(model: &ReductionModel, x: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; x.nrows()];
    for (m, w) in &model.members {
        for (o, s) in out.iter_mut().zip(m.score(x)) {
            *o += w * s;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpGradParams {
    pub max_rounds: usize,
    pub step_size: f64,
    pub bound: f64,
    pub eps: f64,
}

impl Default for ExpGradParams {
    fn default() -> Self {
        Self { max_rounds: 50, step_size: 2.0, bound: 100.0, eps: 0.01 }
    }
}

/// Exponentiated-gradient reduction returning the uniform mixture of all
/// best responses. Round one uses zero multipliers; afterwards each signed
/// constraint's multiplier is `B * exp(theta_j) / (1 + sum_k exp(theta_k))`
/// with `theta_j` accumulating `step_size / B * (signed moment - eps)`.
pub fn expgrad_fit(
    base: &ModelSpec,
    ds: &TabularDataset,
    kind: ConstraintKind,
    p: &ExpGradParams,
) -> Result<ReductionModel> {
    if p.max_rounds == 0 {
        return Err(Error::Parameter("expgrad needs at least one round".into()));
    }
    if !(p.bound > 0.0) || !(p.step_size > 0.0) {
        return Err(Error::Parameter("expgrad bound and step size must be positive".into()));
    }
    let mo = Moments::new(ds)?;
    let cells = Moments::moment_cells(kind);
    // signed constraints: (cell, +1) and (cell, -1)
    let signed: Vec<((usize, Option<usize>), f64)> =
        cells.iter().flat_map(|&c| [(c, 1.0), (c, -1.0)]).collect();
    let x = ds.features();
    let n = ds.len();
    let mut theta = vec![0.0; signed.len()];
    let mut members: Vec<SharedClassifier> = Vec::new();
    let mut mixture_h = vec![0.0; n];
    let mut rounds = Vec::new();

    for round in 1..=p.max_rounds {
        let lambda: Vec<f64> = if round == 1 {
            vec![0.0; signed.len()]
        } else {
            let m = theta.iter().copied().fold(0.0f64, f64::max);
            let ex: Vec<f64> = theta.iter().map(|t| (t - m).exp()).collect();
            let denom = (-m).exp() + ex.iter().sum::<f64>();
            ex.iter().map(|e| p.bound * e / denom).collect()
        };
        let mut extra = vec![0.0; n];
        for (l, (cell, sign)) in lambda.iter().zip(&signed) {
            if *l == 0.0 {
                continue;
            }
            for (i, e) in extra.iter_mut().enumerate() {
                *e += l * sign * mo.moment_grad(i, *cell);
            }
        }
        let (targets, weights) = mo.cost_sensitive(&extra);
        let h_model = base
            .fit_or_constant(x, &targets, &weights)
            .map_err(|e| Error::Mitigation(format!("expgrad round {round}: {e}")))?;
        let h = hard(&h_model.score(x));
        members.push(h_model);

        for (j, (cell, sign)) in signed.iter().enumerate() {
            theta[j] += p.step_size / p.bound * (sign * mo.moment(&h, *cell) - p.eps);
        }
        let t = round as f64;
        for (q, v) in mixture_h.iter_mut().zip(&h) {
            *q += (v - *q) / t;
        }
        rounds.push(RoundLog { round, multipliers: lambda, error: mo.error(&h), violation: mo.violation(&mixture_h, kind) });
    }
    let w = 1.0 / members.len() as f64;
    Ok(ReductionModel {
        method: ReductionMethod::ExponentiatedGradient,
        members: members.into_iter().map(|m| (m, w)).collect(),
        constraint: FairnessConstraint { kind, eps: p.eps },
        rounds,
        candidates: Vec::new(),
        selected: None,
        infeasible: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSearchParams {
    /// Multiplier values; equalized odds uses their Cartesian square (TPR, FPR).
    pub grid: Vec<f64>,
    pub eps: f64,
}

impl Default for GridSearchParams {
    fn default() -> Self {
        Self { grid: (-10..=10).map(|i| f64::from(i) / 5.0).collect(), eps: 0.01 }
    }
}

/// Among candidates with violation within `eps`, the lowest error wins (first
/// in grid order on ties); if none qualifies, the minimal-violation candidate.
pub fn select_candidate(candidates: &[Candidate], eps: f64) -> Option<(usize, bool)> {
    let better = |a: &Candidate, b: &Candidate| a.error < b.error;
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if c.violation <= eps && best.is_none_or(|b| better(c, &candidates[b])) {
            best = Some(i);
        }
    }
    if let Some(i) = best {
        return Some((i, false));
    }
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        let wins = best.is_none_or(|b| {
            let o = &candidates[b];
            c.violation < o.violation || (c.violation == o.violation && c.error < o.error)
        });
        if wins {
            best = Some(i);
        }
    }
    best.map(|i| (i, true))
}

pub fn gridsearch_fit(
    base: &ModelSpec,
    ds: &TabularDataset,
    kind: ConstraintKind,
    p: &GridSearchParams,
) -> Result<ReductionModel> {
    if p.grid.is_empty() {
        return Err(Error::Parameter("grid search needs a nonempty multiplier grid".into()));
    }
    let mo = Moments::new(ds)?;
    let points: Vec<Vec<f64>> = match kind {
        ConstraintKind::DemographicParity => p.grid.iter().map(|&l| vec![l]).collect(),
        ConstraintKind::EqualizedOdds => {
            p.grid.iter().flat_map(|&a| p.grid.iter().map(move |&b| vec![a, b])).collect()
        }
    };
    let x = ds.features();
    let n = ds.len();
    let fitted: Vec<Result<(SharedClassifier, Candidate)>> = points
        .par_iter()
        .map(|lam| {
            let extra: Vec<f64> = (0..n)
                .map(|i| match kind {
                    ConstraintKind::DemographicParity => lam[0] * mo.gap_grad(i, None),
                    ConstraintKind::EqualizedOdds => lam[0] * mo.gap_grad(i, Some(1)) + lam[1] * mo.gap_grad(i, Some(0)),
                })
                .collect();
            let (targets, weights) = mo.cost_sensitive(&extra);
            let m = base
                .fit_or_constant(x, &targets, &weights)
                .map_err(|e| Error::Mitigation(format!("grid search at {lam:?}: {e}")))?;
            let h = hard(&m.score(x));
            let cand = Candidate { multipliers: lam.clone(), error: mo.error(&h), violation: mo.violation(&h, kind) };
            Ok((m, cand))
        })
        .collect();
    let mut models = Vec::with_capacity(fitted.len());
    let mut candidates = Vec::with_capacity(fitted.len());
    for r in fitted {
        let (m, c) = r?;
        models.push(m);
        candidates.push(c);
    }
    let (idx, infeasible) = select_candidate(&candidates, p.eps).expect("grid is nonempty");
    Ok(ReductionModel {
        method: ReductionMethod::GridSearch,
        members: vec![(models.swap_remove(idx), 1.0)],
        constraint: FairnessConstraint { kind, eps: p.eps },
        rounds: Vec::new(),
        candidates,
        selected: Some(idx),
        infeasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{standardize, synth_biased};
    use crate::models::{ConstantModel, LogisticParams};
    use std::sync::Arc;

    fn logistic() -> ModelSpec {
        ModelSpec::LogisticRegression(LogisticParams::default())
    }

    fn biased(n: usize, gap: f64, seed: u64) -> TabularDataset {
        let ds = synth_biased(n, 3, gap, 1.0, seed).unwrap().with_protected_feature("group");
        standardize(&ds, &[]).unwrap().0
    }

    #[test]
    fn violation_examples() {
        // SPD -0.2
        let preds = [1, 1, 0, 0, 0, 1, 1, 1, 0, 0];
        let groups = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let labels = [1; 10];
        let v = constraint_violation(&preds, &labels, &groups, ConstraintKind::DemographicParity).unwrap();
        assert!((v - 0.2).abs() < 1e-12);
        // unpriv TPR 0.6 FPR 0.2; priv TPR 0.5 FPR 0.5
        let mut p = Vec::new();
        let mut y = Vec::new();
        let mut g = Vec::new();
        for (grp, lab, fav, count) in [(0u8, 1u8, 6, 10), (0, 0, 2, 10), (1, 1, 5, 10), (1, 0, 5, 10)] {
            for i in 0..count {
                p.push(u8::from(i < fav));
                y.push(lab);
                g.push(grp);
            }
        }
        let v = constraint_violation(&p, &y, &g, ConstraintKind::EqualizedOdds).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
        let sym = constraint_violation(&[1, 0, 1, 0], &[1, 0, 1, 0], &[0, 0, 1, 1], ConstraintKind::EqualizedOdds);
        assert_eq!(sym.unwrap(), 0.0);
    }

    #[test]
    fn weighted_violation_agrees_with_unit_weight_metric() {
        let ds = biased(400, -0.3, 1);
        let mo = Moments::new(&ds).unwrap();
        let preds: Vec<u8> = ds.features().rows_iter().map(|r| u8::from(r[0] > 0.1)).collect();
        let h: Vec<f64> = preds.iter().map(|&p| f64::from(p)).collect();
        for kind in [ConstraintKind::DemographicParity, ConstraintKind::EqualizedOdds] {
            let a = mo.violation(&h, kind);
            let b = constraint_violation(&preds, ds.labels(), ds.protected(), kind).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn one_round_expgrad_is_the_unconstrained_fit() {
        let ds = biased(500, -0.3, 2);
        let ds = crate::mitigation::pre::reweigh(&ds).unwrap().dataset;
        let p = ExpGradParams { max_rounds: 1, ..Default::default() };
        let m = expgrad_fit(&logistic(), &ds, ConstraintKind::DemographicParity, &p).unwrap();
        let base = logistic().fit_weighted(ds.features(), ds.labels(), ds.weights()).unwrap();
        assert_eq!(m.score(ds.features()), base.score(ds.features()));
        assert!(m.rounds[0].multipliers.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn expgrad_multipliers_stay_bounded() {
        let ds = biased(400, -0.4, 3);
        let p = ExpGradParams { max_rounds: 15, ..Default::default() };
        let m = expgrad_fit(&logistic(), &ds, ConstraintKind::EqualizedOdds, &p).unwrap();
        for r in &m.rounds {
            assert!(r.multipliers.iter().all(|&l| (0.0..=p.bound).contains(&l)));
            assert!(r.multipliers.iter().sum::<f64>() <= p.bound * (1.0 + 1e-12));
        }
        let total: f64 = m.members.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expgrad_reduces_parity_gap() {
        let ds = biased(1000, -0.3, 4);
        let p = ExpGradParams { max_rounds: 30, ..Default::default() };
        let m = expgrad_fit(&logistic(), &ds, ConstraintKind::DemographicParity, &p).unwrap();
        let base = logistic().fit_weighted(ds.features(), ds.labels(), ds.weights()).unwrap();
        let mo = Moments::new(&ds).unwrap();
        let base_h = hard(&base.score(ds.features()));
        let mix_h: Vec<f64> = {
            let mut acc = vec![0.0; ds.len()];
            for (mm, w) in &m.members {
                for (a, v) in acc.iter_mut().zip(hard(&mm.score(ds.features()))) {
                    *a += w * v;
                }
            }
            acc
        };
        let before = mo.violation(&base_h, ConstraintKind::DemographicParity);
        let after = mo.violation(&mix_h, ConstraintKind::DemographicParity);
        assert!(after < before, "{after} vs {before}");
    }

    #[test]
    fn expgrad_on_fair_data_keeps_error() {
        let ds = biased(1000, 0.0, 5);
        let base = logistic().fit_weighted(ds.features(), ds.labels(), ds.weights()).unwrap();
        let mo = Moments::new(&ds).unwrap();
        let base_h = hard(&base.score(ds.features()));
        assert!(mo.violation(&base_h, ConstraintKind::DemographicParity) < 0.05);
        let m = expgrad_fit(&logistic(), &ds, ConstraintKind::DemographicParity, &ExpGradParams::default()).unwrap();
        let mut mix = vec![0.0; ds.len()];
        for (mm, w) in &m.members {
            for (a, v) in mix.iter_mut().zip(hard(&mm.score(ds.features()))) {
                *a += w * v;
            }
        }
        assert!((mo.error(&mix) - mo.error(&base_h)).abs() <= 0.02);
    }

    #[test]
    fn gridsearch_zero_multiplier_is_unconstrained_and_selection_is_exhaustive() {
        let ds = biased(600, -0.3, 6);
        let p = GridSearchParams::default();
        let m = gridsearch_fit(&logistic(), &ds, ConstraintKind::DemographicParity, &p).unwrap();
        assert_eq!(m.candidates.len(), 21);
        let zero = m.candidates.iter().position(|c| c.multipliers[0].abs() < 1e-12).unwrap();
        let base = logistic().fit_weighted(ds.features(), ds.labels(), ds.weights()).unwrap();
        let mo = Moments::new(&ds).unwrap();
        let h = hard(&base.score(ds.features()));
        assert_eq!(m.candidates[zero].error, mo.error(&h));

        let sel = m.selected.unwrap();
        let feasible: Vec<&Candidate> = m.candidates.iter().filter(|c| c.violation <= p.eps).collect();
        if feasible.is_empty() {
            assert!(m.infeasible);
            assert!(m.candidates.iter().all(|c| c.violation >= m.candidates[sel].violation));
        } else {
            assert!(!m.infeasible);
            assert!(feasible.iter().all(|c| c.error >= m.candidates[sel].error));
        }
        assert!(m.is_deterministic());
    }

    #[test]
    fn degenerate_grid_flags_fallback() {
        let ds = biased(600, -0.4, 7);
        let p = GridSearchParams { grid: vec![0.0], eps: 0.01 };
        let m = gridsearch_fit(&logistic(), &ds, ConstraintKind::DemographicParity, &p).unwrap();
        assert!(m.infeasible);
        assert_eq!(m.selected, Some(0));
        let empty = GridSearchParams { grid: vec![], eps: 0.01 };
        assert!(matches!(
            gridsearch_fit(&logistic(), &ds, ConstraintKind::DemographicParity, &empty),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn equalized_odds_grid_is_two_dimensional() {
        let ds = biased(300, -0.3, 8);
        let p = GridSearchParams { grid: vec![-1.0, 0.0, 1.0], eps: 0.05 };
        let m = gridsearch_fit(&logistic(), &ds, ConstraintKind::EqualizedOdds, &p).unwrap();
        assert_eq!(m.candidates.len(), 9);
    }

    #[test]
    fn mixture_scores() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]);
        let mk = |v: f64| -> SharedClassifier { Arc::new(ConstantModel { value: v }) };
        let model = |members: Vec<(SharedClassifier, f64)>| ReductionModel {
            method: ReductionMethod::ExponentiatedGradient,
            members,
            constraint: FairnessConstraint::new(ConstraintKind::DemographicParity),
            rounds: vec![],
            candidates: vec![],
            selected: None,
            infeasible: false,
        };
        assert_eq!(reduction_score(&model(vec![(mk(0.3), 1.0)]), &x), vec![0.3, 0.3]);
        let s = reduction_score(&model(vec![(mk(0.2), 0.5), (mk(0.6), 0.5)]), &x);
        assert!(s.iter().all(|v| (v - 0.4).abs() < 1e-15));
        assert_eq!(reduction_score(&model(vec![(mk(0.2), 1.0), (mk(0.6), 0.0)]), &x), vec![0.2, 0.2]);
    }
}
