//! Post-processing of scores fitted on validation data: reject-option band,
//! calibrated equalized odds and group-specific thresholds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{PRIVILEGED, UNPRIVILEGED};
use crate::error::{Error, Result};
use crate::metrics;
use crate::mitigation::inproc::ConstraintKind;
use crate::thresholding::percent_grid;

fn check_inputs(scores: &[f64], labels: &[u8], groups: &[u8]) -> Result<()> {
    if scores.len() != labels.len() || labels.len() != groups.len() {
        return Err(Error::Mitigation("scores, labels and groups differ in length".into()));
    }
    for g in [PRIVILEGED, UNPRIVILEGED] {
        if !groups.contains(&g) {
            return Err(Error::Mitigation(format!("group {g} absent from validation data")));
        }
    }
    for y in [0, 1] {
        if !labels.contains(&y) {
            return Err(Error::Mitigation(format!("label {y} absent from validation data")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RocParams {
    pub thresholds: Vec<f64>,
    pub margins: Vec<f64>,
    pub di_low: f64,
    pub di_high: f64,
}

impl Default for RocParams {
    fn default() -> Self {
        Self { thresholds: percent_grid(1, 99), margins: percent_grid(1, 25), di_low: 0.8, di_high: 1.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocBand {
    pub threshold: f64,
    pub margin: f64,
    pub di_low: f64,
    pub di_high: f64,
    /// Validation DI and balanced accuracy at the chosen pair.
    #[serde(with = "crate::metrics::ratio_serde")]
    pub di: f64,
    pub balanced_accuracy: f64,
    pub infeasible: bool,
}

impl RocBand {
    pub fn in_band(&self, score: f64) -> bool {
        score >= self.threshold - self.margin && score <= self.threshold + self.margin
    }

    pub fn predict(&self, score: f64, group: u8) -> u8 {
        if self.in_band(score) {
            u8::from(group == UNPRIVILEGED)
        } else {
            u8::from(score >= self.threshold)
        }
    }

    /// Score clamped to the band decision inside the band, unchanged outside.
    pub fn relaxed_score(&self, score: f64, group: u8) -> f64 {
        if self.in_band(score) {
            f64::from(self.predict(score, group))
        } else {
            score
        }
    }
}

pub fn roc_apply(scores: &[f64], groups: &[u8], band: &RocBand) -> Vec<u8> {
    scores.iter().zip(groups).map(|(&s, &g)| band.predict(s, g)).collect()
}

/// Exhaustive band search. Qualifying pairs have validation DI within the
/// bounds; the best balanced accuracy wins, ties going to the smallest margin
/// and then the smallest threshold. Without a qualifying pair the DI closest
/// to 1 is returned and flagged.
pub fn roc_fit(scores: &[f64], labels: &[u8], groups: &[u8], p: &RocParams) -> Result<RocBand> {
    if p.thresholds.is_empty() || p.margins.is_empty() {
        return Err(Error::Parameter("ROC needs nonempty threshold and margin grids".into()));
    }
    if !(p.di_low <= p.di_high) {
        return Err(Error::Parameter("ROC DI bounds must satisfy low <= high".into()));
    }
    for &m in &p.margins {
        if !(0.0..0.5).contains(&m) {
            return Err(Error::Parameter(format!("ROC margin {m} outside [0, 0.5)")));
        }
    }
    for &t in &p.thresholds {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Parameter(format!("ROC threshold {t} outside [0, 1]")));
        }
    }
    check_inputs(scores, labels, groups)?;
    let mut margins = p.margins.clone();
    margins.sort_by(f64::total_cmp);
    let mut thresholds = p.thresholds.clone();
    thresholds.sort_by(f64::total_cmp);
    let pairs: Vec<(f64, f64)> = margins.iter().flat_map(|&m| thresholds.iter().map(move |&t| (m, t))).collect();
    let evaluated: Vec<RocBand> = pairs
        .par_iter()
        .map(|&(margin, threshold)| {
            let mut band = RocBand {
                threshold,
                margin,
                di_low: p.di_low,
                di_high: p.di_high,
                di: 0.0,
                balanced_accuracy: 0.0,
                infeasible: false,
            };
            let preds = roc_apply(scores, groups, &band);
            band.di = metrics::di(&preds, groups)?;
            band.balanced_accuracy = metrics::balanced_accuracy(&preds, labels)?;
            Ok(band)
        })
        .collect::<Result<_>>()?;

    let qualifies = |b: &RocBand| b.di >= p.di_low && b.di <= p.di_high;
    let mut best: Option<&RocBand> = None;
    for b in evaluated.iter().filter(|b| qualifies(b)) {
        if best.is_none_or(|o| b.balanced_accuracy > o.balanced_accuracy) {
            best = Some(b);
        }
    }
    if let Some(b) = best {
        return Ok(*b);
    }
    let dist = |b: &RocBand| (b.di - 1.0).abs();
    let mut best = &evaluated[0];
    for b in &evaluated[1..] {
        if dist(b) < dist(best) {
            best = b;
        }
    }
    Ok(RocBand { infeasible: true, ..*best })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    Fpr,
    Fnr,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CeoParams {
    pub cost: CostMode,
    /// Weight of the false-negative cost in `weighted` mode; false positives get the rest.
    pub fnr_weight: f64,
    /// Largest accepted absolute cost difference between groups.
    pub cost_tol: f64,
    /// Per-group gap between mean score and base rate above which a calibration warning is raised.
    pub calibration_tol: f64,
}

impl Default for CeoParams {
    fn default() -> Self {
        Self { cost: CostMode::Weighted, fnr_weight: 0.5, cost_tol: 0.01, calibration_tol: 0.1 }
    }
}

/// Derandomized calibrated equalized odds. For group `g`, scores within
/// `radius[g]` of the group base rate are replaced by that base rate; the
/// radius realizes mixing probability `p[g]` on validation data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeoMix {
    /// Indexed by group (`0` unprivileged, `1` privileged).
    pub p: [f64; 2],
    pub base_rates: [f64; 2],
    pub radius: [Option<f64>; 2],
    pub cost: CostMode,
    pub fnr_weight: f64,
    /// Decision threshold inherited from the wrapped model.
    pub threshold: f64,
    /// Validation cost difference (unprivileged minus privileged) and error at the chosen mix.
    pub cost_gap: f64,
    pub error: f64,
    pub calibration_warning: bool,
}

impl CeoMix {
    pub fn p_unpriv(&self) -> f64 {
        self.p[UNPRIVILEGED as usize]
    }

    pub fn p_priv(&self) -> f64 {
        self.p[PRIVILEGED as usize]
    }

    pub fn mixed_score(&self, score: f64, group: u8) -> f64 {
        let g = group as usize;
        match self.radius[g] {
            Some(r) if (score - self.base_rates[g]).abs() <= r => self.base_rates[g],
            _ => score,
        }
    }

    pub fn predict(&self, score: f64, group: u8) -> u8 {
        u8::from(self.mixed_score(score, group) >= self.threshold)
    }
}

pub fn ceodds_apply(scores: &[f64], groups: &[u8], mix: &CeoMix) -> Vec<u8> {
    scores.iter().zip(groups).map(|(&s, &g)| mix.predict(s, g)).collect()
}

/// Generalized false-positive and false-negative costs of soft scores.
pub fn generalized_costs(scores: &[f64], labels: &[u8]) -> (Option<f64>, Option<f64>) {
    let (mut fp, mut nn, mut fneg, mut np) = (0.0, 0usize, 0.0, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        if y == 1 {
            fneg += 1.0 - s;
            np += 1;
        } else {
            fp += s;
            nn += 1;
        }
    }
    ((nn > 0).then(|| fp / nn as f64), (np > 0).then(|| fneg / np as f64))
}

fn mode_cost(fpr: f64, fnr: f64, mode: CostMode, fnr_weight: f64) -> f64 {
    match mode {
        CostMode::Fpr => fpr,
        CostMode::Fnr => fnr,
        CostMode::Weighted => (1.0 - fnr_weight) * fpr + fnr_weight * fnr,
    }
}

/// Radius flagging the `round(p * n)` distances closest to zero, `None` for no flags.
fn radius_for(sorted_dist: &[f64], p: f64) -> Option<f64> {
    let k = (p * sorted_dist.len() as f64).round() as usize;
    (k > 0).then(|| sorted_dist[k.min(sorted_dist.len()) - 1])
}

struct GroupEval {
    radius: Option<f64>,
    cost: f64,
    errors: usize,
}

pub fn ceodds_fit(scores: &[f64], labels: &[u8], groups: &[u8], threshold: f64, p: &CeoParams) -> Result<CeoMix> {
    check_inputs(scores, labels, groups)?;
    if !(0.0..=1.0).contains(&p.fnr_weight) {
        return Err(Error::Parameter("CEOdds fnr_weight outside [0, 1]".into()));
    }
    if !(p.cost_tol >= 0.0) {
        return Err(Error::Parameter("CEOdds cost_tol must be nonnegative".into()));
    }
    let grid = percent_grid(0, 100);
    let mut base_rates = [0.0; 2];
    let mut calibration_warning = false;
    let mut per_group: Vec<Vec<GroupEval>> = Vec::with_capacity(2);
    for g in 0..2u8 {
        let idx: Vec<usize> = (0..scores.len()).filter(|&i| groups[i] == g).collect();
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        let n = s.len() as f64;
        let mu = y.iter().filter(|&&v| v == 1).count() as f64 / n;
        base_rates[g as usize] = mu;
        if (s.iter().sum::<f64>() / n - mu).abs() > p.calibration_tol {
            calibration_warning = true;
        }
        let needs = match p.cost {
            CostMode::Fpr => [0].as_slice(),
            CostMode::Fnr => &[1],
            CostMode::Weighted => &[0, 1],
        };
        for &lab in needs {
            if !y.contains(&lab) {
                return Err(Error::Fit(format!("CEOdds: group {g} has no validation instances with label {lab}")));
            }
        }
        let mut dist: Vec<f64> = s.iter().map(|v| (v - mu).abs()).collect();
        dist.sort_by(f64::total_cmp);
        let evals = grid
            .iter()
            .map(|&pg| {
                let radius = radius_for(&dist, pg);
                let mixed: Vec<f64> = s
                    .iter()
                    .map(|&v| match radius {
                        Some(r) if (v - mu).abs() <= r => mu,
                        _ => v,
                    })
                    .collect();
                let (fpr, fnr) = generalized_costs(&mixed, &y);
                let cost = mode_cost(fpr.unwrap_or(0.0), fnr.unwrap_or(0.0), p.cost, p.fnr_weight);
                let errors = mixed.iter().zip(&y).filter(|(&m, &yy)| u8::from(m >= threshold) != yy).count();
                GroupEval { radius, cost, errors }
            })
            .collect();
        per_group.push(evals);
    }
    let (u, pr) = (UNPRIVILEGED as usize, PRIVILEGED as usize);
    let n = scores.len() as f64;
    let mut best: Option<(usize, usize, f64, usize)> = None;
    for (ip, ep) in per_group[pr].iter().enumerate() {
        for (iu, eu) in per_group[u].iter().enumerate() {
            let gap = eu.cost - ep.cost;
            if gap.abs() > p.cost_tol {
                continue;
            }
            let errors = eu.errors + ep.errors;
            if best.is_none_or(|(_, _, _, e)| errors < e) {
                best = Some((ip, iu, gap, errors));
            }
        }
    }
    let (ip, iu, gap, errors) = best.ok_or_else(|| {
        Error::Fit(format!(
            "CEOdds: no mixing rates equalize the {:?} cost within {}",
            p.cost, p.cost_tol
        ))
    })?;
    let mut mix_p = [0.0; 2];
    mix_p[pr] = grid[ip];
    mix_p[u] = grid[iu];
    let mut radius = [None; 2];
    radius[pr] = per_group[pr][ip].radius;
    radius[u] = per_group[u][iu].radius;
    Ok(CeoMix {
        p: mix_p,
        base_rates,
        radius,
        cost: p.cost,
        fnr_weight: p.fnr_weight,
        threshold,
        cost_gap: gap,
        error: errors as f64 / n,
        calibration_warning,
    })
}

/// Mix at fixed per-group rates `p` (indexed by group), with radii, cost gap
/// and error measured on the given validation scores.
pub fn ceodds_mix_at(
    scores: &[f64],
    labels: &[u8],
    groups: &[u8],
    threshold: f64,
    p: [f64; 2],
    params: &CeoParams,
) -> Result<CeoMix> {
    check_inputs(scores, labels, groups)?;
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Parameter("CEOdds mixing rates must lie in [0, 1]".into()));
    }
    let mut mix = CeoMix {
        p,
        base_rates: [0.0; 2],
        radius: [None; 2],
        cost: params.cost,
        fnr_weight: params.fnr_weight,
        threshold,
        cost_gap: 0.0,
        error: 0.0,
        calibration_warning: false,
    };
    let mut costs = [0.0; 2];
    let mut errors = 0usize;
    for g in 0..2u8 {
        let idx: Vec<usize> = (0..scores.len()).filter(|&i| groups[i] == g).collect();
        let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        let n = idx.len() as f64;
        let mu = y.iter().filter(|&&v| v == 1).count() as f64 / n;
        let mut dist: Vec<f64> = idx.iter().map(|&i| (scores[i] - mu).abs()).collect();
        dist.sort_by(f64::total_cmp);
        mix.base_rates[g as usize] = mu;
        mix.radius[g as usize] = radius_for(&dist, p[g as usize]);
        if (idx.iter().map(|&i| scores[i]).sum::<f64>() / n - mu).abs() > params.calibration_tol {
            mix.calibration_warning = true;
        }
        let mixed: Vec<f64> = idx.iter().map(|&i| mix.mixed_score(scores[i], g)).collect();
        let (fpr, fnr) = generalized_costs(&mixed, &y);
        costs[g as usize] = mode_cost(fpr.unwrap_or(0.0), fnr.unwrap_or(0.0), params.cost, params.fnr_weight);
        errors += mixed.iter().zip(&y).filter(|(&m, &yy)| u8::from(m >= threshold) != yy).count();
    }
    mix.cost_gap = costs[UNPRIVILEGED as usize] - costs[PRIVILEGED as usize];
    mix.error = errors as f64 / scores.len() as f64;
    Ok(mix)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThreshOptParams {
    pub constraint: ConstraintKind,
    pub tol: f64,
}

impl Default for ThreshOptParams {
    fn default() -> Self {
        Self { constraint: ConstraintKind::DemographicParity, tol: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupThresholds {
    pub t_priv: f64,
    pub t_unpriv: f64,
    pub constraint: ConstraintKind,
    pub tol: f64,
    /// Validation constraint gap and balanced accuracy at the chosen pair.
    pub gap: f64,
    pub balanced_accuracy: f64,
    pub infeasible: bool,
}

impl GroupThresholds {
    pub fn threshold_for(&self, group: u8) -> f64 {
        if group == PRIVILEGED {
            self.t_priv
        } else {
            self.t_unpriv
        }
    }

    pub fn predict(&self, score: f64, group: u8) -> u8 {
        u8::from(score >= self.threshold_for(group))
    }

    /// Score clamped to the group decision where it differs from `score >= 0.5`.
    pub fn relaxed_score(&self, score: f64, group: u8) -> f64 {
        let d = self.predict(score, group);
        if d == u8::from(score >= 0.5) {
            score
        } else {
            f64::from(d)
        }
    }
}

pub fn threshopt_apply(scores: &[f64], groups: &[u8], t: &GroupThresholds) -> Vec<u8> {
    scores.iter().zip(groups).map(|(&s, &g)| t.predict(s, g)).collect()
}

/// Per-group counts of favorable predictions among positives and negatives at each grid threshold.
struct GroupCounts {
    pos: usize,
    neg: usize,
    tp: Vec<usize>,
    fp: Vec<usize>,
}

impl GroupCounts {
    fn new(scores: &[f64], labels: &[u8], groups: &[u8], g: u8, grid: &[f64]) -> Self {
        let mut c = GroupCounts { pos: 0, neg: 0, tp: vec![0; grid.len()], fp: vec![0; grid.len()] };
        for i in (0..scores.len()).filter(|&i| groups[i] == g) {
            if labels[i] == 1 {
                c.pos += 1;
            } else {
                c.neg += 1;
            }
            for (k, &t) in grid.iter().enumerate() {
                if scores[i] >= t {
                    if labels[i] == 1 {
                        c.tp[k] += 1;
                    } else {
                        c.fp[k] += 1;
                    }
                }
            }
        }
        c
    }

    fn selection(&self, k: usize) -> f64 {
        (self.tp[k] + self.fp[k]) as f64 / (self.pos + self.neg) as f64
    }

    fn tpr(&self, k: usize) -> f64 {
        self.tp[k] as f64 / self.pos as f64
    }

    fn fpr(&self, k: usize) -> f64 {
        self.fp[k] as f64 / self.neg as f64
    }
}

/// Exhaustive search over `(t_priv, t_unpriv)` on the percent grid.
pub fn threshopt_fit(scores: &[f64], labels: &[u8], groups: &[u8], p: &ThreshOptParams) -> Result<GroupThresholds> {
    threshopt_fit_grid(scores, labels, groups, p, &percent_grid(1, 99))
}

pub fn threshopt_fit_grid(
    scores: &[f64],
    labels: &[u8],
    groups: &[u8],
    p: &ThreshOptParams,
    grid: &[f64],
) -> Result<GroupThresholds> {
    if grid.is_empty() {
        return Err(Error::Parameter("ThreshOptim needs a nonempty threshold grid".into()));
    }
    if !(p.tol >= 0.0) {
        return Err(Error::Parameter("ThreshOptim tol must be nonnegative".into()));
    }
    check_inputs(scores, labels, groups)?;
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let cu = GroupCounts::new(scores, labels, groups, UNPRIVILEGED, &grid);
    let cp = GroupCounts::new(scores, labels, groups, PRIVILEGED, &grid);
    if p.constraint == ConstraintKind::EqualizedOdds && (cu.pos == 0 || cu.neg == 0 || cp.pos == 0 || cp.neg == 0) {
        return Err(Error::Mitigation("equalized odds needs both labels in both groups".into()));
    }
    let (pos, neg) = ((cu.pos + cp.pos) as f64, (cu.neg + cp.neg) as f64);
    let eval = |kp: usize, ku: usize| -> (f64, f64) {
        let tp = (cu.tp[ku] + cp.tp[kp]) as f64;
        let fp = (cu.fp[ku] + cp.fp[kp]) as f64;
        let ba = 0.5 * (tp / pos + (neg - fp) / neg);
        let gap = match p.constraint {
            ConstraintKind::DemographicParity => (cu.selection(ku) - cp.selection(kp)).abs(),
            ConstraintKind::EqualizedOdds => {
                (cu.tpr(ku) - cp.tpr(kp)).abs().max((cu.fpr(ku) - cp.fpr(kp)).abs())
            }
        };
        (ba, gap)
    };
    // t_unpriv outer so strict improvement keeps the smaller t_unpriv, then t_priv
    let mut feasible: Option<(usize, usize, f64, f64)> = None;
    let mut closest: Option<(usize, usize, f64, f64)> = None;
    for ku in 0..grid.len() {
        for kp in 0..grid.len() {
            let (ba, gap) = eval(kp, ku);
            if gap <= p.tol && feasible.is_none_or(|(_, _, b, _)| ba > b) {
                feasible = Some((kp, ku, ba, gap));
            }
            if closest.is_none_or(|(_, _, _, g)| gap < g) {
                closest = Some((kp, ku, ba, gap));
            }
        }
    }
    let (infeasible, (kp, ku, ba, gap)) = match feasible {
        Some(f) => (false, f),
        None => (true, closest.expect("grid is nonempty")),
    };
    Ok(GroupThresholds {
        t_priv: grid[kp],
        t_unpriv: grid[ku],
        constraint: p.constraint,
        tol: p.tol,
        gap,
        balanced_accuracy: ba,
        infeasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_valid(n: usize, seed: u64, shift: f64) -> (Vec<f64>, Vec<u8>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Vec::new();
        let mut y = Vec::new();
        let mut g = Vec::new();
        for i in 0..n {
            let grp = u8::from(i % 2 == 0);
            let lab = u8::from(rng.random::<f64>() < 0.5);
            let base = if lab == 1 { 0.65 } else { 0.35 } + if grp == 1 { shift } else { 0.0 };
            s.push((base + 0.2 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0));
            y.push(lab);
            g.push(grp);
        }
        (s, y, g)
    }

    fn band(t: f64, m: f64) -> RocBand {
        RocBand { threshold: t, margin: m, di_low: 0.8, di_high: 1.25, di: 1.0, balanced_accuracy: 0.0, infeasible: false }
    }

    #[test]
    fn band_rule_examples() {
        let b = band(0.5, 0.1);
        assert_eq!(b.predict(0.45, UNPRIVILEGED), 1);
        assert_eq!(b.predict(0.55, PRIVILEGED), 0);
        assert_eq!(b.predict(0.7, PRIVILEGED), 1);
        assert_eq!(b.predict(0.7, UNPRIVILEGED), 1);
        assert_eq!(b.predict(0.2, UNPRIVILEGED), 0);
        assert_eq!(b.relaxed_score(0.45, UNPRIVILEGED), 1.0);
        assert_eq!(b.relaxed_score(0.3, UNPRIVILEGED), 0.3);
    }

    #[test]
    fn roc_selection_matches_brute_force() {
        let (s, y, g) = random_valid(400, 1, 0.15);
        let p = RocParams::default();
        let got = roc_fit(&s, &y, &g, &p).unwrap();
        // independent re-scan in (m, t) order with explicit tie rules
        let mut best: Option<(f64, f64, f64)> = None;
        for mi in 1..=25 {
            for ti in 1..=99 {
                let (t, m) = (f64::from(ti) / 100.0, f64::from(mi) / 100.0);
                let preds: Vec<u8> = s
                    .iter()
                    .zip(&g)
                    .map(|(&sc, &gr)| {
                        if (t - m..=t + m).contains(&sc) {
                            u8::from(gr == 0)
                        } else {
                            u8::from(sc >= t)
                        }
                    })
                    .collect();
                let rate = |grp: u8| {
                    let idx: Vec<usize> = (0..preds.len()).filter(|&i| g[i] == grp).collect();
                    idx.iter().filter(|&&i| preds[i] == 1).count() as f64 / idx.len() as f64
                };
                let di = rate(0) / rate(1);
                if !(0.8..=1.25).contains(&di) {
                    continue;
                }
                let tpr = (0..preds.len()).filter(|&i| y[i] == 1 && preds[i] == 1).count() as f64
                    / y.iter().filter(|&&v| v == 1).count() as f64;
                let tnr = (0..preds.len()).filter(|&i| y[i] == 0 && preds[i] == 0).count() as f64
                    / y.iter().filter(|&&v| v == 0).count() as f64;
                let ba = (tpr + tnr) / 2.0;
                if best.is_none_or(|(b, _, _)| ba > b) {
                    best = Some((ba, t, m));
                }
            }
        }
        let (ba, t, m) = best.unwrap();
        assert!(!got.infeasible);
        assert_eq!((got.threshold, got.margin), (t, m));
        assert!((got.balanced_accuracy - ba).abs() < 1e-12);
    }

    #[test]
    fn vacuous_band_picks_tie_break_pair() {
        // scores far from every band: predictions are s >= t for all pairs with t in (0.3, 0.7)
        let s = vec![0.0, 1.0, 0.0, 1.0];
        let y = vec![0, 1, 0, 1];
        let g = vec![0, 0, 1, 1];
        let p = RocParams { thresholds: vec![0.4, 0.5, 0.6], margins: vec![0.01, 0.1, 0.2], ..Default::default() };
        let b = roc_fit(&s, &y, &g, &p).unwrap();
        assert_eq!((b.threshold, b.margin), (0.4, 0.01));
        assert_eq!(b.di, 1.0);
    }

    #[test]
    fn roc_infeasible_flag_and_parameter_errors() {
        // privileged always scores 1, unprivileged always 0: no band reaches DI bounds
        let s = vec![0.0, 0.0, 1.0, 1.0];
        let y = vec![0, 1, 0, 1];
        let g = vec![0, 0, 1, 1];
        let p = RocParams { thresholds: vec![0.5], margins: vec![0.1], ..Default::default() };
        let b = roc_fit(&s, &y, &g, &p).unwrap();
        assert!(b.infeasible);
        let bad = RocParams { margins: vec![], ..Default::default() };
        assert!(matches!(roc_fit(&s, &y, &g, &bad), Err(Error::Parameter(_))));
        let bad = RocParams { margins: vec![0.5], ..Default::default() };
        assert!(matches!(roc_fit(&s, &y, &g, &bad), Err(Error::Parameter(_))));
    }

    #[test]
    fn roc_moves_di_toward_one() {
        let (s, y, g) = random_valid(600, 2, 0.2);
        let base: Vec<u8> = s.iter().map(|&v| u8::from(v >= 0.5)).collect();
        let before = metrics::di(&base, &g).unwrap();
        let b = roc_fit(&s, &y, &g, &RocParams::default()).unwrap();
        let after = metrics::di(&roc_apply(&s, &g, &b), &g).unwrap();
        assert!((after - 1.0).abs() < (before - 1.0).abs());
    }

    fn mix(p: [f64; 2], s: &[f64], y: &[u8], g: &[u8]) -> CeoMix {
        // direct construction through the fitter's radius rule
        let mut out = CeoMix {
            p,
            base_rates: [0.0; 2],
            radius: [None; 2],
            cost: CostMode::Fpr,
            fnr_weight: 0.5,
            threshold: 0.5,
            cost_gap: 0.0,
            error: 0.0,
            calibration_warning: false,
        };
        for grp in 0..2u8 {
            let idx: Vec<usize> = (0..s.len()).filter(|&i| g[i] == grp).collect();
            let mu = idx.iter().filter(|&&i| y[i] == 1).count() as f64 / idx.len() as f64;
            let mut d: Vec<f64> = idx.iter().map(|&i| (s[i] - mu).abs()).collect();
            d.sort_by(f64::total_cmp);
            out.base_rates[grp as usize] = mu;
            out.radius[grp as usize] = radius_for(&d, p[grp as usize]);
        }
        out
    }

    #[test]
    fn ceodds_endpoints() {
        let (s, y, g) = random_valid(200, 3, 0.0);
        let m0 = mix([0.0, 0.0], &s, &y, &g);
        let mixed: Vec<f64> = s.iter().zip(&g).map(|(&v, &gr)| m0.mixed_score(v, gr)).collect();
        assert_eq!(mixed, s);
        let base: Vec<u8> = s.iter().map(|&v| u8::from(v >= 0.5)).collect();
        assert_eq!(ceodds_apply(&s, &g, &m0), base);

        let m1 = mix([1.0, 0.0], &s, &y, &g);
        for (i, (&v, &gr)) in s.iter().zip(&g).enumerate() {
            let out = m1.mixed_score(v, gr);
            if gr == 0 {
                assert_eq!(out, m1.base_rates[0], "row {i}");
            } else {
                assert_eq!(out, v);
            }
        }
    }

    #[test]
    fn mix_at_fitted_rates_reproduces_fit() {
        let (s, y, g) = random_valid(300, 8, 0.1);
        let p = CeoParams { cost_tol: 0.05, ..Default::default() };
        let fit = ceodds_fit(&s, &y, &g, 0.5, &p).unwrap();
        assert_eq!(ceodds_mix_at(&s, &y, &g, 0.5, fit.p, &p).unwrap(), fit);
        let (a, b) = (ceodds_mix_at(&s, &y, &g, 0.5, [0.0, 0.0], &p).unwrap(), mix([0.0, 0.0], &s, &y, &g));
        assert_eq!((a.radius, a.base_rates), (b.radius, b.base_rates));
        assert!(ceodds_mix_at(&s, &y, &g, 0.5, [1.5, 0.0], &p).is_err());
    }

    #[test]
    fn ceodds_keeps_equal_cost_groups_unmixed() {
        // mirrored groups with perfectly separated scores: zero error and equal costs at p = (0, 0)
        let s = vec![0.1, 0.2, 0.8, 0.9, 0.1, 0.2, 0.8, 0.9];
        let y = vec![0, 0, 1, 1, 0, 0, 1, 1];
        let g = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let m = ceodds_fit(&s, &y, &g, 0.5, &CeoParams::default()).unwrap();
        assert_eq!(m.p, [0.0, 0.0]);
        assert_eq!(m.error, 0.0);
        assert!(!m.calibration_warning);
    }

    #[test]
    fn ceodds_selection_is_exhaustive_minimum() {
        let (s, y, g) = random_valid(300, 4, 0.1);
        let params = CeoParams { cost: CostMode::Fpr, cost_tol: 0.02, ..Default::default() };
        let m = ceodds_fit(&s, &y, &g, 0.5, &params).unwrap();
        let mut best = usize::MAX;
        for ip in 0..=100 {
            for iu in 0..=100 {
                let cand = mix([f64::from(iu) / 100.0, f64::from(ip) / 100.0], &s, &y, &g);
                let mixed: Vec<f64> = s.iter().zip(&g).map(|(&v, &gr)| cand.mixed_score(v, gr)).collect();
                let cost = |grp: u8| {
                    let idx: Vec<usize> = (0..s.len()).filter(|&i| g[i] == grp && y[i] == 0).collect();
                    idx.iter().map(|&i| mixed[i]).sum::<f64>() / idx.len() as f64
                };
                if (cost(0) - cost(1)).abs() <= 0.02 {
                    let err = (0..s.len()).filter(|&i| u8::from(mixed[i] >= 0.5) != y[i]).count();
                    best = best.min(err);
                }
            }
        }
        assert_eq!((m.error * s.len() as f64).round() as usize, best);
        assert!(m.cost_gap.abs() <= 0.02);
    }

    #[test]
    fn ceodds_failure_and_calibration_warning() {
        // group costs cannot meet: negatives of one group score 0, the other 1, and base rates match scores poorly
        let s = vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let y = vec![0, 1, 1, 0, 0, 1];
        let g = vec![0, 0, 0, 1, 1, 1];
        let p = CeoParams { cost: CostMode::Fpr, cost_tol: 0.0, ..Default::default() };
        let err = ceodds_fit(&s, &y, &g, 0.5, &p).unwrap_err();
        assert!(matches!(err, Error::Fit(_)));

        let s = vec![0.9, 0.9, 0.9, 0.9, 0.5, 0.5, 0.5, 0.5];
        let y = vec![0, 1, 0, 1, 0, 1, 0, 1];
        let g = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let m = ceodds_fit(&s, &y, &g, 0.5, &CeoParams { cost_tol: 1.0, ..Default::default() }).unwrap();
        assert!(m.calibration_warning);
    }

    fn brute_threshopt(s: &[f64], y: &[u8], g: &[u8], kind: ConstraintKind, tol: f64) -> (f64, f64, bool) {
        let mut feasible: Option<(f64, f64, f64)> = None;
        let mut closest: Option<(f64, f64, f64)> = None;
        for iu in 1..=99 {
            for ip in 1..=99 {
                let (tu, tp) = (f64::from(iu) / 100.0, f64::from(ip) / 100.0);
                let preds: Vec<u8> =
                    (0..s.len()).map(|i| u8::from(s[i] >= if g[i] == 1 { tp } else { tu })).collect();
                let ba = metrics::balanced_accuracy(&preds, y).unwrap();
                let gap = match kind {
                    ConstraintKind::DemographicParity => metrics::spd(&preds, g).unwrap().abs(),
                    ConstraintKind::EqualizedOdds => metrics::eod(&preds, y, g)
                        .unwrap()
                        .abs()
                        .max(metrics::fpr_gap(&preds, y, g).unwrap().abs()),
                };
                if gap <= tol && feasible.is_none_or(|(b, _, _)| ba > b) {
                    feasible = Some((ba, tp, tu));
                }
                if closest.is_none_or(|(gg, _, _)| gap < gg) {
                    closest = Some((gap, tp, tu));
                }
            }
        }
        match feasible {
            Some((_, tp, tu)) => (tp, tu, false),
            None => {
                let (_, tp, tu) = closest.unwrap();
                (tp, tu, true)
            }
        }
    }

    #[test]
    fn threshopt_matches_brute_force() {
        let (s, y, g) = random_valid(200, 5, 0.15);
        for kind in [ConstraintKind::DemographicParity, ConstraintKind::EqualizedOdds] {
            for tol in [0.0, 0.02, 0.1, 1.0] {
                let got = threshopt_fit(&s, &y, &g, &ThreshOptParams { constraint: kind, tol }).unwrap();
                let want = brute_threshopt(&s, &y, &g, kind, tol);
                assert_eq!((got.t_priv, got.t_unpriv, got.infeasible), want, "{kind:?} {tol}");
            }
        }
    }

    #[test]
    fn threshopt_symmetric_groups_share_threshold() {
        let (s0, y0, _) = random_valid(100, 6, 0.0);
        let mut s = s0.clone();
        s.extend(&s0);
        let mut y = y0.clone();
        y.extend(&y0);
        let g: Vec<u8> = (0..200).map(|i| u8::from(i >= 100)).collect();
        let t = threshopt_fit(&s, &y, &g, &ThreshOptParams::default()).unwrap();
        assert_eq!(t.t_priv, t.t_unpriv);
        let single = crate::thresholding::tune_threshold(&s, &y, &percent_grid(1, 99)).unwrap();
        assert_eq!(t.t_priv, single.threshold);
    }

    #[test]
    fn threshopt_relaxed_score_reproduces_decisions() {
        let t = GroupThresholds {
            t_priv: 0.7,
            t_unpriv: 0.3,
            constraint: ConstraintKind::DemographicParity,
            tol: 0.02,
            gap: 0.0,
            balanced_accuracy: 0.0,
            infeasible: false,
        };
        for (s, g) in [(0.4, 0u8), (0.6, 1), (0.2, 0), (0.9, 1), (0.5, 1), (0.5, 0)] {
            assert_eq!(u8::from(t.relaxed_score(s, g) >= 0.5), t.predict(s, g));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn roc_changes_only_in_band(
            data in prop::collection::vec((0.0f64..=1.0, 0u8..2), 1..40),
            t in 0.01f64..0.99, m in 0.0f64..0.49
        ) {
            let b = band(t, m);
            for (s, g) in data {
                if b.predict(s, g) != u8::from(s >= t) {
                    prop_assert!(b.in_band(s));
                }
            }
        }

        #[test]
        fn threshopt_feasible_dp_meets_tol(seed in 0u64..1000, shift in -0.3f64..0.3, tol in 0.0f64..0.2) {
            let (s, y, g) = random_valid(60, seed, shift);
            let t = threshopt_fit(&s, &y, &g, &ThreshOptParams { constraint: ConstraintKind::DemographicParity, tol }).unwrap();
            if !t.infeasible {
                let gap = metrics::spd(&threshopt_apply(&s, &g, &t), &g).unwrap().abs();
                prop_assert!(gap <= tol + 1e-12);
            }
        }

        #[test]
        fn ceodds_zero_mix_is_bit_exact(seed in 0u64..1000) {
            let (s, y, g) = random_valid(50, seed, 0.1);
            let m = mix([0.0, 0.0], &s, &y, &g);
            let mixed: Vec<f64> = s.iter().zip(&g).map(|(&v, &gr)| m.mixed_score(v, gr)).collect();
            prop_assert_eq!(&mixed, &s);
            prop_assert_eq!(generalized_costs(&mixed, &y), generalized_costs(&s, &y));
        }
    }
}
