//! LIME-style local surrogate explanations and the faithfulness metric.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureKind, TabularDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Batch score function of the model being explained.
pub type ScoreFn<'a> = dyn Fn(&Matrix) -> Vec<f64> + Sync + 'a;

/// One categorical variable: its columns and the observed indicator patterns with counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalGroup {
    pub columns: Vec<usize>,
    pub patterns: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
}

/// Training-split statistics driving perturbation and feature removal.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    pub means: Vec<f64>,
    /// Population std, `1.0` for constant columns.
    pub stds: Vec<f64>,
    pub groups: Vec<CategoricalGroup>,
}

impl FeatureStats {
    pub fn from_train(ds: &TabularDataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::Explanation("feature statistics need a nonempty training set".into()));
        }
        let x = ds.features();
        let n = x.nrows() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut stds = Vec::with_capacity(x.ncols());
        for j in 0..x.ncols() {
            let col = x.column(j);
            let m = col.iter().sum::<f64>() / n;
            let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / n;
            means.push(m);
            stds.push(if v > 0.0 { v.sqrt() } else { 1.0 });
        }
        let mut ids: Vec<usize> = ds
            .feature_kinds()
            .iter()
            .filter_map(|k| match k {
                FeatureKind::Categorical { group } => Some(*group),
                FeatureKind::Continuous => None,
            })
            .collect();
        ids.sort_unstable();
        ids.dedup();
        let groups = ids
            .into_iter()
            .map(|gid| {
                let columns: Vec<usize> = (0..x.ncols())
                    .filter(|&j| ds.feature_kinds()[j] == FeatureKind::Categorical { group: gid })
                    .collect();
                let mut patterns: Vec<Vec<f64>> = Vec::new();
                let mut counts: Vec<usize> = Vec::new();
                for row in x.rows_iter() {
                    let pat: Vec<f64> = columns.iter().map(|&j| row[j]).collect();
                    match patterns.iter().position(|p| *p == pat) {
                        Some(k) => counts[k] += 1,
                        None => {
                            patterns.push(pat);
                            counts.push(1);
                        }
                    }
                }
                CategoricalGroup { columns, patterns, counts }
            })
            .collect();
        Ok(Self {
            names: ds.feature_names().to_vec(),
            kinds: ds.feature_kinds().to_vec(),
            means,
            stds,
            groups,
        })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    fn is_continuous(&self, j: usize) -> bool {
        self.kinds[j] == FeatureKind::Continuous
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeParams {
    pub num_samples: usize,
    /// `None` means `0.75 * sqrt(d)`.
    pub kernel_width: Option<f64>,
    pub top_k: usize,
    pub ridge: f64,
}

impl Default for LimeParams {
    fn default() -> Self {
        Self { num_samples: 5000, kernel_width: None, top_k: 10, ridge: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeight {
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub instance: usize,
    /// Sorted by descending `|weight|`.
    pub features: Vec<FeatureWeight>,
    pub intercept: f64,
    pub r2: f64,
    pub seed: u64,
}

/// Draws perturbations around `row`, fits a kernel-weighted ridge surrogate
/// to the model scores and keeps the `top_k` largest attributions.
/// Continuous attributions are per training standard deviation.
pub fn lime_explain(
    score: &ScoreFn<'_>,
    row: &[f64],
    instance: usize,
    stats: &FeatureStats,
    p: &LimeParams,
    seed: u64,
) -> Result<Explanation> {
    let d = stats.dim();
    if row.len() != d {
        return Err(Error::Explanation(format!("instance has {} features, statistics cover {d}", row.len())));
    }
    if p.num_samples < 2 {
        return Err(Error::Parameter("LIME needs at least two samples".into()));
    }
    let width = p.kernel_width.unwrap_or(0.75 * (d as f64).sqrt());
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::Explanation(format!("kernel width {width} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.num_samples;
    let mut samples = Matrix::zeros(n, d);
    // regression design: standardized offsets for continuous columns, raw indicators otherwise
    let mut design = DMatrix::<f64>::zeros(n, d);
    let samplers: Vec<WeightedIndex<usize>> = stats
        .groups
        .iter()
        .map(|g| WeightedIndex::new(&g.counts).map_err(|e| Error::Explanation(e.to_string())))
        .collect::<Result<_>>()?;
    for i in 0..n {
        let out = samples.row_mut(i);
        out.copy_from_slice(row);
        if i == 0 {
            continue;
        }
        for j in (0..d).filter(|&j| stats.is_continuous(j)) {
            let z: f64 = StandardNormal.sample(&mut rng);
            out[j] = row[j] + z * stats.stds[j];
        }
        for (g, sampler) in stats.groups.iter().zip(&samplers) {
            let pat = &g.patterns[sampler.sample(&mut rng)];
            for (&j, &v) in g.columns.iter().zip(pat) {
                out[j] = v;
            }
        }
    }
    let mut kernel = Vec::with_capacity(n);
    for i in 0..n {
        let s = samples.row(i);
        let mut d2 = 0.0;
        for j in 0..d {
            let v = if stats.is_continuous(j) { (s[j] - row[j]) / stats.stds[j] } else { s[j] - row[j] };
            d2 += v * v;
            design[(i, j)] = if stats.is_continuous(j) { (s[j] - row[j]) / stats.stds[j] } else { s[j] };
        }
        kernel.push((-d2 / (width * width)).exp());
    }
    if kernel[1..].iter().sum::<f64>() <= 0.0 {
        return Err(Error::Explanation(format!("kernel width {width} leaves every perturbation with zero weight")));
    }
    let targets = score(&samples);
    let (coef, intercept, r2) = weighted_ridge(&design, &targets, &kernel, p.ridge)?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| coef[b].abs().total_cmp(&coef[a].abs()).then(a.cmp(&b)));
    let features = order
        .into_iter()
        .take(p.top_k.min(d))
        .map(|j| FeatureWeight { name: stats.names[j].clone(), weight: coef[j] })
        .collect();
    Ok(Explanation { instance, features, intercept, r2, seed })
}

/// Ridge on centered data with an unpenalized intercept. Returns
/// `(coef, intercept, weighted R^2)`, with `R^2 = 0` for a constant target.
pub fn weighted_ridge(x: &DMatrix<f64>, y: &[f64], w: &[f64], alpha: f64) -> Result<(Vec<f64>, f64, f64)> {
    let (n, d) = x.shape();
    let wsum: f64 = w.iter().sum();
    let y_mean = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let x_mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| w[i] * x[(i, j)]).sum::<f64>() / wsum).collect();
    let xc = DMatrix::from_fn(n, d, |i, j| (x[(i, j)] - x_mean[j]) * w[i].sqrt());
    let yc = DVector::from_fn(n, |i, _| (y[i] - y_mean) * w[i].sqrt());
    let mut gram = xc.transpose() * &xc;
    for j in 0..d {
        gram[(j, j)] += alpha;
    }
    let rhs = xc.transpose() * &yc;
    let beta = gram
        .cholesky()
        .ok_or_else(|| Error::Explanation("surrogate normal equations are not positive definite".into()))?
        .solve(&rhs);
    let coef: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean - coef.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..n {
        let pred = intercept + (0..d).map(|j| coef[j] * x[(i, j)]).sum::<f64>();
        ss_res += w[i] * (y[i] - pred).powi(2);
        ss_tot += w[i] * (y[i] - y_mean).powi(2);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    Ok((coef, intercept, r2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessScore {
    /// `None` when the correlation is undefined.
    pub value: Option<f64>,
    /// `(weight, drop)` per explained feature, weights oriented toward the predicted class.
    pub pairs: Vec<(f64, f64)>,
}

/// Removes each explained feature in turn (baseline substitution) and
/// correlates the drop in predicted-class score with the attributions.
pub fn faithfulness(
    score: &ScoreFn<'_>,
    row: &[f64],
    explanation: &Explanation,
    feature_names: &[String],
    baselines: &[f64],
    threshold: f64,
) -> Result<FaithfulnessScore> {
    let mut perturbed = Vec::with_capacity(explanation.features.len() + 1);
    perturbed.push(row.to_vec());
    for f in &explanation.features {
        let j = feature_names
            .iter()
            .position(|n| *n == f.name)
            .ok_or_else(|| Error::Explanation(format!("unknown explained feature `{}`", f.name)))?;
        let b = *baselines
            .get(j)
            .ok_or_else(|| Error::Explanation(format!("no baseline for feature `{}`", f.name)))?;
        let mut r = row.to_vec();
        r[j] = b;
        perturbed.push(r);
    }
    let scores = score(&Matrix::from_rows(&perturbed));
    let positive = scores[0] >= threshold;
    let class_score = |s: f64| if positive { s } else { 1.0 - s };
    let orig = class_score(scores[0]);
    let pairs: Vec<(f64, f64)> = explanation
        .features
        .iter()
        .zip(&scores[1..])
        .map(|(f, &s)| (if positive { f.weight } else { -f.weight }, orig - class_score(s)))
        .collect();
    Ok(FaithfulnessScore { value: faithfulness_value(&pairs), pairs })
}

/// Pearson correlation of `(weight, drop)` pairs; undefined with fewer than
/// two distinct drops or zero variance on either side.
pub fn faithfulness_value(pairs: &[(f64, f64)]) -> Option<f64> {
    let mut distinct: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let (mw, md) = (pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n);
    let (mut sww, mut sdd, mut swd) = (0.0, 0.0, 0.0);
    for &(w, d) in pairs {
        sww += (w - mw) * (w - mw);
        sdd += (d - md) * (d - md);
        swd += (w - mw) * (d - md);
    }
    if sww <= 0.0 || sdd <= 0.0 {
        return None;
    }
    Some((swd / (sww * sdd).sqrt()).clamp(-1.0, 1.0))
}

/// Row ids of `count` test instances drawn uniformly without replacement, in ascending order.
pub fn pick_explanation_instances(test: &TabularDataset, count: usize, seed: u64) -> Result<Vec<usize>> {
    if count > test.len() {
        return Err(Error::Parameter(format!(
            "cannot pick {count} explanation instances from {} test rows",
            test.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<usize> = index::sample(&mut rng, test.len(), count).into_iter().map(|i| test.row_ids()[i]).collect();
    ids.sort_unstable();
    Ok(ids)
}

/// Per-instance seed derived from the run seed (splitmix64 finalizer).
pub fn instance_seed(run_seed: u64, instance: usize) -> u64 {
    let mut z = run_seed ^ (instance as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_biased;
    use crate::models::{sigmoid, LogisticModel, ScoredClassifier};
    use proptest::prelude::*;

    fn continuous_stats(d: usize) -> FeatureStats {
        FeatureStats {
            names: (0..d).map(|j| format!("x{j}")).collect(),
            kinds: vec![FeatureKind::Continuous; d],
            means: vec![0.0; d],
            stds: vec![1.0; d],
            groups: vec![],
        }
    }

    fn logistic(coef: Vec<f64>) -> LogisticModel {
        LogisticModel { coef, intercept: 0.0, iterations: 0, grad_norm: 0.0, converged: true }
    }

    fn weight_of(e: &Explanation, name: &str) -> f64 {
        e.features.iter().find(|f| f.name == name).unwrap().weight
    }

    #[test]
    fn irrelevant_feature_gets_small_attribution() {
        let m = logistic(vec![2.0, 0.0]);
        let f = |x: &Matrix| m.score(x);
        let e = lime_explain(&f, &[0.1, -0.3], 7, &continuous_stats(2), &LimeParams::default(), 11).unwrap();
        let (w1, w2) = (weight_of(&e, "x0"), weight_of(&e, "x1"));
        assert!(w1 > 0.0);
        assert!(w2.abs() < 0.05 * w1.abs(), "{w1} {w2}");
        assert_eq!(e.features[0].name, "x0");
    }

    #[test]
    fn recovers_signs_of_linear_score() {
        let coef = vec![1.0, -0.8, 0.6, 0.0, -1.5];
        let f = |x: &Matrix| x.rows_iter().map(|r| 0.5 + 0.05 * r.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>()).collect();
        let e = lime_explain(&f, &[0.2, 0.0, -0.4, 1.0, 0.3], 0, &continuous_stats(5), &LimeParams::default(), 3).unwrap();
        for (j, c) in coef.iter().enumerate() {
            let w = weight_of(&e, &format!("x{j}"));
            if c.abs() > 0.5 {
                assert_eq!(w.signum(), c.signum(), "feature {j}");
            }
        }
        assert!(e.r2 > 0.99);
    }

    #[test]
    fn constant_model_has_zero_attributions() {
        let f = |x: &Matrix| vec![0.42; x.nrows()];
        let e = lime_explain(&f, &[1.0, 2.0, 3.0], 0, &continuous_stats(3), &LimeParams::default(), 5).unwrap();
        assert!(e.features.iter().all(|w| w.weight.abs() < 1e-6));
        assert_eq!(e.r2, 0.0);
        assert!((e.intercept - 0.42).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_explanation_and_top_k() {
        let m = logistic(vec![0.5, -1.0, 0.2]);
        let f = |x: &Matrix| m.score(x);
        let p = LimeParams { top_k: 2, num_samples: 500, ..Default::default() };
        let a = lime_explain(&f, &[0.0, 0.5, 1.0], 1, &continuous_stats(3), &p, 9).unwrap();
        let b = lime_explain(&f, &[0.0, 0.5, 1.0], 1, &continuous_stats(3), &p, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.features.len(), 2);
        assert!(a.features[0].weight.abs() >= a.features[1].weight.abs());
    }

    #[test]
    fn zero_weight_kernel_is_an_error() {
        let f = |x: &Matrix| vec![0.5; x.nrows()];
        let p = LimeParams { kernel_width: Some(1e-200), num_samples: 50, ..Default::default() };
        let err = lime_explain(&f, &[0.0, 0.0], 0, &continuous_stats(2), &p, 1).unwrap_err();
        assert!(matches!(err, Error::Explanation(_)));
    }

    #[test]
    fn categorical_groups_resample_observed_patterns() {
        let ds = synth_biased(200, 2, 0.0, 1.0, 1).unwrap().with_protected_feature("group");
        let stats = FeatureStats::from_train(&ds).unwrap();
        assert_eq!(stats.groups.len(), 1);
        assert_eq!(stats.groups[0].counts.iter().sum::<usize>(), 200);
        let seen = std::sync::Mutex::new(Vec::new());
        let f = |x: &Matrix| {
            seen.lock().unwrap().extend(x.column(2));
            vec![0.5; x.nrows()]
        };
        lime_explain(&f, ds.features().row(0), 0, &stats, &LimeParams { num_samples: 200, ..Default::default() }, 2).unwrap();
        let seen = seen.into_inner().unwrap();
        assert!(seen.iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(seen.contains(&0.0) && seen.contains(&1.0));
    }

    #[test]
    fn weighted_ridge_matches_closed_form() {
        // one feature, unit weights: slope = Sxy / (Sxx + alpha)
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let y = [1.0, 3.0, 2.0, 5.0];
        let (coef, b, _) = weighted_ridge(&x, &y, &[1.0; 4], 1.0).unwrap();
        let (sxy, sxx) = (5.5, 5.0);
        assert!((coef[0] - sxy / (sxx + 1.0)).abs() < 1e-12);
        assert!((b - (2.75 - coef[0] * 1.5)).abs() < 1e-12);
    }

    fn expl(weights: &[f64]) -> Explanation {
        Explanation {
            instance: 0,
            features: weights.iter().enumerate().map(|(j, &w)| FeatureWeight { name: format!("x{j}"), weight: w }).collect(),
            intercept: 0.0,
            r2: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn faithfulness_extremes() {
        assert!((faithfulness_value(&[(1.0, 2.0), (2.0, 4.0), (-1.0, -2.0)]).unwrap() - 1.0).abs() < 1e-12);
        assert!((faithfulness_value(&[(1.0, -2.0), (2.0, -4.0), (-1.0, 2.0)]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(faithfulness_value(&[(1.0, 0.3), (2.0, 0.3)]), None);
        assert_eq!(faithfulness_value(&[(1.0, 0.3), (1.0, 0.4)]), None);
    }

    #[test]
    fn faithfulness_of_linear_score_with_exact_weights_is_one() {
        // score = 0.5 + sum c_j x_j, baseline 0: drop_j = c_j x_j, weights set to c_j x_j
        let c = [0.1, -0.05, 0.2];
        let row = [1.0, 2.0, 0.5];
        let f = |x: &Matrix| x.rows_iter().map(|r| 0.5 + r.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()).collect();
        let e = expl(&[0.1, -0.1, 0.1 + 1e-3]);
        let names: Vec<String> = (0..3).map(|j| format!("x{j}")).collect();
        let fs = faithfulness(&f, &row, &e, &names, &[0.0; 3], 0.5).unwrap();
        assert!((fs.value.unwrap() - 1.0).abs() < 1e-2);
        // exact proportional weights
        let exact = expl(&[0.1 * 1.0, -0.05 * 2.0 + 1e-9, 0.2 * 0.5 - 1e-9]);
        let fs = faithfulness(&f, &row, &exact, &names, &[0.0; 3], 0.5).unwrap();
        let drops: Vec<f64> = fs.pairs.iter().map(|p| p.1).collect();
        assert!((drops[0] - 0.1).abs() < 1e-12 && (drops[1] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn faithfulness_orients_weights_toward_predicted_class() {
        let m = logistic(vec![1.0, -2.0]);
        let f = |x: &Matrix| m.score(x);
        let row = [-1.0, 1.0];
        assert!(sigmoid(-3.0) < 0.5);
        let e = expl(&[1.0, -2.0]);
        let names = vec!["x0".to_string(), "x1".to_string()];
        let fs = faithfulness(&f, &row, &e, &names, &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(fs.pairs[0].0, -1.0);
        assert!(fs.value.unwrap() > 0.99);
        let constant = |x: &Matrix| vec![0.7; x.nrows()];
        assert_eq!(faithfulness(&constant, &row, &e, &names, &[0.0, 0.0], 0.5).unwrap().value, None);
    }

    #[test]
    fn instance_picking() {
        let ds = synth_biased(100, 2, 0.0, 1.0, 3).unwrap();
        let a = pick_explanation_instances(&ds, 10, 4).unwrap();
        assert_eq!(a, pick_explanation_instances(&ds, 10, 4).unwrap());
        assert_eq!(a.len(), 10);
        assert_eq!(pick_explanation_instances(&ds, 100, 4).unwrap(), ds.row_ids().to_vec());
        assert!(matches!(pick_explanation_instances(&ds, 101, 4), Err(Error::Parameter(_))));
        assert_ne!(instance_seed(1, 2), instance_seed(1, 3));
    }

    proptest! {
        #[test]
        fn faithfulness_is_bounded_and_scale_invariant(
            pairs in prop::collection::vec((-5.0f64..5.0, -1.0f64..1.0), 2..12), k in 0.01f64..100.0
        ) {
            if let Some(v) = faithfulness_value(&pairs) {
                prop_assert!((-1.0..=1.0).contains(&v));
                let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(w, d)| (w * k, d)).collect();
                let s = faithfulness_value(&scaled).unwrap();
                prop_assert!((s - v).abs() < 1e-9);
            }
        }
    }
}
