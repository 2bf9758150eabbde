//! Performance and group-fairness metrics.
//!
//! Group `1` is privileged, label/prediction `1` is favorable. All gaps are
//! unprivileged minus privileged.

use serde::{Deserialize, Serialize};

use crate::data::{PRIVILEGED, UNPRIVILEGED};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub count: usize,
    pub selection_rate: f64,
    /// `None` when the group has no positive (resp. negative) labels.
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRateTable {
    pub privileged: GroupRates,
    pub unprivileged: GroupRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub roc_auc: f64,
    pub spd: f64,
    /// `+inf` when the privileged selection rate is zero and the unprivileged one is not.
    #[serde(with = "ratio_serde")]
    pub di: f64,
    pub eod: f64,
    pub aod: f64,
    pub group_rates: GroupRateTable,
}

pub(crate) mod ratio_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Tag(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            Repr::Tag("inf".into()).serialize(s)
        } else {
            Repr::Num(*v).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Tag(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Tag(t) => Err(serde::de::Error::custom(format!("invalid ratio `{t}`"))),
        }
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Metric(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Favorable-prediction rate per group, indexed by group id.
pub fn selection_rates(preds: &[u8], groups: &[u8]) -> Result<[f64; 2]> {
    check_len(preds.len(), groups.len())?;
    let mut sel = [0usize; 2];
    let mut tot = [0usize; 2];
    for (&p, &g) in preds.iter().zip(groups) {
        tot[g as usize] += 1;
        sel[g as usize] += p as usize;
    }
    if tot[0] == 0 || tot[1] == 0 {
        return Err(Error::Metric("a protected group is empty".into()));
    }
    Ok([sel[0] as f64 / tot[0] as f64, sel[1] as f64 / tot[1] as f64])
}

pub fn spd(preds: &[u8], groups: &[u8]) -> Result<f64> {
    let r = selection_rates(preds, groups)?;
    Ok(r[UNPRIVILEGED as usize] - r[PRIVILEGED as usize])
}

pub fn di(preds: &[u8], groups: &[u8]) -> Result<f64> {
    let r = selection_rates(preds, groups)?;
    let (u, p) = (r[UNPRIVILEGED as usize], r[PRIVILEGED as usize]);
    Ok(if p == 0.0 {
        if u == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        u / p
    })
}

/// Per-group (TPR, FPR) with `None` where the conditioning set is empty.
fn conditional_rates(preds: &[u8], labels: &[u8], groups: &[u8]) -> Result<[(Option<f64>, Option<f64>); 2]> {
    check_len(preds.len(), labels.len())?;
    check_len(preds.len(), groups.len())?;
    // [group][label] -> (predicted favorable, total)
    let mut c = [[(0usize, 0usize); 2]; 2];
    for ((&p, &y), &g) in preds.iter().zip(labels).zip(groups) {
        let cell = &mut c[g as usize][y as usize];
        cell.0 += p as usize;
        cell.1 += 1;
    }
    let rate = |(k, n): (usize, usize)| (n > 0).then(|| k as f64 / n as f64);
    Ok([(rate(c[0][1]), rate(c[0][0])), (rate(c[1][1]), rate(c[1][0]))])
}

pub fn eod(preds: &[u8], labels: &[u8], groups: &[u8]) -> Result<f64> {
    let r = conditional_rates(preds, labels, groups)?;
    match (r[UNPRIVILEGED as usize].0, r[PRIVILEGED as usize].0) {
        (Some(u), Some(p)) => Ok(u - p),
        _ => Err(Error::Metric("true positive rate undefined: a group has no favorable labels".into())),
    }
}

pub fn fpr_gap(preds: &[u8], labels: &[u8], groups: &[u8]) -> Result<f64> {
    let r = conditional_rates(preds, labels, groups)?;
    match (r[UNPRIVILEGED as usize].1, r[PRIVILEGED as usize].1) {
        (Some(u), Some(p)) => Ok(u - p),
        _ => Err(Error::Metric("false positive rate undefined: a group has no unfavorable labels".into())),
    }
}

pub fn aod(preds: &[u8], labels: &[u8], groups: &[u8]) -> Result<f64> {
    let fpr = fpr_gap(preds, labels, groups)?;
    let tpr = eod(preds, labels, groups)?;
    Ok((fpr + tpr) / 2.0)
}

pub fn accuracy(preds: &[u8], labels: &[u8]) -> Result<f64> {
    check_len(preds.len(), labels.len())?;
    if preds.is_empty() {
        return Err(Error::Metric("accuracy of an empty prediction vector".into()));
    }
    let correct = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / preds.len() as f64)
}

pub fn balanced_accuracy(preds: &[u8], labels: &[u8]) -> Result<f64> {
    check_len(preds.len(), labels.len())?;
    let mut tp = 0usize;
    let mut tn = 0usize;
    let mut pos = 0usize;
    for (&p, &y) in preds.iter().zip(labels) {
        if y == 1 {
            pos += 1;
            tp += p as usize;
        } else {
            tn += usize::from(p == 0);
        }
    }
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("balanced accuracy needs both label classes".into()));
    }
    Ok((tp as f64 / pos as f64 + tn as f64 / neg as f64) / 2.0)
}

/// Area under the ROC curve via the Mann-Whitney rank statistic; ties count half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_len(scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("ROC AUC needs both label classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their average
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub roc_auc: f64,
}

pub fn performance(preds: &[u8], scores: &[f64], labels: &[u8]) -> Result<Performance> {
    Ok(Performance {
        accuracy: accuracy(preds, labels)?,
        balanced_accuracy: balanced_accuracy(preds, labels)?,
        roc_auc: roc_auc(scores, labels)?,
    })
}

pub fn group_rates(preds: &[u8], labels: &[u8], groups: &[u8]) -> Result<GroupRateTable> {
    let sel = selection_rates(preds, groups)?;
    let cond = conditional_rates(preds, labels, groups)?;
    let count = |g: u8| groups.iter().filter(|&&x| x == g).count();
    let make = |g: u8| GroupRates {
        count: count(g),
        selection_rate: sel[g as usize],
        tpr: cond[g as usize].0,
        fpr: cond[g as usize].1,
    };
    Ok(GroupRateTable { privileged: make(PRIVILEGED), unprivileged: make(UNPRIVILEGED) })
}

impl MetricBundle {
    pub fn compute(preds: &[u8], scores: &[f64], labels: &[u8], groups: &[u8]) -> Result<Self> {
        let perf = performance(preds, scores, labels)?;
        Ok(Self {
            accuracy: perf.accuracy,
            balanced_accuracy: perf.balanced_accuracy,
            roc_auc: perf.roc_auc,
            spd: spd(preds, groups)?,
            di: di(preds, groups)?,
            eod: eod(preds, labels, groups)?,
            aod: aod(preds, labels, groups)?,
            group_rates: group_rates(preds, labels, groups)?,
        })
    }

    /// Scalar metrics in a fixed order, as used by flat CSV reports and run comparisons.
    pub fn scalars(&self) -> [(&'static str, f64); 7] {
        [
            ("accuracy", self.accuracy),
            ("balanced_accuracy", self.balanced_accuracy),
            ("roc_auc", self.roc_auc),
            ("spd", self.spd),
            ("di", self.di),
            ("eod", self.eod),
            ("aod", self.aod),
        ]
    }
}
