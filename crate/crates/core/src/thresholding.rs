//! Score-to-label conversion with thresholds tuned for balanced accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::balanced_accuracy;

/// Predict favorable iff `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub threshold: f64,
}

impl ThresholdRule {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Threshold(format!("threshold {threshold} outside [0,1]")));
        }
        Ok(Self { threshold })
    }

    pub fn predict(&self, score: f64) -> u8 {
        u8::from(score >= self.threshold)
    }
}

/// `0.01, 0.02, ..., 0.99`, built from integers so every point is the nearest double.
pub fn default_grid() -> Vec<f64> {
    percent_grid(1, 99)
}

pub(crate) fn percent_grid(lo: u32, hi: u32) -> Vec<f64> {
    (lo..=hi).map(|i| f64::from(i) / 100.0).collect()
}

pub fn apply_threshold(scores: &[f64], rule: &ThresholdRule) -> Vec<u8> {
    scores.iter().map(|&s| rule.predict(s)).collect()
}

/// Grid member with the highest validation balanced accuracy; ties go to the smallest threshold.
pub fn tune_threshold(scores: &[f64], labels: &[u8], grid: &[f64]) -> Result<ThresholdRule> {
    if grid.is_empty() {
        return Err(Error::Threshold("empty threshold grid".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Threshold("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::Threshold("validation labels contain a single class".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for &t in &sorted {
        let rule = ThresholdRule::new(t)?;
        let ba = balanced_accuracy(&apply_threshold(scores, &rule), labels)?;
        if best.is_none_or(|(b, _)| ba > b) {
            best = Some((ba, t));
        }
    }
    let (_, t) = best.expect("grid is nonempty");
    ThresholdRule::new(t)
}
