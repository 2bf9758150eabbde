//! JSON-in, JSON-out entry points for the static demo page in `www/`.
//!
//! Each call regenerates a small synthetic dataset from its request, so the
//! page keeps no state between calls. The `*_json` functions are plain Rust
//! and are what the tests exercise; the `#[wasm_bindgen]` wrappers only
//! convert errors.

use faircompose::composer::config::parse_config;
use faircompose::composer::{run_pipeline, RunOutput, StageReport};
use faircompose::explain::FeatureWeight;
use faircompose::metrics::{self, MetricBundle};
use faircompose::mitigation::post::{roc_apply, roc_fit, RocBand, RocParams};
use faircompose::thresholding::default_grid;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Dataset and model shared by every request.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_n")]
    pub n: usize,
    pub gap: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_model")]
    pub model: String,
}

fn default_n() -> usize {
    2000
}

fn default_model() -> String {
    "logistic_regression".into()
}

impl Scenario {
    fn run(&self, pipeline: &str, explain: &str) -> Result<RunOutput, String> {
        if !(100..=20_000).contains(&self.n) {
            return Err(format!("n = {} outside 100..=20000", self.n));
        }
        let yaml = format!(
            "dataset:\n  synth: {{n: {}, d: 4, gap: {}, seed: {}}}\nmodels:\n  - kind: {}\n{pipeline}explain: {explain}\nseed: {}\n",
            self.n, self.gap, self.seed, self.model, self.seed
        );
        let cfg = parse_config(&yaml).map_err(|e| e.to_string())?;
        let out = run_pipeline(&cfg).map_err(|e| e.to_string())?;
        match out.report.errors.first() {
            Some(e) => Err(format!("{} failed: {}", e.stage, e.message)),
            None => Ok(out),
        }
    }
}

fn parse<T: for<'de> Deserialize<'de>>(req: &str) -> Result<T, String> {
    serde_json::from_str(req).map_err(|e| format!("bad request: {e}"))
}

fn reply<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// DI may be infinite; JSON has no infinity, so it travels as `null`.
fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Serialize)]
struct ThresholdSweep {
    thresholds: Vec<f64>,
    accuracy: Vec<f64>,
    balanced_accuracy: Vec<f64>,
    di: Vec<Option<f64>>,
    spd: Vec<f64>,
    /// Threshold tuned on validation balanced accuracy.
    tuned: f64,
    /// Test scores split by group, for histograms.
    scores_unpriv: Vec<f64>,
    scores_priv: Vec<f64>,
}

/// Test metrics of the base model at every grid threshold.
pub fn threshold_sweep_json(req: &str) -> Result<String, String> {
    let sc: Scenario = parse(req)?;
    let out = sc.run("", "{count: 0}")?;
    let trace = &out.traces[0];
    let (labels, groups) = (out.data.test.labels(), out.data.test.protected());
    let mut sweep = ThresholdSweep {
        thresholds: default_grid(),
        accuracy: vec![],
        balanced_accuracy: vec![],
        di: vec![],
        spd: vec![],
        tuned: trace.threshold.unwrap_or(0.5),
        scores_unpriv: vec![],
        scores_priv: vec![],
    };
    for &t in &sweep.thresholds {
        let preds: Vec<u8> = trace.test_scores.iter().map(|&s| u8::from(s >= t)).collect();
        let m = MetricBundle::compute(&preds, &trace.test_scores, labels, groups).map_err(|e| e.to_string())?;
        sweep.accuracy.push(m.accuracy);
        sweep.balanced_accuracy.push(m.balanced_accuracy);
        sweep.di.push(finite(m.di));
        sweep.spd.push(m.spd);
    }
    for (&s, &g) in trace.test_scores.iter().zip(groups) {
        if g == 1 { &mut sweep.scores_priv } else { &mut sweep.scores_unpriv }.push(s);
    }
    reply(&sweep)
}

#[derive(Deserialize)]
struct BandRequest {
    #[serde(flatten)]
    scenario: Scenario,
    threshold: f64,
    margin: f64,
}

#[derive(Serialize)]
struct Outcome {
    di: Option<f64>,
    balanced_accuracy: f64,
    accuracy: f64,
}

impl Outcome {
    fn of(preds: &[u8], labels: &[u8], groups: &[u8]) -> Result<Self, String> {
        let e = |e: faircompose::Error| e.to_string();
        Ok(Self {
            di: finite(metrics::di(preds, groups).map_err(e)?),
            balanced_accuracy: metrics::balanced_accuracy(preds, labels).map_err(e)?,
            accuracy: metrics::accuracy(preds, labels).map_err(e)?,
        })
    }
}

#[derive(Serialize)]
struct BandReply {
    /// Base model at its tuned threshold.
    base: Outcome,
    /// The requested band applied to test scores.
    chosen: Outcome,
    changed: usize,
    /// The band the validation search would pick.
    fitted: RocBand,
    fitted_test: Outcome,
}

/// Applies a user-chosen reject-option band and the validation-fitted one to test scores.
pub fn roc_band_json(req: &str) -> Result<String, String> {
    let r: BandRequest = parse(req)?;
    if !(0.0..=1.0).contains(&r.threshold) || !(0.0..0.5).contains(&r.margin) {
        return Err("threshold must lie in [0, 1] and margin in [0, 0.5)".into());
    }
    let out = r.scenario.run("", "{count: 0}")?;
    let trace = &out.traces[0];
    let (labels, groups) = (out.data.test.labels(), out.data.test.protected());
    let fitted = roc_fit(&trace.valid_scores, out.data.valid.labels(), out.data.valid.protected(), &RocParams::default())
        .map_err(|e| e.to_string())?;
    let chosen_band = RocBand { threshold: r.threshold, margin: r.margin, ..fitted };
    let chosen = roc_apply(&trace.test_scores, groups, &chosen_band);
    let plain: Vec<u8> = trace.test_scores.iter().map(|&s| u8::from(s >= r.threshold)).collect();
    reply(&BandReply {
        base: Outcome::of(&trace.test_preds, labels, groups)?,
        changed: chosen.iter().zip(&plain).filter(|(a, b)| a != b).count(),
        chosen: Outcome::of(&chosen, labels, groups)?,
        fitted_test: Outcome::of(&roc_apply(&trace.test_scores, groups, &fitted), labels, groups)?,
        fitted,
    })
}

#[derive(Deserialize)]
struct LimeRequest {
    #[serde(flatten)]
    scenario: Scenario,
    /// Which of the explained test instances to show.
    #[serde(default)]
    pick: usize,
    #[serde(default = "default_samples")]
    samples: usize,
}

fn default_samples() -> usize {
    1000
}

#[derive(Serialize)]
struct StageExplanation {
    stage: String,
    features: Vec<FeatureWeight>,
    r2: f64,
    faithfulness: Option<f64>,
    di: Option<f64>,
}

#[derive(Serialize)]
struct LimeReply {
    instance: usize,
    candidates: Vec<usize>,
    stages: Vec<StageExplanation>,
}

const LIME_INSTANCES: usize = 5;

/// LIME explanations of one test instance under the base and the reweighed model.
pub fn lime_compare_json(req: &str) -> Result<String, String> {
    let r: LimeRequest = parse(req)?;
    if r.pick >= LIME_INSTANCES || !(50..=5000).contains(&r.samples) {
        return Err(format!("pick must be below {LIME_INSTANCES} and samples in 50..=5000"));
    }
    let explain = format!("{{count: {LIME_INSTANCES}, samples: {}}}", r.samples);
    let out = r.scenario.run("pipeline:\n  pre: {name: Rew}\n", &explain)?;
    let stage = |s: &StageReport| {
        let e = &s.explanations[r.pick];
        StageExplanation {
            stage: s.stage.clone(),
            features: e.features.clone(),
            r2: e.r2,
            faithfulness: e.faithfulness,
            di: finite(s.metrics.di),
        }
    };
    reply(&LimeReply {
        instance: out.report.explanation_instances[r.pick],
        candidates: out.report.explanation_instances.clone(),
        stages: out.report.reports.iter().map(stage).collect(),
    })
}

#[wasm_bindgen]
pub fn threshold_sweep(req: &str) -> Result<String, JsError> {
    threshold_sweep_json(req).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn roc_band(req: &str) -> Result<String, JsError> {
    roc_band_json(req).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn lime_compare(req: &str) -> Result<String, JsError> {
    lime_compare_json(req).map_err(|e| JsError::new(&e))
}
