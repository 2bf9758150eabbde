//! Staged execution: baseline, then pre-, in- and post-processing, each
//! reported on the test split with explanations for a fixed instance set.

use std::sync::Arc;

use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{DatasetConfig, InMethod, PipelineConfig, PostStage, PreStage};
use super::report::{ExplanationRecord, Marker, RunReport, StageError, StageReport, ThresholdRecord};
use crate::data::{load_csv, split, standardize, synth_biased, TabularDataset};
use crate::error::{Error, Result};
use crate::explain::{faithfulness, instance_seed, lime_explain, pick_explanation_instances, FeatureStats};
use crate::matrix::Matrix;
use crate::metrics::MetricBundle;
use crate::mitigation::inproc::{expgrad_fit, gridsearch_fit, ReductionModel};
use crate::mitigation::post::{
    ceodds_apply, ceodds_fit, roc_apply, roc_fit, threshopt_apply, threshopt_fit, CeoMix, GroupThresholds, RocBand,
};
use crate::mitigation::pre::{lfr_apply, lfr_fit, reweigh, LfrModel};
use crate::models::{ModelSpec, SharedClassifier};
use crate::thresholding::{apply_threshold, default_grid, tune_threshold};

/// Split, standardized data shared by every model of a run.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: TabularDataset,
    pub valid: TabularDataset,
    pub test: TabularDataset,
    pub stats: FeatureStats,
    /// Column of the appended protected indicator, if any.
    pub protected_col: Option<usize>,
    /// Test row ids explained at every stage.
    pub instance_ids: Vec<usize>,
    /// Positions of `instance_ids` within the test split.
    pub instance_rows: Vec<usize>,
}

pub fn load_dataset(cfg: &PipelineConfig) -> Result<TabularDataset> {
    let ds = match &cfg.dataset {
        DatasetConfig::Csv { path, schema } => load_csv(path, schema)?,
        DatasetConfig::Synth(s) => synth_biased(s.n, s.d, s.gap, s.noise, s.seed)?,
    };
    Ok(if cfg.include_protected { ds.with_protected_feature(cfg.dataset.protected_name()) } else { ds })
}

pub fn prepare_data(cfg: &PipelineConfig) -> Result<PreparedData> {
    let ds = load_dataset(cfg)?;
    let parts = split(&ds, &cfg.splits)?;
    let (train, rest, _) = standardize(&parts.train, &[&parts.valid, &parts.test])?;
    let [valid, test]: [TabularDataset; 2] = rest.try_into().expect("two held-out splits");
    let stats = FeatureStats::from_train(&train)?;
    let protected_col = cfg.include_protected.then(|| train.features().ncols() - 1);
    let instance_ids = pick_explanation_instances(&test, cfg.explain.count, cfg.seed)?;
    let instance_rows = instance_ids
        .iter()
        .map(|id| test.row_ids().iter().position(|r| r == id).expect("picked from test"))
        .collect();
    Ok(PreparedData { train, valid, test, stats, protected_col, instance_ids, instance_rows })
}

/// Per-stage arrays kept alongside the reports for recomputation checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTrace {
    pub model: String,
    pub stage: String,
    /// Validation scores of the stage's model (before any post-processing).
    pub valid_scores: Vec<f64>,
    /// Test scores the metrics were computed from.
    pub test_scores: Vec<f64>,
    pub test_preds: Vec<u8>,
    /// Tuned threshold; `None` for post-processing stages.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub traces: Vec<StageTrace>,
    pub data: PreparedData,
}

impl RunOutput {
    pub fn has_errors(&self) -> bool {
        !self.report.errors.is_empty()
    }
}

/// Model composed with the feature transform fitted so far.
#[derive(Clone)]
struct Scorer {
    lfr: Option<Arc<LfrModel>>,
    model: SharedClassifier,
}

impl Scorer {
    fn score(&self, x: &Matrix) -> Vec<f64> {
        match &self.lfr {
            Some(l) => self.model.score(&l.transform(x)),
            None => self.model.score(x),
        }
    }
}

#[derive(Clone, Copy)]
enum Decision {
    Threshold(f64),
    Roc(RocBand),
    Ceo(CeoMix),
    Groups(GroupThresholds),
}

impl Decision {
    /// Score after relaxing the decision rule into the score function.
    fn explained(&self, score: f64, group: u8) -> f64 {
        match self {
            Decision::Threshold(_) => score,
            Decision::Roc(b) => b.relaxed_score(score, group),
            Decision::Ceo(m) => m.mixed_score(score, group),
            Decision::Groups(t) => t.relaxed_score(score, group),
        }
    }

    /// Threshold that turns the explained score into the stage's decision.
    fn explained_threshold(&self) -> f64 {
        match self {
            Decision::Threshold(t) => *t,
            Decision::Roc(b) => b.threshold,
            Decision::Ceo(m) => m.threshold,
            Decision::Groups(_) => 0.5,
        }
    }

    fn predict(&self, scores: &[f64], groups: &[u8]) -> Result<Vec<u8>> {
        Ok(match self {
            Decision::Threshold(t) => apply_threshold(scores, &crate::thresholding::ThresholdRule::new(*t)?),
            Decision::Roc(b) => roc_apply(scores, groups, b),
            Decision::Ceo(m) => ceodds_apply(scores, groups, m),
            Decision::Groups(t) => threshopt_apply(scores, groups, t),
        })
    }
}

struct ModelRun<'a> {
    cfg: &'a PipelineConfig,
    data: &'a PreparedData,
    name: String,
    reports: Vec<StageReport>,
    traces: Vec<StageTrace>,
}

impl ModelRun<'_> {
    fn explain(&self, scorer: &Scorer, decision: Decision) -> Result<Vec<ExplanationRecord>> {
        let test = &self.data.test;
        let lime = self.cfg.explain.lime();
        let names = test.feature_names();
        let col = self.data.protected_col;
        self.data
            .instance_rows
            .par_iter()
            .zip(&self.data.instance_ids)
            .map(|(&r, &id)| {
                let fallback = test.protected()[r];
                let f = |x: &Matrix| -> Vec<f64> {
                    let s = scorer.score(x);
                    s.iter()
                        .enumerate()
                        .map(|(i, &v)| {
                            let g = col.map_or(fallback, |c| u8::from(x.get(i, c) >= 0.5));
                            decision.explained(v, g)
                        })
                        .collect()
                };
                let row = test.features().row(r);
                let e = lime_explain(&f, row, id, &self.data.stats, &lime, instance_seed(self.cfg.seed, id))?;
                let fs = faithfulness(&f, row, &e, names, &self.data.stats.means, decision.explained_threshold())?;
                Ok(ExplanationRecord {
                    instance: id,
                    features: e.features,
                    intercept: e.intercept,
                    r2: e.r2,
                    faithfulness: fs.value,
                })
            })
            .collect()
    }

    /// Tunes a threshold on validation scores (unless `post` decides) and reports on test.
    fn report(
        &mut self,
        stage: &str,
        scorer: &Scorer,
        post: Option<Decision>,
        params: Value,
        fitted: Value,
        flags: Vec<String>,
    ) -> Result<f64> {
        let (valid, test) = (&self.data.valid, &self.data.test);
        let valid_scores = scorer.score(valid.features());
        let raw_test = scorer.score(test.features());
        let (decision, threshold) = match post {
            Some(d) => (d, None),
            None => {
                let rule = tune_threshold(&valid_scores, valid.labels(), &default_grid())?;
                (Decision::Threshold(rule.threshold), Some(rule.threshold))
            }
        };
        let preds = decision.predict(&raw_test, test.protected())?;
        let test_scores: Vec<f64> =
            raw_test.iter().zip(test.protected()).map(|(&s, &g)| decision.explained(s, g)).collect();
        let metrics = MetricBundle::compute(&preds, &test_scores, test.labels(), test.protected())?;
        let explanations = self.explain(scorer, decision)?;
        let defined: Vec<f64> = explanations.iter().filter_map(|e| e.faithfulness).collect();
        let mean_faithfulness = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        self.reports.push(StageReport {
            model: self.name.clone(),
            stage: stage.to_string(),
            metrics,
            threshold: threshold.map_or(ThresholdRecord::Internal(Marker::StageInternal), ThresholdRecord::Tuned),
            params,
            fitted,
            flags,
            explanations,
            mean_faithfulness,
        });
        self.traces.push(StageTrace {
            model: self.name.clone(),
            stage: stage.to_string(),
            valid_scores,
            test_scores,
            test_preds: preds,
            threshold,
        });
        Ok(decision.explained_threshold())
    }

    fn run(&mut self, spec: &ModelSpec) -> Option<StageError> {
        let mut stage = "base".to_string();
        let mut prefix: Vec<&str> = Vec::new();
        let result = (|| -> Result<()> {
            let mut train = self.data.train.clone();
            let mut scorer =
                Scorer { lfr: None, model: spec.fit_weighted(train.features(), train.labels(), train.weights())? };
            let mut threshold = self.report("base", &scorer, None, Value::Null, Value::Null, vec![])?;

            if let Some(pre) = &self.cfg.pre {
                prefix.push("pre");
                stage = prefix.join("+");
                let (params, fitted) = match pre {
                    PreStage::Reweighing => {
                        let r = reweigh(&train)?;
                        train = r.dataset;
                        (Value::Null, json!({ "cell_weights": r.cell_weights }))
                    }
                    PreStage::Lfr(p) => {
                        let mut p2 = *p;
                        p2.seed = p.seed ^ self.cfg.seed;
                        let lfr = lfr_fit(&train, &p2)?;
                        train = lfr_apply(&lfr, &train, p.relabel)?;
                        let fitted = json!({
                            "iterations": lfr.iterations,
                            "final_loss": lfr.final_loss,
                        });
                        scorer.lfr = Some(Arc::new(lfr));
                        (serde_json::to_value(p)?, fitted)
                    }
                };
                scorer.model = spec.fit_weighted(train.features(), train.labels(), train.weights())?;
                threshold = self.report(&stage, &scorer, None, params, fitted, vec![])?;
            }

            if let Some(inp) = &self.cfg.inproc {
                prefix.push("in");
                stage = prefix.join("+");
                let model: ReductionModel = match &inp.method {
                    InMethod::ExpGrad(p) => expgrad_fit(spec, &train, inp.constraint, p)?,
                    InMethod::GridSearch(p) => gridsearch_fit(spec, &train, inp.constraint, p)?,
                };
                let fitted = match &inp.method {
                    InMethod::ExpGrad(_) => {
                        let last = model.rounds.last().expect("at least one round");
                        json!({ "rounds": model.rounds.len(), "final_violation": last.violation, "final_multipliers": last.multipliers })
                    }
                    InMethod::GridSearch(_) => {
                        let sel = model.selected.expect("grid search selects");
                        let c = &model.candidates[sel];
                        json!({ "candidates": model.candidates.len(), "selected_multipliers": c.multipliers, "train_error": c.error, "train_violation": c.violation })
                    }
                };
                let flags = if model.infeasible { vec!["infeasible_fallback".to_string()] } else { vec![] };
                let params = serde_json::to_value(inp)?;
                scorer.model = Arc::new(model);
                threshold = self.report(&stage, &scorer, None, params, fitted, flags)?;
            }

            if let Some(post) = &self.cfg.post {
                prefix.push("post");
                stage = prefix.join("+");
                let valid = &self.data.valid;
                let vs = scorer.score(valid.features());
                let (decision, flags, params, fitted) = match post {
                    PostStage::Roc(p) => {
                        let b = roc_fit(&vs, valid.labels(), valid.protected(), p)?;
                        let flags = if b.infeasible { vec!["infeasible_fallback".to_string()] } else { vec![] };
                        (Decision::Roc(b), flags, serde_json::to_value(p)?, serde_json::to_value(b)?)
                    }
                    PostStage::Ceodds(p) => {
                        let m = ceodds_fit(&vs, valid.labels(), valid.protected(), threshold, p)?;
                        let flags = if m.calibration_warning { vec!["calibration_warning".to_string()] } else { vec![] };
                        (Decision::Ceo(m), flags, serde_json::to_value(p)?, serde_json::to_value(m)?)
                    }
                    PostStage::ThreshOptim(p) => {
                        let t = threshopt_fit(&vs, valid.labels(), valid.protected(), p)?;
                        let flags = if t.infeasible { vec!["infeasible_fallback".to_string()] } else { vec![] };
                        (Decision::Groups(t), flags, serde_json::to_value(p)?, serde_json::to_value(t)?)
                    }
                };
                self.report(&stage, &scorer, Some(decision), params, fitted, flags)?;
            }
            Ok(())
        })();
        result.err().map(|e| {
            if let Some(last) = self.reports.last_mut() {
                last.flags.push(format!("aborted: {stage} failed"));
            }
            StageError { model: self.name.clone(), stage, message: e.to_string() }
        })
    }
}

/// Report names: the model kind, suffixed with its position when a kind repeats.
pub fn model_names(models: &[ModelSpec]) -> Vec<String> {
    models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let name = m.kind().name();
            if models.iter().filter(|o| o.kind() == m.kind()).count() > 1 {
                format!("{name}#{}", i + 1)
            } else {
                name.to_string()
            }
        })
        .collect()
}

/// Choices outside the configuration that shape every run.
pub fn declared_defaults() -> Value {
    json!({
        "threshold_grid": "0.01..0.99 step 0.01",
        "threshold_objective": "validation balanced accuracy",
        "post_fit_split": "valid",
        "roc_metric": "di",
        "explained_function": "stage score; post stages clamp scores to 0/1 where their decision differs",
        "faithfulness_drop": "predicted-class score after replacing the feature with its training mean",
        "lime_kernel_width_default": "0.75 * sqrt(d)",
        "standardization": "continuous columns, fitted on train",
    })
}

pub fn run_id(config_echo: &Value) -> String {
    let digest = Sha256::digest(config_echo.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Runs every configured model through the staged pipeline. Data errors
/// fail the run; stage errors abort only that model and are listed in the report.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput> {
    let data = prepare_data(cfg)?;
    let names = model_names(&cfg.models);
    let runs: Vec<(Vec<StageReport>, Vec<StageTrace>, Option<StageError>)> = cfg
        .models
        .par_iter()
        .zip(names.par_iter())
        .map(|(spec, name)| {
            let mut mr = ModelRun { cfg, data: &data, name: name.clone(), reports: vec![], traces: vec![] };
            let err = mr.run(spec);
            (mr.reports, mr.traces, err)
        })
        .collect();
    let config_echo = serde_json::to_value(cfg)?;
    let mut report = RunReport {
        run_id: run_id(&config_echo),
        config_echo,
        declared: declared_defaults(),
        explanation_instances: data.instance_ids.clone(),
        reports: vec![],
        errors: vec![],
    };
    let mut traces = Vec::new();
    for (r, t, e) in runs {
        report.reports.extend(r);
        traces.extend(t);
        report.errors.extend(e);
    }
    Ok(RunOutput { report, traces, data })
}

/// [`run_pipeline`] on a dedicated pool of `jobs` threads (`None`: available parallelism).
pub fn run_pipeline_with_jobs(cfg: &PipelineConfig, jobs: Option<usize>) -> Result<RunOutput> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_pipeline(cfg))
}
