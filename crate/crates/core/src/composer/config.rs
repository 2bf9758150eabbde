//! YAML pipeline configuration: parsing, normalization and composition checks.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{CsvSchema, SplitSpec, SynthSpec};
use crate::error::{Error, Result};
use crate::explain::LimeParams;
use crate::mitigation::inproc::{ConstraintKind, ExpGradParams, GridSearchParams};
use crate::mitigation::post::{CeoParams, RocParams, ThreshOptParams};
use crate::mitigation::pre::LfrParams;
use crate::models::ModelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetConfig {
    Csv { path: PathBuf, schema: CsvSchema },
    Synth(SynthSpec),
}

impl DatasetConfig {
    /// Name given to the protected indicator when it is appended as a feature.
    pub fn protected_name(&self) -> &str {
        match self {
            DatasetConfig::Csv { schema, .. } => &schema.protected,
            DatasetConfig::Synth(_) => "group",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum PreStage {
    Reweighing,
    Lfr(LfrParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum InMethod {
    ExpGrad(ExpGradParams),
    GridSearch(GridSearchParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InStage {
    pub method: InMethod,
    pub constraint: ConstraintKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum PostStage {
    Roc(RocParams),
    Ceodds(CeoParams),
    ThreshOptim(ThreshOptParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub count: usize,
    pub samples: usize,
    pub kernel_width: Option<f64>,
    pub top_k: usize,
    pub ridge: f64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        let l = LimeParams::default();
        Self { count: 10, samples: l.num_samples, kernel_width: l.kernel_width, top_k: l.top_k, ridge: l.ridge }
    }
}

impl ExplainConfig {
    pub fn lime(&self) -> LimeParams {
        LimeParams { num_samples: self.samples, kernel_width: self.kernel_width, top_k: self.top_k, ridge: self.ridge }
    }
}

/// Validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dataset: DatasetConfig,
    pub splits: SplitSpec,
    pub models: Vec<ModelSpec>,
    pub pre: Option<PreStage>,
    #[serde(rename = "in")]
    pub inproc: Option<InStage>,
    pub post: Option<PostStage>,
    pub explain: ExplainConfig,
    pub seed: u64,
    pub include_protected: bool,
}

impl PipelineConfig {
    pub fn stage_count(&self) -> usize {
        usize::from(self.pre.is_some()) + usize::from(self.inproc.is_some()) + usize::from(self.post.is_some())
    }

    /// Resolves a relative dataset path against `dir` (usually the config file's directory).
    pub fn resolve_paths(&mut self, dir: &Path) {
        if let DatasetConfig::Csv { path, .. } = &mut self.dataset {
            if path.is_relative() {
                *path = dir.join(&*path);
            }
        }
    }

    /// Normalized configuration with all defaults, as YAML.
    pub fn normalized_yaml(&self) -> Result<String> {
        serde_yaml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Replaces the run seed; splits that inherited the run seed follow it.
    pub fn override_seed(&mut self, seed: u64, splits_follow: bool) {
        self.seed = seed;
        if splits_follow {
            self.splits.seed = seed;
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dataset: RawDataset,
    #[serde(default)]
    splits: Option<RawSplits>,
    models: Vec<RawModel>,
    #[serde(default)]
    pipeline: RawPipeline,
    #[serde(default)]
    explain: ExplainConfig,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_true")]
    include_protected: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    path: Option<PathBuf>,
    schema: Option<CsvSchema>,
    synth: Option<SynthSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplits {
    train: f64,
    valid: f64,
    test: f64,
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: String,
    #[serde(default)]
    params: Value,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPipeline {
    pre: Option<Value>,
    #[serde(rename = "in")]
    inproc: Option<Value>,
    post: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    name: String,
    constraint: Option<ConstraintKind>,
    #[serde(default)]
    params: Value,
}

/// Whether the splits seed was left to follow the run seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: PipelineConfig,
    pub splits_follow_seed: bool,
}

pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    parse_config_detailed(text).map(|p| p.config)
}

pub fn parse_config_detailed(text: &str) -> Result<ParsedConfig> {
    let raw: RawConfig = serde_yaml::from_str(text).map_err(|e| {
        let msg = e.to_string();
        if ["pre", "in", "post"].iter().any(|s| msg.contains(&format!("duplicate field `{s}`"))) {
            Error::Composition(format!("at most one intervention per stage class: {msg}"))
        } else {
            Error::Config(msg)
        }
    })?;

    let dataset = match (raw.dataset.path, raw.dataset.schema, raw.dataset.synth) {
        (Some(path), Some(schema), None) => DatasetConfig::Csv { path, schema },
        (None, None, Some(s)) => {
            if s.n < 100 || s.d < 2 || !(s.gap.abs() <= 1.0) || !(s.noise >= 0.0) {
                return Err(Error::Config(format!(
                    "dataset.synth: need n >= 100, d >= 2, |gap| <= 1, noise >= 0 (got n={}, d={}, gap={}, noise={})",
                    s.n, s.d, s.gap, s.noise
                )));
            }
            DatasetConfig::Synth(s)
        }
        (Some(_), None, _) => return Err(Error::Config("dataset.schema is required with dataset.path".into())),
        _ => return Err(Error::Config("dataset needs either `path` + `schema` or `synth`".into())),
    };

    let (splits, splits_follow_seed) = match raw.splits {
        None => (SplitSpec { seed: raw.seed, ..SplitSpec::default() }, true),
        Some(s) => {
            let follow = s.seed.is_none();
            (SplitSpec { train: s.train, valid: s.valid, test: s.test, seed: s.seed.unwrap_or(raw.seed) }, follow)
        }
    };
    splits.validate().map_err(|e| Error::Config(format!("splits: {e}")))?;

    if raw.models.is_empty() {
        return Err(Error::Config("models: at least one model is required".into()));
    }
    let models = raw
        .models
        .into_iter()
        .map(|m| ModelSpec::from_kind_and_params(&m.kind, m.params))
        .collect::<Result<Vec<_>>>()?;

    let pre = raw.pipeline.pre.map(|v| single_stage("pre", v)).transpose()?.map(pre_stage).transpose()?;
    let inproc = raw.pipeline.inproc.map(|v| single_stage("in", v)).transpose()?.map(in_stage).transpose()?;
    let post = raw.pipeline.post.map(|v| single_stage("post", v)).transpose()?.map(post_stage).transpose()?;

    if let (Some(i), Some(PostStage::Roc(_))) = (&inproc, &post) {
        if i.constraint == ConstraintKind::EqualizedOdds {
            return Err(Error::Compatibility(
                "ROC scores disparate impact, so the in-processing constraint must be demographic_parity, not equalized_odds"
                    .into(),
            ));
        }
    }
    if raw.explain.count > 0 && (raw.explain.samples < 2 || raw.explain.top_k == 0) {
        return Err(Error::Config("explain: samples must be >= 2 and top_k >= 1".into()));
    }

    Ok(ParsedConfig {
        config: PipelineConfig {
            dataset,
            splits,
            models,
            pre,
            inproc,
            post,
            explain: raw.explain,
            seed: raw.seed,
            include_protected: raw.include_protected,
        },
        splits_follow_seed,
    })
}

fn single_stage(class: &str, v: Value) -> Result<RawStage> {
    let v = match v {
        Value::Array(mut items) => {
            if items.len() != 1 {
                return Err(Error::Composition(format!(
                    "pipeline.{class}: at most one intervention per stage class, got {}",
                    items.len()
                )));
            }
            items.remove(0)
        }
        Value::String(name) => return Ok(RawStage { name, constraint: None, params: Value::Null }),
        other => other,
    };
    serde_json::from_value(v).map_err(|e| Error::Config(format!("pipeline.{class}: {e}")))
}

fn normalize(name: &str) -> String {
    name.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase()
}

fn params<T: serde::de::DeserializeOwned + Default>(class: &str, v: Value) -> Result<T> {
    if v.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(v).map_err(|e| Error::Config(format!("pipeline.{class}.params: {e}")))
}

fn no_constraint(class: &str, s: &RawStage) -> Result<()> {
    if s.constraint.is_some() {
        return Err(Error::Config(format!("pipeline.{class}: `{}` takes no constraint", s.name)));
    }
    Ok(())
}

fn pre_stage(s: RawStage) -> Result<PreStage> {
    no_constraint("pre", &s)?;
    match normalize(&s.name).as_str() {
        "rew" | "reweighing" => {
            if !s.params.is_null() && s.params.as_object().is_none_or(|m| !m.is_empty()) {
                return Err(Error::Config("pipeline.pre.params: reweighing takes no parameters".into()));
            }
            Ok(PreStage::Reweighing)
        }
        "lfr" | "learningfairrepresentations" => {
            let p: LfrParams = params("pre", s.params)?;
            if p.k == 0 || p.max_iters == 0 || !(p.temperature > 0.0) {
                return Err(Error::Config("pipeline.pre.params: LFR needs k, max_iters and temperature > 0".into()));
            }
            Ok(PreStage::Lfr(p))
        }
        _ => Err(Error::Config(format!("pipeline.pre: unknown pre-processor `{}`", s.name))),
    }
}

fn in_stage(s: RawStage) -> Result<InStage> {
    let constraint = s.constraint.unwrap_or(ConstraintKind::DemographicParity);
    let method = match normalize(&s.name).as_str() {
        "expgrad" | "exponentiatedgradient" => {
            let p: ExpGradParams = params("in", s.params)?;
            if p.max_rounds == 0 || !(p.bound > 0.0) || !(p.step_size > 0.0) || !(p.eps >= 0.0) {
                return Err(Error::Config(
                    "pipeline.in.params: expgrad needs max_rounds >= 1, bound > 0, step_size > 0, eps >= 0".into(),
                ));
            }
            InMethod::ExpGrad(p)
        }
        "gridsearch" | "gridsearchreduction" => {
            let p: GridSearchParams = params("in", s.params)?;
            if p.grid.is_empty() || !(p.eps >= 0.0) {
                return Err(Error::Config("pipeline.in.params: grid search needs a nonempty grid and eps >= 0".into()));
            }
            InMethod::GridSearch(p)
        }
        _ => return Err(Error::Config(format!("pipeline.in: unknown in-processor `{}`", s.name))),
    };
    Ok(InStage { method, constraint })
}

fn post_stage(s: RawStage) -> Result<PostStage> {
    match normalize(&s.name).as_str() {
        "roc" | "rejectoptionclassification" => {
            no_constraint("post", &s)?;
            let p: RocParams = params("post", s.params)?;
            if p.thresholds.is_empty() || p.margins.is_empty() || !(p.di_low <= p.di_high) {
                return Err(Error::Config("pipeline.post.params: ROC needs nonempty grids and di_low <= di_high".into()));
            }
            if p.margins.iter().any(|m| !(0.0..0.5).contains(m)) || p.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return Err(Error::Config("pipeline.post.params: ROC margins must lie in [0, 0.5), thresholds in [0, 1]".into()));
            }
            Ok(PostStage::Roc(p))
        }
        "ceodds" | "calibratedeqodds" | "calibratedequalizedodds" => {
            no_constraint("post", &s)?;
            let p: CeoParams = params("post", s.params)?;
            if !(0.0..=1.0).contains(&p.fnr_weight) || !(p.cost_tol >= 0.0) {
                return Err(Error::Config("pipeline.post.params: CEOdds needs fnr_weight in [0, 1] and cost_tol >= 0".into()));
            }
            Ok(PostStage::Ceodds(p))
        }
        "threshoptim" | "thresholdoptimizer" => {
            let mut p: ThreshOptParams = params("post", s.params)?;
            if let Some(c) = s.constraint {
                p.constraint = c;
            }
            if !(p.tol >= 0.0) {
                return Err(Error::Config("pipeline.post.params: ThreshOptim tol must be >= 0".into()));
            }
            Ok(PostStage::ThreshOptim(p))
        }
        _ => Err(Error::Config(format!("pipeline.post: unknown post-processor `{}`", s.name))),
    }
}
