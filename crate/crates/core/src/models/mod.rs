//! Weighted binary classifiers sharing the [`ScoredClassifier`] contract.
//!
//! A classifier only exists once it has been fitted: each `fit` returns a
//! model value, so scoring an unfitted model is unrepresentable.

mod forest;
mod logistic;
mod naive_bayes;
mod tree;

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use forest::{fit_forest, ForestModel, ForestParams};
pub(crate) use logistic::sigmoid;
pub use logistic::{fit_logistic, logistic_objective, LogisticModel, LogisticParams};
pub use naive_bayes::{fit_gnb, NaiveBayesModel, NaiveBayesParams};
pub use tree::{fit_tree, DecisionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LogisticRegression,
    DecisionTree,
    NaiveBayes,
    RandomForest,
    Constant,
    Mixture,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::NaiveBayes => "naive_bayes",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Constant => "constant",
            ModelKind::Mixture => "mixture",
        }
    }
}

/// A fitted model emitting per-row scores in `[0, 1]`.
pub trait ScoredClassifier: Debug + Send + Sync {
    fn kind(&self) -> ModelKind;

    fn score_row(&self, row: &[f64]) -> f64;

    fn score(&self, x: &Matrix) -> Vec<f64> {
        x.rows_iter().map(|r| self.score_row(r)).collect()
    }
}

pub type SharedClassifier = Arc<dyn ScoredClassifier>;

/// Model kind plus hyperparameters; acts as the factory reductions fit repeatedly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ModelSpec {
    LogisticRegression(LogisticParams),
    DecisionTree(TreeParams),
    NaiveBayes(NaiveBayesParams),
    RandomForest(ForestParams),
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::LogisticRegression(_) => ModelKind::LogisticRegression,
            ModelSpec::DecisionTree(_) => ModelKind::DecisionTree,
            ModelSpec::NaiveBayes(_) => ModelKind::NaiveBayes,
            ModelSpec::RandomForest(_) => ModelKind::RandomForest,
        }
    }

    /// Parses a kind name (with common aliases) and its parameter map; unknown keys are rejected.
    pub fn from_kind_and_params(kind: &str, params: serde_json::Value) -> Result<Self> {
        let params = if params.is_null() { serde_json::Value::Object(Default::default()) } else { params };
        let bad = |e: serde_json::Error| Error::Config(format!("models[{kind}].params: {e}"));
        Ok(match kind {
            "logistic_regression" | "logistic" | "lr" => {
                ModelSpec::LogisticRegression(serde_json::from_value(params).map_err(bad)?)
            }
            "decision_tree" | "tree" | "dt" => ModelSpec::DecisionTree(serde_json::from_value(params).map_err(bad)?),
            "naive_bayes" | "gaussian_nb" | "nb" => ModelSpec::NaiveBayes(serde_json::from_value(params).map_err(bad)?),
            "random_forest" | "forest" | "rf" => ModelSpec::RandomForest(serde_json::from_value(params).map_err(bad)?),
            other => return Err(Error::Config(format!("unknown model kind `{other}`"))),
        })
    }

    pub fn params_json(&self) -> serde_json::Value {
        match serde_json::to_value(self) {
            Ok(serde_json::Value::Object(mut m)) => m.remove("params").unwrap_or_default(),
            _ => serde_json::Value::Null,
        }
    }

    /// Fits on possibly zero-weighted rows. A single effective class yields a constant model.
    pub fn fit_weighted(&self, x: &Matrix, labels: &[u8], weights: &[f64]) -> Result<SharedClassifier> {
        check_fit_inputs(x, labels, weights)?;
        Ok(match self {
            ModelSpec::LogisticRegression(p) => Arc::new(fit_logistic(x, labels, weights, p)?),
            ModelSpec::DecisionTree(p) => Arc::new(fit_tree(x, labels, weights, p)?),
            ModelSpec::NaiveBayes(p) => Arc::new(fit_gnb(x, labels, weights, p)?),
            ModelSpec::RandomForest(p) => Arc::new(fit_forest(x, labels, weights, p)?),
        })
    }

    /// Like [`fit_weighted`](Self::fit_weighted) but a single-class target
    /// becomes a constant scorer instead of an error.
    pub fn fit_or_constant(&self, x: &Matrix, labels: &[u8], weights: &[f64]) -> Result<SharedClassifier> {
        let [w0, w1] = class_weights(labels, weights);
        if w0 > 0.0 && w1 > 0.0 {
            self.fit_weighted(x, labels, weights)
        } else {
            Ok(Arc::new(ConstantModel { value: if w1 > 0.0 { 1.0 } else { 0.0 } }))
        }
    }
}

pub(crate) fn class_weights(labels: &[u8], weights: &[f64]) -> [f64; 2] {
    let mut w = [0.0; 2];
    for (&y, &wi) in labels.iter().zip(weights) {
        w[y as usize] += wi;
    }
    w
}

pub(crate) fn check_fit_inputs(x: &Matrix, labels: &[u8], weights: &[f64]) -> Result<()> {
    if x.nrows() != labels.len() || labels.len() != weights.len() {
        return Err(Error::Fit("features, labels and weights differ in length".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Fit("weights must be finite and nonnegative".into()));
    }
    let [w0, w1] = class_weights(labels, weights);
    if w0 <= 0.0 || w1 <= 0.0 {
        return Err(Error::Fit("both classes need positive total weight".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantModel {
    pub value: f64,
}

impl ScoredClassifier for ConstantModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Constant
    }

    fn score_row(&self, _row: &[f64]) -> f64 {
        self.value
    }
}
