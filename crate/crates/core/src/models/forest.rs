use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, DecisionTree, TreeParams};
use super::{check_fit_inputs, ModelKind, ScoredClassifier};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub tree_count: usize,
    pub max_depth: usize,
    pub min_leaf_fraction: f64,
    pub bootstrap: bool,
    /// Candidate features per split; `None` means floor(sqrt(d)).
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { tree_count: 50, max_depth: 5, min_leaf_fraction: 0.01, bootstrap: true, max_features: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<DecisionTree>,
}

impl ForestModel {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }
}

impl ScoredClassifier for ForestModel {
    fn kind(&self) -> ModelKind {
        ModelKind::RandomForest
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.score_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

pub fn fit_forest(x: &Matrix, labels: &[u8], weights: &[f64], p: &ForestParams) -> Result<ForestModel> {
    check_fit_inputs(x, labels, weights)?;
    if p.tree_count == 0 {
        return Err(Error::Fit("random forest needs at least one tree".into()));
    }
    let d = x.ncols();
    let k = p.max_features.unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1)).clamp(1, d.max(1));
    let tree_params = TreeParams { max_depth: p.max_depth, min_leaf_fraction: p.min_leaf_fraction };
    let sampler = WeightedIndex::new(weights).map_err(|e| Error::Fit(format!("bootstrap weights: {e}")))?;
    let n = labels.len();

    let trees = (0..p.tree_count)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(t as u64));
            let w = if p.bootstrap {
                let mut counts = vec![0.0; n];
                for _ in 0..n {
                    counts[sampler.sample(&mut rng)] += 1.0;
                }
                counts
            } else {
                weights.to_vec()
            };
            grow(x, labels, &w, &tree_params, Some((&mut rng, k)))
        })
        .collect();
    Ok(ForestModel { trees })
}
