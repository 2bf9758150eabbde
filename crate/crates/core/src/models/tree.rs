use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_fit_inputs, ModelKind, ScoredClassifier};
use crate::error::Result;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum leaf weight as a fraction of the total training weight.
    pub min_leaf_fraction: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 5, min_leaf_fraction: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf { score: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// CART tree grown greedily on weighted Gini impurity.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

impl ScoredClassifier for DecisionTree {
    fn kind(&self) -> ModelKind {
        ModelKind::DecisionTree
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { score } => return score,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

pub fn fit_tree(x: &Matrix, labels: &[u8], weights: &[f64], p: &TreeParams) -> Result<DecisionTree> {
    check_fit_inputs(x, labels, weights)?;
    Ok(grow(x, labels, weights, p, None::<(&mut rand_chacha::ChaCha8Rng, usize)>))
}

fn gini(pos: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let q = pos / total;
    2.0 * q * (1.0 - q)
}

struct Builder<'a, R> {
    x: &'a Matrix,
    labels: &'a [u8],
    weights: &'a [f64],
    max_depth: usize,
    min_leaf: f64,
    subsample: Option<(&'a mut R, usize)>,
    nodes: Vec<Node>,
}

/// Grows a tree; `subsample = Some((rng, k))` draws `k` candidate features per split.
pub(crate) fn grow<R: Rng>(
    x: &Matrix,
    labels: &[u8],
    weights: &[f64],
    p: &TreeParams,
    subsample: Option<(&mut R, usize)>,
) -> DecisionTree {
    let total: f64 = weights.iter().sum();
    let idx: Vec<usize> = (0..labels.len()).filter(|&i| weights[i] > 0.0).collect();
    let mut b = Builder {
        x,
        labels,
        weights,
        max_depth: p.max_depth,
        min_leaf: p.min_leaf_fraction * total,
        subsample,
        nodes: Vec::new(),
    };
    b.build(idx, 0);
    DecisionTree { nodes: b.nodes }
}

impl<R: Rng> Builder<'_, R> {
    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let (pos, tot) = idx.iter().fold((0.0, 0.0), |(p, t), &i| {
            (p + self.weights[i] * f64::from(self.labels[i]), t + self.weights[i])
        });
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { score: if tot > 0.0 { pos / tot } else { 0.5 } });
        if depth >= self.max_depth || pos <= 0.0 || pos >= tot {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&idx, pos, tot) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x.get(i, feature) <= threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.ncols();
        match self.subsample.as_mut() {
            Some((rng, k)) if *k < d => {
                let mut f = sample(*rng, d, *k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, idx: &[usize], pos: f64, tot: f64) -> Option<(usize, f64)> {
        let parent = tot * gini(pos, tot);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for j in self.candidate_features() {
            order.sort_by(|&a, &b| self.x.get(a, j).total_cmp(&self.x.get(b, j)));
            let (mut lp, mut lt) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let i = order[k];
                lp += self.weights[i] * f64::from(self.labels[i]);
                lt += self.weights[i];
                let (v, next) = (self.x.get(i, j), self.x.get(order[k + 1], j));
                if v == next {
                    continue;
                }
                let rt = tot - lt;
                if lt < self.min_leaf || rt < self.min_leaf {
                    continue;
                }
                let gain = parent - lt * gini(lp, lt) - rt * gini(pos - lp, rt);
                if best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                    best = Some((gain, j, 0.5 * (v + next)));
                }
            }
        }
        best.filter(|(g, _, _)| *g >= -1e-12).map(|(_, j, t)| (j, t))
    }
}
