use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training, derive_seed, Features, ModelKind, Params, TrainedModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Defaults to `⌈p/3⌉`.
    pub features_per_split: Option<usize>,
    /// Draw a bootstrap resample per tree; off uses every row once.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: Some(8),
            min_leaf: 5,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf == 0 || self.features_per_split == Some(0) {
            return Err(Error::InvalidInput(
                "forest tree count, leaf size and features per split must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Regression tree in an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    /// Bootstrap row indices the tree was grown on.
    pub sample: Vec<usize>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    /// `(feature, threshold)` of the root, if it splits.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match &self.nodes[0] {
            Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            Node::Leaf(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}

struct Grower<'a> {
    rows: &'a [Vec<f64>],
    y: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    /// Reduction in summed squared error.
    gain: f64,
}

impl Grower<'_> {
    fn mean(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64
    }

    /// Best variance-reducing split on one feature that leaves at least
    /// `min_leaf` rows on each side.
    fn best_on(&self, idx: &mut [usize], feature: usize) -> Option<BestSplit> {
        let n = idx.len();
        idx.sort_by(|&a, &b| self.rows[a][feature].total_cmp(&self.rows[b][feature]).then(a.cmp(&b)));
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let mut left_sum = 0.0;
        let mut best: Option<BestSplit> = None;
        let base = total * total / n as f64;
        for k in 1..n {
            left_sum += self.y[idx[k - 1]];
            let (lo, hi) = (self.rows[idx[k - 1]][feature], self.rows[idx[k]][feature]);
            if k < self.min_leaf || n - k < self.min_leaf || lo == hi {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64 - base;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                let mid = lo + (hi - lo) / 2.0;
                // guard against the midpoint rounding onto the upper value
                let threshold = if mid < hi { mid } else { lo };
                best = Some(BestSplit {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
        best.filter(|b| b.gain > 1e-12 * (1.0 + base.abs()))
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let slot = self.nodes.len();
        let constant = idx.iter().all(|&i| self.y[i] == self.y[idx[0]]);
        let value = if constant { self.y[idx[0]] } else { self.mean(idx) };
        self.nodes.push(Node::Leaf(value));
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf || constant {
            return slot;
        }
        let p = self.rows[0].len();
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(rng);
        let mut best: Option<BestSplit> = None;
        for (tried, &f) in order.iter().enumerate() {
            // past the sampled subset, keep looking only until a valid split appears
            if tried >= self.mtry && best.is_some() {
                break;
            }
            if let Some(s) = self.best_on(idx, f) {
                if best.as_ref().is_none_or(|b| s.gain > b.gain) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else {
            return slot;
        };
        let mut left: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| self.rows[i][split.feature] <= split.threshold)
            .collect();
        let mut right: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| self.rows[i][split.feature] > split.threshold)
            .collect();
        let l = self.grow(&mut left, depth + 1, rng);
        let r = self.grow(&mut right, depth + 1, rng);
        self.nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        slot
    }
}

fn grow_tree(x: &Features, y: &[f64], cfg: &ForestConfig, seed: u64) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = y.len();
    let mut sample: Vec<usize> = if cfg.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let p = x.n_cols();
    let mut grower = Grower {
        rows: x.rows(),
        y,
        max_depth: cfg.max_depth.unwrap_or(usize::MAX),
        min_leaf: cfg.min_leaf,
        mtry: cfg.features_per_split.unwrap_or(p.div_ceil(3)).min(p),
        nodes: Vec::new(),
    };
    let mut idx = sample.clone();
    grower.grow(&mut idx, 0, &mut rng);
    sample.sort_unstable();
    Tree {
        nodes: grower.nodes,
        sample,
    }
}

/// Bagged CART regression trees; tree `k` draws from its own derived seed,
/// so results do not depend on the thread schedule.
pub fn train_forest(x: &Features, y: &[f64], cfg: &ForestConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    check_training(x, y, 2)?;
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|k| grow_tree(x, y, cfg, derive_seed(cfg.seed, &[k as u64])))
        .collect();
    Ok(TrainedModel {
        kind: ModelKind::Forest,
        params: Params::Forest(Forest { trees }),
        feature_names: x.names().to_vec(),
        train_months: None,
    })
}
