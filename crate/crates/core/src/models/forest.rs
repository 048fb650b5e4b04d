use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureVector, FEATURE_COUNT};

use super::{BinaryClassifier, Dataset, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Tree `i` draws its bootstrap sample and feature subsets from
    /// `bootstrap_seed + i`.
    pub bootstrap_seed: u64,
    /// Features examined per split; `None` means `ceil(sqrt(37))`.
    #[serde(default)]
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 12,
            min_samples_leaf: 2,
            bootstrap_seed: 0,
            max_features: None,
        }
    }
}

/// `ceil(sqrt(37))`.
pub const DEFAULT_MAX_FEATURES: usize = 7;

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.n_trees == 0 {
            return bad("n_trees must be positive");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be positive");
        }
        if matches!(self.max_features, Some(0)) || self.max_features.is_some_and(|m| m > FEATURE_COUNT) {
            return bad("max_features must be in 1..=37");
        }
        Ok(())
    }

    fn features_per_split(&self) -> usize {
        self.max_features.unwrap_or(DEFAULT_MAX_FEATURES)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] < threshold` go left.
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf { positive_fraction: f64 },
}

impl TreeNode {
    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn check(&self) -> Result<(), String> {
        match self {
            TreeNode::Leaf { positive_fraction } => {
                if (0.0..=1.0).contains(positive_fraction) {
                    Ok(())
                } else {
                    Err(format!("leaf fraction {positive_fraction} outside [0,1]"))
                }
            }
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= FEATURE_COUNT {
                    return Err(format!("feature index {feature} out of range"));
                }
                if !threshold.is_finite() {
                    return Err("non-finite threshold".into());
                }
                left.check()?;
                right.check()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
}

impl DecisionTree {
    pub fn leaf(positive_fraction: f64) -> Self {
        DecisionTree {
            root: TreeNode::Leaf { positive_fraction },
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { positive_fraction } => return *positive_fraction,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub trees: Vec<DecisionTree>,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub bootstrap_seed: u64,
}

impl RandomForestModel {
    /// Mean leaf fraction over all trees; 0.5 for an empty forest.
    pub fn predict_proba(&self, x: &FeatureVector) -> f64 {
        if self.trees.is_empty() {
            return 0.5;
        }
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn push_tree(&mut self, tree: DecisionTree) {
        self.trees.push(tree);
        self.n_trees = self.trees.len();
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_trees != self.trees.len() {
            return Err(format!("n_trees {} but {} trees", self.n_trees, self.trees.len()));
        }
        for (i, t) in self.trees.iter().enumerate() {
            t.root.check().map_err(|e| format!("tree {i}: {e}"))?;
            if t.depth() > self.max_depth {
                return Err(format!("tree {i} deeper than max_depth {}", self.max_depth));
            }
        }
        Ok(())
    }
}

impl BinaryClassifier for RandomForestModel {
    fn predict_proba(&self, x: &FeatureVector) -> f64 {
        RandomForestModel::predict_proba(self, x)
    }

    fn decide(&self, p: f64) -> bool {
        p > 0.5
    }
}

pub fn predict_proba_rf(model: &RandomForestModel, x: &FeatureVector) -> f64 {
    model.predict_proba(x)
}

struct Grower<'a> {
    rows: &'a [(FeatureVector, bool)],
    config: &'a ForestConfig,
    rng: ChaCha8Rng,
}

struct Split {
    feature: usize,
    threshold: f64,
    /// Weighted child impurity, `n_left * gini_left + n_right * gini_right`.
    score: f64,
}

fn gini_sum(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    n as f64 * 2.0 * p * (1.0 - p)
}

impl Grower<'_> {
    fn leaf(&self, sample: &[usize]) -> TreeNode {
        let pos = sample.iter().filter(|&&i| self.rows[i].1).count();
        TreeNode::Leaf {
            positive_fraction: pos as f64 / sample.len().max(1) as f64,
        }
    }

    /// Best split on `feature`, or `None` if no cut leaves `min_samples_leaf`
    /// rows on both sides.
    fn best_split_on(&self, sample: &mut [usize], feature: usize) -> Option<Split> {
        let msl = self.config.min_samples_leaf;
        let n = sample.len();
        sample.sort_by(|&a, &b| self.rows[a].0[feature].total_cmp(&self.rows[b].0[feature]));
        let total_pos = sample.iter().filter(|&&i| self.rows[i].1).count();
        let mut left_pos = 0;
        let mut best: Option<Split> = None;
        for k in 1..n {
            if self.rows[sample[k - 1]].1 {
                left_pos += 1;
            }
            let lo = self.rows[sample[k - 1]].0[feature];
            let hi = self.rows[sample[k]].0[feature];
            if lo == hi || k < msl || n - k < msl {
                continue;
            }
            let score = gini_sum(left_pos, k) + gini_sum(total_pos - left_pos, n - k);
            if best.as_ref().is_none_or(|b| score < b.score) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid > lo { mid } else { hi };
                best = Some(Split {
                    feature,
                    threshold,
                    score,
                });
            }
        }
        best
    }

    fn grow(&mut self, sample: &mut [usize], depth: usize) -> TreeNode {
        let n = sample.len();
        let pos = sample.iter().filter(|&&i| self.rows[i].1).count();
        if depth >= self.config.max_depth
            || pos == 0
            || pos == n
            || n < 2 * self.config.min_samples_leaf
        {
            return self.leaf(sample);
        }

        let mut features: Vec<usize> = (0..FEATURE_COUNT).collect();
        features.shuffle(&mut self.rng);
        let wanted = self.config.features_per_split();
        let mut best: Option<Split> = None;
        // Past the first `wanted` features, keep looking only until some
        // feature admits a split.
        for (examined, &f) in features.iter().enumerate() {
            if examined >= wanted && best.is_some() {
                break;
            }
            if let Some(s) = self.best_split_on(sample, f) {
                if best.as_ref().is_none_or(|b| s.score < b.score) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else {
            return self.leaf(sample);
        };

        let (mut left, mut right): (Vec<usize>, Vec<usize>) = sample
            .iter()
            .partition(|&&i| self.rows[i].0[split.feature] < split.threshold);
        TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.grow(&mut left, depth + 1)),
            right: Box::new(self.grow(&mut right, depth + 1)),
        }
    }
}

fn grow_tree(data: &Dataset, config: &ForestConfig, index: usize) -> DecisionTree {
    let mut rng = ChaCha8Rng::seed_from_u64(config.bootstrap_seed.wrapping_add(index as u64));
    let n = data.len();
    let mut sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut grower = Grower {
        rows: &data.rows,
        config,
        rng,
    };
    DecisionTree {
        root: grower.grow(&mut sample, 0),
    }
}

/// Bagged Gini trees. Trees are grown in parallel; each depends only on its
/// own derived seed, so the result is independent of scheduling.
pub fn train_random_forest(data: &Dataset, config: &ForestConfig) -> Result<RandomForestModel, ModelError> {
    config.validate()?;
    data.check_two_classes()?;
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(config.n_trees);
    let per_worker = config.n_trees.div_ceil(workers);
    let trees = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    let lo = w * per_worker;
                    let hi = ((w + 1) * per_worker).min(config.n_trees);
                    (lo..hi).map(|i| grow_tree(data, config, i)).collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("tree worker panicked"))
            .collect::<Vec<_>>()
    });
    Ok(RandomForestModel {
        n_trees: trees.len(),
        trees,
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        bootstrap_seed: config.bootstrap_seed,
    })
}
