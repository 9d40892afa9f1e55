use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::{par, seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means `ceil(sqrt(dim))`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Bootstrap sample counts per class.
    Leaf { counts: Vec<u32> },
}

/// Binary CART tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf_counts(&self, x: &[f64]) -> &[u32] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    }
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let counts = self.leaf_counts(x);
        let total: u32 = counts.iter().sum();
        counts.iter().map(|&c| c as f64 / total.max(1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
    pub n_features: usize,
    pub params: ForestParams,
}

impl ForestModel {
    /// Mean of the trees' normalized leaf histograms.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (acc, v) in p.iter_mut().zip(t.predict_proba(x)) {
                *acc += v;
            }
        }
        let total: f64 = p.iter().sum();
        if total > 0.0 {
            p.iter_mut().for_each(|v| *v /= total);
        }
        p
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        par::map(xs, |x| self.predict_proba(x))
    }
}

/// Gini impurity `1 - sum p_c^2` of a class histogram.
pub fn gini(counts: &[u32]) -> f64 {
    let n: u32 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Bootstrap draw (with replacement) used for tree `tree` of a forest.
pub fn bootstrap_indices(forest_seed: u64, tree: usize, n: usize) -> Vec<usize> {
    let mut rng = tree_rng(forest_seed, tree);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn tree_rng(forest_seed: u64, tree: usize) -> ChaCha8Rng {
    seed::derived_rng(forest_seed, &["tree".to_string(), tree.to_string()])
}

struct Best {
    gini: f64,
    feature: usize,
    threshold: f64,
}

fn best_split(x: &[Vec<f64>], y: &[usize], idx: &[usize], features: &[usize], n_classes: usize) -> Option<Best> {
    let n = idx.len();
    let mut total = vec![0u32; n_classes];
    for &i in idx {
        total[y[i]] += 1;
    }
    let mut best: Option<Best> = None;
    let mut order = idx.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left = vec![0u32; n_classes];
        for pos in 1..n {
            left[y[order[pos - 1]]] += 1;
            let (lo, hi) = (x[order[pos - 1]][f], x[order[pos]][f]);
            if lo == hi {
                continue;
            }
            let right: Vec<u32> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let g = (pos as f64 * gini(&left) + (n - pos) as f64 * gini(&right)) / n as f64;
            if best.as_ref().is_none_or(|b| g < b.gini) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Best {
                    gini: g,
                    feature: f,
                    threshold,
                });
            }
        }
    }
    best
}

fn fit_tree(x: &[Vec<f64>], y: &[usize], n_classes: usize, max_features: usize, rng: &mut ChaCha8Rng) -> DecisionTree {
    let n = x.len();
    let dim = x[0].len();
    let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut nodes: Vec<Node> = vec![Node::Leaf { counts: Vec::new() }];
    let mut stack = vec![(0usize, boot)];
    while let Some((slot, idx)) = stack.pop() {
        let mut counts = vec![0u32; n_classes];
        for &i in &idx {
            counts[y[i]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if pure || idx.len() < 2 {
            None
        } else {
            let features: Vec<usize> = sample(rng, dim, max_features.min(dim)).into_vec();
            best_split(x, y, &idx, &features, n_classes)
        };
        match split {
            None => nodes[slot] = Node::Leaf { counts },
            Some(b) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][b.feature] <= b.threshold);
                let li = nodes.len();
                nodes.push(Node::Leaf { counts: Vec::new() });
                nodes.push(Node::Leaf { counts: Vec::new() });
                nodes[slot] = Node::Split {
                    feature: b.feature as u32,
                    threshold: b.threshold,
                    left: li as u32,
                    right: (li + 1) as u32,
                };
                stack.push((li + 1, r));
                stack.push((li, l));
            }
        }
    }
    DecisionTree { nodes }
}

/// Bagged CART forest: bootstrap per tree, Gini splits over a random feature
/// subset at each node, grown until leaves are pure or hold a single sample.
pub fn forest_fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: &ForestParams) -> Result<ForestModel, ModelError> {
    if x.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if x.len() != y.len() {
        return Err(ModelError::ShapeMismatch(format!("{} rows, {} labels", x.len(), y.len())));
    }
    let dim = x[0].len();
    if dim == 0 || x.iter().any(|r| r.len() != dim) {
        return Err(ModelError::ShapeMismatch("ragged or empty feature rows".into()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(ModelError::ShapeMismatch(format!("label {bad} >= {n_classes} classes")));
    }
    let max_features = params
        .max_features
        .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
        .clamp(1, dim);
    let trees = par::map_range(params.n_trees.max(1), |t| {
        fit_tree(x, y, n_classes, max_features, &mut tree_rng(params.seed, t))
    });
    Ok(ForestModel {
        trees,
        n_classes,
        n_features: dim,
        params: *params,
    })
}
