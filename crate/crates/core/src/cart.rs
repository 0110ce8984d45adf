//! Classification trees with exhaustive axis-aligned split search.
//!
//! Thresholds sit at midpoints between consecutive distinct feature values
//! and samples with `x[f] <= threshold` go left. At every node a fresh
//! subset of `mtry` features is drawn without replacement.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::SampleSet;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    #[default]
    Gini,
    InfoGain,
}

/// Gini index `1 - sum p_k^2` of a class distribution.
pub fn gini(proportions: &[f64]) -> Result<f64> {
    check_distribution(proportions)?;
    Ok(1.0 - proportions.iter().map(|p| p * p).sum::<f64>())
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|&v| !(v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("not a probability distribution: {p:?}")));
    }
    Ok(())
}

/// Shannon entropy (natural log) of class counts; `0 log 0 = 0`.
pub fn entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn gini_counts(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Entropy reduction from splitting `parent` into `children`.
pub fn info_gain(parent: &[usize], children: &[Vec<usize>]) -> Result<f64> {
    let k = parent.len();
    let mut sum = vec![0usize; k];
    for child in children {
        if child.len() != k {
            return Err(Error::InvalidArgument("child class counts have wrong length".into()));
        }
        for (s, c) in sum.iter_mut().zip(child) {
            *s += c;
        }
    }
    if sum != parent {
        return Err(Error::InvalidArgument("children do not sum to the parent counts".into()));
    }
    let n: usize = parent.iter().sum();
    if n == 0 {
        return Err(Error::InvalidArgument("parent has no samples".into()));
    }
    let expected: f64 = children
        .iter()
        .map(|c| c.iter().sum::<usize>() as f64 / n as f64 * entropy(c))
        .sum();
    Ok(entropy(parent) - expected)
}

fn impurity(criterion: SplitCriterion, counts: &[usize], n: usize) -> f64 {
    match criterion {
        SplitCriterion::Gini => gini_counts(counts, n),
        SplitCriterion::InfoGain => entropy(counts),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Impurity decrease (Gini) or information gain.
    pub decrease: f64,
}

/// Best threshold split of `indices` over `candidate_features`, with both
/// children holding at least `min_leaf` samples. Ties go to the lower
/// feature index, then the lower threshold.
pub fn best_split(
    data: &SampleSet,
    indices: &[usize],
    candidate_features: &[usize],
    criterion: SplitCriterion,
    min_leaf: usize,
) -> Option<Split> {
    let k = data.k();
    let n = indices.len();
    if n < 2 {
        return None;
    }
    let mut parent = vec![0usize; k];
    for &i in indices {
        parent[data.label(i)] += 1;
    }
    if parent.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let parent_impurity = impurity(criterion, &parent, n);
    let min_leaf = min_leaf.max(1);

    let mut features = candidate_features.to_vec();
    features.sort_unstable();
    let mut best: Option<Split> = None;
    let mut order: Vec<(f32, usize)> = Vec::with_capacity(n);
    let mut left = vec![0usize; k];
    let mut right = vec![0usize; k];
    for &f in &features {
        order.clear();
        order.extend(indices.iter().map(|&i| (data.row(i)[f], data.label(i))));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        if order[0].0 == order[n - 1].0 {
            continue;
        }
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(&parent);
        for pos in 0..n - 1 {
            let (v, l) = order[pos];
            left[l] += 1;
            right[l] -= 1;
            let next = order[pos + 1].0;
            if next == v {
                continue;
            }
            let n_left = pos + 1;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let weighted = (n_left as f64 * impurity(criterion, &left, n_left)
                + n_right as f64 * impurity(criterion, &right, n_right))
                / n as f64;
            let decrease = parent_impurity - weighted;
            if best.is_none_or(|b| decrease > b.decrease + 1e-12) {
                best = Some(Split {
                    feature: f,
                    threshold: (v as f64 + next as f64) / 2.0,
                    decrease,
                });
            }
        }
    }
    best
}

/// Tree node. Serialized as `{f, t, l, r}` for internal nodes and
/// `{counts}` for leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Internal {
        f: usize,
        t: f64,
        l: Box<TreeNode>,
        r: Box<TreeNode>,
    },
    Leaf {
        counts: Vec<usize>,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { l, r, .. } => 1 + l.depth().max(r.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { l, r, .. } => l.leaf_count() + r.leaf_count(),
        }
    }

    /// Leaf reached by `x`.
    pub fn route(&self, x: &[f32]) -> &[usize] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { counts } => return counts,
                TreeNode::Internal { f, t, l, r } => {
                    node = if x[*f] as f64 <= *t { l } else { r };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub criterion: SplitCriterion,
    /// Features drawn per node; `None` means `floor(sqrt(m))`, at least 1.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            criterion: SplitCriterion::Gini,
            mtry: None,
            min_leaf: 1,
            max_depth: None,
            seed: 0,
        }
    }
}

impl TreeConfig {
    pub fn resolved_mtry(&self, m: usize) -> Result<usize> {
        let mtry = self.mtry.unwrap_or_else(|| ((m as f64).sqrt().floor() as usize).max(1));
        if mtry == 0 || mtry > m {
            return Err(Error::InvalidArgument(format!("mtry must lie in [1, {m}], got {mtry}")));
        }
        Ok(mtry)
    }
}

/// Grows a tree on every sample of `train`.
pub fn grow_tree(train: &SampleSet, cfg: &TreeConfig) -> Result<TreeNode> {
    let indices: Vec<usize> = (0..train.n()).collect();
    let mut rng = seed::stream_rng(cfg.seed, 0);
    grow_tree_on(train, &indices, cfg, &mut rng)
}

/// Grows a tree on the samples at `indices` (repeats allowed, as produced by
/// bootstrapping) drawing feature subsets from `rng`.
pub fn grow_tree_on(
    data: &SampleSet,
    indices: &[usize],
    cfg: &TreeConfig,
    rng: &mut impl Rng,
) -> Result<TreeNode> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("cannot grow a tree on an empty training set".into()));
    }
    let mtry = cfg.resolved_mtry(data.m())?;
    let mut idx = indices.to_vec();
    Ok(grow(data, &mut idx, cfg, mtry, 0, rng))
}

fn grow(
    data: &SampleSet,
    indices: &mut [usize],
    cfg: &TreeConfig,
    mtry: usize,
    depth: usize,
    rng: &mut impl Rng,
) -> TreeNode {
    let mut counts = vec![0usize; data.k()];
    for &i in indices.iter() {
        counts[data.label(i)] += 1;
    }
    let n = indices.len();
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || n < 2 * cfg.min_leaf.max(1) || cfg.max_depth.is_some_and(|d| depth >= d) {
        return TreeNode::Leaf { counts };
    }
    let features = index::sample(rng, data.m(), mtry).into_vec();
    let Some(split) = best_split(data, indices, &features, cfg.criterion, cfg.min_leaf) else {
        return TreeNode::Leaf { counts };
    };
    // Partition in place: left block holds x[f] <= t.
    let mut boundary = 0;
    for pos in 0..n {
        if data.row(indices[pos])[split.feature] as f64 <= split.threshold {
            indices.swap(pos, boundary);
            boundary += 1;
        }
    }
    let (left, right) = indices.split_at_mut(boundary);
    let l = grow(data, left, cfg, mtry, depth + 1, rng);
    let r = grow(data, right, cfg, mtry, depth + 1, rng);
    TreeNode::Internal {
        f: split.feature,
        t: split.threshold,
        l: Box::new(l),
        r: Box::new(r),
    }
}

fn check_features(x: &[f32], m: Option<usize>) -> Result<()> {
    if let Some(m) = m {
        if x.len() != m {
            return Err(Error::DimensionMismatch(format!("expected {m} features, got {}", x.len())));
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite feature value".into()));
    }
    Ok(())
}

/// Normalized class counts of the leaf `x` falls into.
pub fn predict_tree(tree: &TreeNode, x: &[f32], m: usize) -> Result<Vec<f64>> {
    check_features(x, Some(m))?;
    let counts = tree.route(x);
    let total: usize = counts.iter().sum();
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Index of the largest count; ties go to the lowest index.
pub fn argmax_counts(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Hard label of a tree for `x` without validation.
pub(crate) fn tree_vote(tree: &TreeNode, x: &[f32]) -> usize {
    argmax_counts(tree.route(x))
}

pub(crate) fn validate_features(x: &[f32], m: usize) -> Result<()> {
    check_features(x, Some(m))
}
