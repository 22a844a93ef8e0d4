//! Binary CART trees with Gini or entropy splitting, pre-pruning limits,
//! cost-complexity (weakest-link) post-pruning and a cross-validated grid
//! search over the pre-pruning limits.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::{accuracy_of, fold_splits, stratified_folds};
use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

fn proportions(counts: [usize; 2]) -> Result<[f64; 2]> {
    let total = counts[0] + counts[1];
    if total == 0 {
        return Err(Error::input("impurity of an empty node"));
    }
    let t = total as f64;
    Ok([counts[0] as f64 / t, counts[1] as f64 / t])
}

/// `1 − Σ p²`.
pub fn gini(counts: [usize; 2]) -> Result<f64> {
    let p = proportions(counts)?;
    Ok(1.0 - p[0] * p[0] - p[1] * p[1])
}

/// `−Σ p log₂ p` over the non-zero proportions.
pub fn entropy(counts: [usize; 2]) -> Result<f64> {
    let p = proportions(counts)?;
    Ok(p.iter()
        .filter(|&&q| q != 0.0)
        .map(|&q| -q * q.log2())
        .sum())
}

pub fn impurity(criterion: Criterion, counts: [usize; 2]) -> Result<f64> {
    match criterion {
        Criterion::Gini => gini(counts),
        Criterion::Entropy => entropy(counts),
    }
}

/// `Σ |d_i|/|d| · I(d_i)`; empty children contribute nothing.
pub fn weighted_child_impurity(
    parent: [usize; 2],
    children: &[[usize; 2]],
    criterion: Criterion,
) -> Result<f64> {
    let sum = children
        .iter()
        .fold([0, 0], |a, c| [a[0] + c[0], a[1] + c[1]]);
    if sum != parent {
        return Err(Error::input(format!(
            "children {children:?} do not partition parent {parent:?}"
        )));
    }
    let total = (parent[0] + parent[1]) as f64;
    if total == 0.0 {
        return Err(Error::input("impurity of an empty node"));
    }
    let mut acc = 0.0;
    for c in children {
        let n = c[0] + c[1];
        if n > 0 {
            acc += n as f64 / total * impurity(criterion, *c)?;
        }
    }
    Ok(acc)
}

/// Entropy decrease of a split.
pub fn info_gain(parent: [usize; 2], children: &[[usize; 2]]) -> Result<f64> {
    Ok(entropy(parent)? - weighted_child_impurity(parent, children, Criterion::Entropy)?)
}

fn majority(counts: [usize; 2]) -> Label {
    if counts[1] >= counts[0] {
        Label::Broken
    } else {
        Label::Intact
    }
}

/// `feature ≤ threshold` goes left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        impurity: f64,
        n_samples: usize,
        class_counts: [usize; 2],
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class_counts: [usize; 2],
        predicted: Label,
        impurity: f64,
    },
}

impl TreeNode {
    fn leaf(class_counts: [usize; 2], impurity: f64) -> TreeNode {
        TreeNode::Leaf {
            class_counts,
            predicted: majority(class_counts),
            impurity,
        }
    }

    pub fn class_counts(&self) -> [usize; 2] {
        match self {
            TreeNode::Internal { class_counts, .. } | TreeNode::Leaf { class_counts, .. } => {
                *class_counts
            }
        }
    }

    pub fn impurity(&self) -> f64 {
        match self {
            TreeNode::Internal { impurity, .. } | TreeNode::Leaf { impurity, .. } => *impurity,
        }
    }

    pub fn n_samples(&self) -> usize {
        let c = self.class_counts();
        c[0] + c[1]
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { predicted, .. } => return *predicted,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Replace this subtree by a leaf with the same counts.
    fn collapse(&mut self) {
        if let TreeNode::Internal {
            class_counts,
            impurity,
            ..
        } = self
        {
            *self = TreeNode::leaf(*class_counts, *impurity);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub criterion: Criterion,
    /// `None` grows until the other limits stop it.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub ccp_alpha: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            criterion: Criterion::Gini,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            ccp_alpha: 0.0,
        }
    }
}

impl TreeConfig {
    fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(Error::config("min_samples_split", "must be at least 2"));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::config("min_samples_leaf", "must be at least 1"));
        }
        if !(self.ccp_alpha >= 0.0 && self.ccp_alpha.is_finite()) {
            return Err(Error::config("ccp_alpha", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub criterion: Criterion,
    pub n_features: usize,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                what: "tree input",
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.root.predict(x))
    }

    pub fn predict_rows(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Label>> {
        x.rows()
            .into_iter()
            .map(|r| self.predict(&r.to_vec()))
            .collect()
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    fn n_train(&self) -> usize {
        self.root.n_samples()
    }
}

/// Best split of one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub weighted_impurity: f64,
}

const SPLIT_TIE: f64 = 1e-12;

/// Exhaustive search over features and midpoints between consecutive
/// distinct values. Zero-gain splits are allowed; ties go to the lowest
/// feature, then the lowest threshold.
pub fn best_split(
    x: ArrayView2<'_, f64>,
    y: &[Label],
    idx: &[usize],
    criterion: Criterion,
    min_samples_leaf: usize,
) -> Option<Split> {
    let n = idx.len();
    let mut total = [0usize; 2];
    for &i in idx {
        total[y[i].index()] += 1;
    }
    let mut best: Option<Split> = None;
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
    for f in 0..x.ncols() {
        pairs.clear();
        pairs.extend(idx.iter().map(|&i| (x[[i, f]], y[i].index())));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0usize; 2];
        for k in 1..n {
            left[pairs[k - 1].1] += 1;
            let (lo, hi) = (pairs[k - 1].0, pairs[k].0);
            if lo == hi || k < min_samples_leaf || n - k < min_samples_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let w =
                weighted_child_impurity(total, &[left, right], criterion).expect("valid partition");
            if best.is_none_or(|b| w < b.weighted_impurity - SPLIT_TIE) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Split {
                    feature: f,
                    threshold,
                    weighted_impurity: w,
                });
            }
        }
    }
    best
}

fn grow(
    x: ArrayView2<'_, f64>,
    y: &[Label],
    idx: Vec<usize>,
    depth: usize,
    cfg: &TreeConfig,
) -> TreeNode {
    let mut counts = [0usize; 2];
    for &i in &idx {
        counts[y[i].index()] += 1;
    }
    let imp = impurity(cfg.criterion, counts).expect("non-empty node");
    let n = idx.len();
    let stop = counts[0] == 0
        || counts[1] == 0
        || cfg.max_depth.is_some_and(|d| depth >= d)
        || n < cfg.min_samples_split
        || n < 2 * cfg.min_samples_leaf;
    if stop {
        return TreeNode::leaf(counts, imp);
    }
    let Some(split) = best_split(x, y, &idx, cfg.criterion, cfg.min_samples_leaf) else {
        return TreeNode::leaf(counts, imp);
    };
    let (l, r): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| x[[i, split.feature]] <= split.threshold);
    TreeNode::Internal {
        feature: split.feature,
        threshold: split.threshold,
        impurity: imp,
        n_samples: n,
        class_counts: counts,
        left: Box::new(grow(x, y, l, depth + 1, cfg)),
        right: Box::new(grow(x, y, r, depth + 1, cfg)),
    }
}

/// Grow a tree greedily, then apply cost-complexity pruning with
/// `cfg.ccp_alpha` (a no-op at 0).
pub fn fit(x: ArrayView2<'_, f64>, y: &[Label], cfg: &TreeConfig) -> Result<DecisionTree> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::Dimension {
            what: "tree labels",
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite feature value"));
    }
    let pos = y.iter().filter(|l| **l == Label::Broken).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    let root = grow(x, y, (0..y.len()).collect(), 0, cfg);
    let mut tree = DecisionTree {
        root,
        criterion: cfg.criterion,
        n_features: x.ncols(),
    };
    if cfg.ccp_alpha > 0.0 {
        prune(&mut tree, cfg.ccp_alpha);
    }
    Ok(tree)
}

// --- cost-complexity pruning ---------------------------------------------

/// `R(t) = |t|/N · impurity(t)`.
fn node_risk(node: &TreeNode, n_train: usize) -> f64 {
    node.n_samples() as f64 / n_train as f64 * node.impurity()
}

/// (Σ R over leaves, leaf count)
fn subtree_risk(node: &TreeNode, n_train: usize) -> (f64, usize) {
    match node {
        TreeNode::Leaf { .. } => (node_risk(node, n_train), 1),
        TreeNode::Internal { left, right, .. } => {
            let (rl, nl) = subtree_risk(left, n_train);
            let (rr, nr) = subtree_risk(right, n_train);
            (rl + rr, nl + nr)
        }
    }
}

/// Total leaf risk of a tree, `R(T)`.
pub fn tree_risk(tree: &DecisionTree) -> f64 {
    subtree_risk(&tree.root, tree.n_train()).0
}

/// Preorder path (0 = left, 1 = right) and α_eff of the weakest link.
fn weakest_link(
    node: &TreeNode,
    n_train: usize,
    path: &mut Vec<u8>,
    best: &mut Option<(f64, Vec<u8>)>,
) {
    if let TreeNode::Internal { left, right, .. } = node {
        let (r_sub, leaves) = subtree_risk(node, n_train);
        let alpha = (node_risk(node, n_train) - r_sub) / (leaves as f64 - 1.0);
        if best.as_ref().is_none_or(|(b, _)| alpha < *b) {
            *best = Some((alpha, path.clone()));
        }
        path.push(0);
        weakest_link(left, n_train, path, best);
        path.pop();
        path.push(1);
        weakest_link(right, n_train, path, best);
        path.pop();
    }
}

fn node_at_mut<'a>(mut node: &'a mut TreeNode, path: &[u8]) -> &'a mut TreeNode {
    for &step in path {
        node = match node {
            TreeNode::Internal { left, right, .. } => {
                if step == 0 {
                    left
                } else {
                    right
                }
            }
            TreeNode::Leaf { .. } => unreachable!("path leads through internal nodes"),
        };
    }
    node
}

fn collapse_weakest(tree: &mut DecisionTree) -> Option<f64> {
    let n = tree.n_train();
    let mut best = None;
    weakest_link(&tree.root, n, &mut Vec::new(), &mut best);
    let (alpha, path) = best?;
    node_at_mut(&mut tree.root, &path).collapse();
    Some(alpha)
}

/// Collapse weakest links while their effective α is at most `alpha`.
pub fn prune(tree: &mut DecisionTree, alpha: f64) {
    loop {
        let n = tree.n_train();
        let mut best = None;
        weakest_link(&tree.root, n, &mut Vec::new(), &mut best);
        match best {
            Some((a, path)) if a <= alpha => node_at_mut(&mut tree.root, &path).collapse(),
            _ => break,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub alpha: f64,
    pub node_count: usize,
    pub depth: usize,
    pub total_impurity: f64,
}

/// Nested subtrees from weakest-link pruning. `trees[k]` is optimal for
/// `α ∈ [entries[k].alpha, entries[k+1].alpha)`.
#[derive(Clone, Debug)]
pub struct PruningPath {
    pub entries: Vec<PathEntry>,
    pub trees: Vec<DecisionTree>,
}

/// Pruning path of a fitted tree, using the class counts recorded at fit
/// time. The first entry is the tree itself at α = 0, the last the root leaf.
pub fn ccp_path(tree: &DecisionTree) -> PruningPath {
    let mut current = tree.clone();
    let entry = |t: &DecisionTree, alpha: f64| PathEntry {
        alpha,
        node_count: t.node_count(),
        depth: t.depth(),
        total_impurity: tree_risk(t),
    };
    let mut entries = vec![entry(&current, 0.0)];
    let mut trees = vec![current.clone()];
    let mut last = 0.0f64;
    while let Some(alpha) = collapse_weakest(&mut current) {
        last = last.max(alpha);
        entries.push(entry(&current, last));
        trees.push(current.clone());
    }
    PruningPath { entries, trees }
}

// --- grid search ------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeGrid {
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_split: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
}

impl TreeGrid {
    pub fn candidates(&self, criterion: Criterion) -> Vec<TreeConfig> {
        let mut out = Vec::new();
        for &max_depth in &self.max_depth {
            for &min_samples_split in &self.min_samples_split {
                for &min_samples_leaf in &self.min_samples_leaf {
                    out.push(TreeConfig {
                        criterion,
                        max_depth,
                        min_samples_split,
                        min_samples_leaf,
                        ccp_alpha: 0.0,
                    });
                }
            }
        }
        out
    }
}

/// Feature sets the published pruning settings were tuned on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSet {
    Std,
    Cov,
    CovPca4,
}

/// Pre-pruning ranges: depth 2..=hi, split 2..=4, leaf 1..=2.
pub fn preset_grid(set: FeatureSet, criterion: Criterion) -> TreeGrid {
    let hi = match (set, criterion) {
        (FeatureSet::Std, _) => 13,
        (FeatureSet::Cov, Criterion::Entropy) => 5,
        (FeatureSet::Cov, Criterion::Gini) => 6,
        (FeatureSet::CovPca4, _) => 8,
    };
    TreeGrid {
        max_depth: (2..=hi).map(Some).collect(),
        min_samples_split: vec![2, 3, 4],
        min_samples_leaf: vec![1, 2],
    }
}

/// Post-pruning α per feature set and criterion; the entropy COV-PCA(4)
/// setting drops to 0.003 on the noisiest data.
pub fn preset_ccp_alpha(
    set: FeatureSet,
    criterion: Criterion,
    noise: crate::dataset::NoiseLevel,
) -> f64 {
    match (set, criterion) {
        (FeatureSet::Std, Criterion::Entropy) => 0.003,
        (FeatureSet::Std, Criterion::Gini) => 0.002,
        (FeatureSet::Cov, Criterion::Entropy) => 0.01,
        (FeatureSet::Cov, Criterion::Gini) => 0.003,
        (FeatureSet::CovPca4, Criterion::Entropy) => {
            if noise == crate::dataset::NoiseLevel::Fifty {
                0.003
            } else {
                0.01
            }
        }
        (FeatureSet::CovPca4, Criterion::Gini) => 0.003,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: TreeConfig,
    pub cv_score: f64,
    pub scores: Vec<(TreeConfig, f64)>,
}

/// Mean validation accuracy of `cfg` over stratified folds.
pub fn cv_score(
    x: ArrayView2<'_, f64>,
    y: &[Label],
    cfg: &TreeConfig,
    splits: &[(Vec<usize>, Vec<usize>)],
) -> Result<f64> {
    let mut acc = 0.0;
    for (train, val) in splits {
        let xt = x.select(ndarray::Axis(0), train);
        let yt: Vec<Label> = train.iter().map(|&i| y[i]).collect();
        let tree = fit(xt.view(), &yt, cfg)?;
        let xv = x.select(ndarray::Axis(0), val);
        let yv: Vec<Label> = val.iter().map(|&i| y[i]).collect();
        acc += accuracy_of(&tree.predict_rows(xv.view())?, &yv);
    }
    Ok(acc / splits.len() as f64)
}

fn simpler(a: &TreeConfig, b: &TreeConfig) -> bool {
    let depth = |c: &TreeConfig| c.max_depth.unwrap_or(usize::MAX);
    (depth(a), std::cmp::Reverse(a.min_samples_leaf))
        < (depth(b), std::cmp::Reverse(b.min_samples_leaf))
}

/// Exhaustive grid search by stratified k-fold mean accuracy. Equal scores
/// prefer the smaller `max_depth`, then the larger `min_samples_leaf`, then
/// grid order.
pub fn grid_search(
    x: ArrayView2<'_, f64>,
    y: &[Label],
    criterion: Criterion,
    grid: &TreeGrid,
    k_folds: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    let candidates = grid.candidates(criterion);
    if candidates.is_empty() {
        return Err(Error::config("grid", "empty hyperparameter grid"));
    }
    let folds = stratified_folds(y, k_folds, seed)?;
    let splits = fold_splits(y.len(), &folds);
    let scores = candidates
        .par_iter()
        .map(|c| cv_score(x, y, c, &splits).map(|s| (c.clone(), s)))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, (cfg, s)) in scores.iter().enumerate().skip(1) {
        let (bcfg, bs) = &scores[best];
        if *s > bs + 1e-12 || ((s - bs).abs() <= 1e-12 && simpler(cfg, bcfg)) {
            best = i;
        }
    }
    Ok(GridSearchResult {
        best: scores[best].0.clone(),
        cv_score: scores[best].1,
        scores,
    })
}
