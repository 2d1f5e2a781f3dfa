//! Bagged CART classification forest.
//!
//! Trees are grown on bootstrap samples with Gini splits over a random subset
//! of `mtry` features per node. Every node records its cover (number of
//! bootstrap rows routed through it, duplicates counted) and every tree keeps
//! its in-bag multiplicities so out-of-bag accuracy can be computed.

use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::{self, Domain};
use crate::{Error, Result};

pub const MODEL_SCHEMA_VERSION: &str = "ubiqtree.model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        cover: u64,
    },
    Leaf {
        class_probs: Vec<f64>,
        cover: u64,
    },
}

impl TreeNode {
    pub fn cover(&self) -> u64 {
        match self {
            TreeNode::Internal { cover, .. } | TreeNode::Leaf { cover, .. } => *cover,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
}

impl DecisionTree {
    pub fn single_leaf(class_probs: Vec<f64>, cover: u64) -> Self {
        DecisionTree {
            nodes: vec![TreeNode::Leaf { class_probs, cover }],
            root: 0,
        }
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = self.root;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    /// Class probabilities of the leaf `x` lands in.
    pub fn predict(&self, x: &[f64]) -> &[f64] {
        match &self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { class_probs, .. } => class_probs,
            TreeNode::Internal { .. } => unreachable!(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, self.root)
    }

    /// Features referenced by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut fs: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Internal { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .collect();
        fs.sort_unstable();
        fs.dedup();
        fs
    }

    /// Checks the structural invariants: proper binary tree reachable from the
    /// root, valid leaf distributions, cover conservation, feature range.
    pub fn validate(&self, n_features: usize, n_classes: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Format(msg));
        if self.nodes.is_empty() || self.root >= self.nodes.len() {
            return bad("tree has no valid root".into());
        }
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() {
                return bad(format!("child index {i} out of range"));
            }
            if std::mem::replace(&mut visited[i], true) {
                return bad(format!("node {i} reached twice"));
            }
            match &self.nodes[i] {
                TreeNode::Leaf { class_probs, .. } => {
                    if class_probs.len() != n_classes {
                        return bad(format!(
                            "leaf {i} has {} class probabilities",
                            class_probs.len()
                        ));
                    }
                    let sum: f64 = class_probs.iter().sum();
                    if class_probs.iter().any(|p| p.is_nan() || *p < 0.0)
                        || (sum - 1.0).abs() > 1e-12
                    {
                        return bad(format!("leaf {i} is not a probability vector"));
                    }
                }
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    cover,
                } => {
                    if *feature >= n_features {
                        return bad(format!("node {i} splits on feature {feature}"));
                    }
                    if !threshold.is_finite() {
                        return bad(format!("node {i} has a non-finite threshold"));
                    }
                    let (l, r) = (*left, *right);
                    if l >= self.nodes.len() || r >= self.nodes.len() {
                        return bad(format!("node {i} has a child out of range"));
                    }
                    if self.nodes[l].cover() + self.nodes[r].cover() != *cover {
                        return bad(format!("cover not conserved at node {i}"));
                    }
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        if visited.iter().any(|v| !v) {
            return bad("tree contains unreachable nodes".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMetric {
    #[default]
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until the leaf rules stop it.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(n_features))`.
    pub mtry: Option<usize>,
    pub seed: u64,
    pub weight_metric: WeightMetric,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            mtry: None,
            seed: 0,
            weight_metric: WeightMetric::Accuracy,
        }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, n_features: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Forest("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Forest("min_samples_leaf must be at least 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::Forest("max_depth must be positive".into()));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > n_features {
                return Err(Error::Forest(format!(
                    "mtry must lie in 1..={n_features}, got {m}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-row bootstrap multiplicities of one tree. Serialized as run-length
/// pairs `[count, run]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InbagCounts(pub Vec<u32>);

impl InbagCounts {
    pub fn oob_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
    }

    pub fn n_oob(&self) -> usize {
        self.0.iter().filter(|&&c| c == 0).count()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| u64::from(c)).sum()
    }

    fn runs(&self) -> Vec<[u32; 2]> {
        let mut out: Vec<[u32; 2]> = Vec::new();
        for &c in &self.0 {
            match out.last_mut() {
                Some([v, run]) if *v == c => *run += 1,
                _ => out.push([c, 1]),
            }
        }
        out
    }
}

impl Serialize for InbagCounts {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.runs().serialize(s)
    }
}

impl<'de> Deserialize<'de> for InbagCounts {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let runs = Vec::<[u32; 2]>::deserialize(d)?;
        let mut out = Vec::new();
        for [value, run] in runs {
            out.extend(std::iter::repeat_n(value, run as usize));
        }
        Ok(InbagCounts(out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub schema_version: String,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub n_features: usize,
    pub n_classes: usize,
    pub n_train_rows: usize,
    pub config: ForestConfig,
    pub trees: Vec<DecisionTree>,
    pub inbag: Vec<InbagCounts>,
    pub oob_accuracy: Vec<f64>,
    /// Background rows for interventional SHAP, stored by the CLI at training time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<Vec<Vec<f64>>>,
}

impl Forest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Mean of the per-tree leaf distributions, in tree order.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_instance(x, self.n_features).map_err(Error::Forest)?;
        Ok(self.predict_proba_unchecked(x))
    }

    fn predict_proba_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.predict(x)) {
                *a += p;
            }
        }
        let k = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    /// Background rows stored with the model, as a dataset with dummy labels.
    pub fn background_dataset(&self) -> Option<Result<Dataset>> {
        self.background
            .as_ref()
            .map(|rows| self.unlabelled(rows.clone()))
    }

    /// Feature rows in this model's column order, wrapped as a dataset with
    /// dummy labels.
    pub fn unlabelled(&self, rows: Vec<Vec<f64>>) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(Error::Data("no rows".into()));
        }
        let n = rows.len();
        Dataset::new(
            rows,
            vec![0; n],
            self.feature_names.clone(),
            self.class_names.clone(),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Forest> {
        let f: Forest = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("invalid model JSON: {e}")))?;
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported model schema '{}', expected '{MODEL_SCHEMA_VERSION}'",
                self.schema_version
            )));
        }
        if self.trees.is_empty() {
            return Err(Error::Format("model has no trees".into()));
        }
        if self.feature_names.len() != self.n_features || self.class_names.len() != self.n_classes {
            return Err(Error::Format("name lists disagree with dimensions".into()));
        }
        if self.inbag.len() != self.trees.len() || self.oob_accuracy.len() != self.trees.len() {
            return Err(Error::Format(
                "per-tree arrays disagree with tree count".into(),
            ));
        }
        for (k, t) in self.trees.iter().enumerate() {
            t.validate(self.n_features, self.n_classes)
                .map_err(|e| Error::Format(format!("tree {k}: {e}")))?;
        }
        if self.oob_accuracy.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Format("oob accuracy outside [0, 1]".into()));
        }
        if let Some(bg) = &self.background {
            if bg.iter().any(|r| r.len() != self.n_features) {
                return Err(Error::Format("background row has wrong width".into()));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_instance(x: &[f64], n_features: usize) -> std::result::Result<(), String> {
    if x.len() != n_features {
        return Err(format!(
            "instance has {} features, model expects {n_features}",
            x.len()
        ));
    }
    if let Some(j) = x.iter().position(|v| !v.is_finite()) {
        return Err(format!("instance feature {j} is not finite"));
    }
    Ok(())
}

/// Index of the largest element; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate().skip(1) {
        if p > v[best] {
            best = i;
        }
    }
    best
}

/// Trains the forest. Trees are built in parallel but each from its own
/// seed stream, so the result equals sequential construction.
pub fn fit(train: &Dataset, cfg: &ForestConfig) -> Result<Forest> {
    if train.is_empty() {
        return Err(Error::Forest("training set is empty".into()));
    }
    cfg.validate(train.n_features())?;
    let mtry = cfg.resolved_mtry(train.n_features());
    let built: Vec<(DecisionTree, InbagCounts)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|k| grow_bagged_tree(train, cfg, mtry, k as u64))
        .collect();
    let (trees, inbag): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    let oob_accuracy = trees
        .iter()
        .zip(&inbag)
        .map(|(t, bag)| oob_accuracy(t, bag, train))
        .collect();
    Ok(Forest {
        schema_version: MODEL_SCHEMA_VERSION.to_string(),
        feature_names: train.feature_names().to_vec(),
        class_names: train.class_names().to_vec(),
        n_features: train.n_features(),
        n_classes: train.n_classes(),
        n_train_rows: train.n_rows(),
        config: cfg.clone(),
        trees,
        inbag,
        oob_accuracy,
        background: None,
    })
}

/// Fraction of out-of-bag rows whose argmax leaf class matches the label.
/// A tree with no out-of-bag rows is scored on the full training set.
pub fn oob_accuracy(tree: &DecisionTree, inbag: &InbagCounts, train: &Dataset) -> f64 {
    let score = |rows: &mut dyn Iterator<Item = usize>| {
        let (mut n, mut hit) = (0usize, 0usize);
        for i in rows {
            n += 1;
            if argmax(tree.predict(train.row(i))) == train.labels()[i] {
                hit += 1;
            }
        }
        (n, hit)
    };
    let (n, hit) = score(&mut inbag.oob_rows());
    if n > 0 {
        return hit as f64 / n as f64;
    }
    let (n, hit) = score(&mut (0..train.n_rows()));
    hit as f64 / n as f64
}

fn grow_bagged_tree(
    train: &Dataset,
    cfg: &ForestConfig,
    mtry: usize,
    tree_index: u64,
) -> (DecisionTree, InbagCounts) {
    let mut rng = rng::stream(cfg.seed, Domain::Tree, tree_index);
    let n = train.n_rows();
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    let mut rows: Vec<usize> = Vec::with_capacity(n);
    for (i, &c) in counts.iter().enumerate() {
        rows.extend(std::iter::repeat_n(i, c as usize));
    }
    let mut builder = TreeBuilder {
        data: train,
        cfg,
        mtry,
        rng,
        nodes: Vec::new(),
    };
    let root = builder.grow(&mut rows, 0);
    (
        DecisionTree {
            nodes: builder.nodes,
            root,
        },
        InbagCounts(counts),
    )
}

struct TreeBuilder<'a, R> {
    data: &'a Dataset,
    cfg: &'a ForestConfig,
    mtry: usize,
    rng: R,
    nodes: Vec<TreeNode>,
}

/// Split quality `sum(cL^2)/nL + sum(cR^2)/nR` kept as an exact fraction so
/// equal-Gini candidates compare equal.
#[derive(Debug, Clone, Copy)]
struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    fn new(sq_left: u64, n_left: u64, sq_right: u64, n_right: u64) -> Self {
        SplitScore {
            num: u128::from(sq_left) * u128::from(n_right)
                + u128::from(sq_right) * u128::from(n_left),
            den: u128::from(n_left) * u128::from(n_right),
        }
    }

    fn cmp(&self, other: &SplitScore) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    score: SplitScore,
}

impl<R: Rng> TreeBuilder<'_, R> {
    fn class_counts(&self, rows: &[usize]) -> Vec<u64> {
        let mut c = vec![0u64; self.data.n_classes()];
        for &r in rows {
            c[self.data.labels()[r]] += 1;
        }
        c
    }

    fn make_leaf(&mut self, counts: &[u64], cover: u64) -> usize {
        let class_probs = counts.iter().map(|&c| c as f64 / cover as f64).collect();
        self.nodes.push(TreeNode::Leaf { class_probs, cover });
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let cover = rows.len() as u64;
        let counts = self.class_counts(rows);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_reached = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || rows.len() < 2 * self.cfg.min_samples_leaf {
            return self.make_leaf(&counts, cover);
        }
        let Some(split) = self.best_split(rows) else {
            return self.make_leaf(&counts, cover);
        };
        let (feature, threshold) = (split.feature, split.threshold);
        let data = self.data;
        rows.sort_by(|&a, &b| {
            let la = data.value(a, feature) <= threshold;
            let lb = data.value(b, feature) <= threshold;
            lb.cmp(&la).then(a.cmp(&b))
        });
        let n_left = rows
            .iter()
            .take_while(|&&r| data.value(r, feature) <= threshold)
            .count();

        let id = self.nodes.len();
        // placeholder, patched once both children exist
        self.nodes.push(TreeNode::Leaf {
            class_probs: Vec::new(),
            cover,
        });
        let (left_rows, right_rows) = rows.split_at_mut(n_left);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
            cover,
        };
        id
    }

    /// Best Gini split among `mtry` randomly drawn features. Candidates are
    /// scanned by ascending feature then ascending threshold and only a
    /// strictly better score replaces the incumbent.
    fn best_split(&mut self, rows: &[usize]) -> Option<Split> {
        let p = self.data.n_features();
        let mut features = index::sample(&mut self.rng, p, self.mtry).into_vec();
        features.sort_unstable();

        let n_classes = self.data.n_classes();
        let msl = self.cfg.min_samples_leaf;
        let n = rows.len();
        let total = self.class_counts(rows);
        let mut best: Option<Split> = None;
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);

        for &f in &features {
            order.clear();
            order.extend(
                rows.iter()
                    .map(|&r| (self.data.value(r, f), self.data.labels()[r])),
            );
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            if order[0].0 == order[n - 1].0 {
                continue;
            }
            let mut left = vec![0u64; n_classes];
            let mut sq_left = 0u64;
            let mut sq_right: u64 = total.iter().map(|c| c * c).sum();
            for i in 1..n {
                let c = order[i - 1].1;
                let (l, r) = (left[c], total[c] - left[c]);
                sq_left += 2 * l + 1;
                sq_right -= 2 * r - 1;
                left[c] += 1;
                let (lo, hi) = (order[i - 1].0, order[i].0);
                if lo == hi || i < msl || n - i < msl {
                    continue;
                }
                let score = SplitScore::new(sq_left, i as u64, sq_right, (n - i) as u64);
                if best
                    .as_ref()
                    .is_none_or(|b| score.cmp(&b.score) == Ordering::Greater)
                {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

/// Accuracy and macro-averaged F1 of `predict_class` over `d`.
pub fn evaluate(forest: &Forest, d: &Dataset) -> Result<(f64, f64)> {
    let k = forest.n_classes;
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fneg = vec![0usize; k];
    let mut correct = 0;
    for (row, &y) in d.rows().zip(d.labels()) {
        let p = forest.predict_class(row)?;
        if p == y {
            tp[y] += 1;
            correct += 1;
        } else {
            fp[p] += 1;
            fneg[y] += 1;
        }
    }
    let present: Vec<usize> = (0..k).filter(|&c| tp[c] + fp[c] + fneg[c] > 0).collect();
    let f1_sum: f64 = present
        .iter()
        .map(|&c| {
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            2.0 * tp[c] as f64 / denom as f64
        })
        .sum();
    let macro_f1 = if present.is_empty() {
        0.0
    } else {
        f1_sum / present.len() as f64
    };
    Ok((correct as f64 / d.n_rows().max(1) as f64, macro_f1))
}
