//! Exact interventional SHAP for classification trees.
//!
//! The game for a tree `t`, instance `x` and background set `B` is
//! `v(S) = mean_{z in B} t(x_S, z_{not S})`, evaluated per class on the leaf
//! class probabilities. For a single background row the hybrid input reaches
//! a leaf only through a specific pattern of "follow x" / "follow z" features
//! along the path, so the leaf's Shapley share has a closed form in the
//! number of features of each kind. Summing those shares over every leaf the
//! hybrid can reach, and averaging over `B`, gives the exact values in
//! `O(|B| * leaves * depth)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::forest::{check_instance, DecisionTree, Forest, TreeNode};
use crate::hypothesis::SubEnsemble;
use crate::{Error, Result};

/// Largest feature count [`brute_force_shapley`] will enumerate.
pub const ENUMERATION_LIMIT: usize = 20;

/// SHAP values of one tree at one instance, `values[j * n_classes + c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeAttribution {
    pub n_features: usize,
    pub n_classes: usize,
    pub values: Vec<f64>,
    /// Mean tree output over the background, per class.
    pub base: Vec<f64>,
}

impl TreeAttribution {
    pub fn get(&self, feature: usize, class: usize) -> f64 {
        self.values[feature * self.n_classes + class]
    }

    /// `base + sum_j phi_j` per class; equals the tree output at `x`.
    pub fn reconstructed_output(&self) -> Vec<f64> {
        let mut out = self.base.clone();
        for j in 0..self.n_features {
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.get(j, c);
            }
        }
        out
    }
}

fn check_inputs(n_features: usize, x: &[f64], background: &Dataset) -> Result<()> {
    check_instance(x, n_features).map_err(Error::Shap)?;
    if background.is_empty() {
        return Err(Error::Shap("background set is empty".into()));
    }
    if background.n_features() != n_features {
        return Err(Error::Shap(format!(
            "background has {} features, instance has {n_features}",
            background.n_features()
        )));
    }
    Ok(())
}

fn leaf_probs(tree: &DecisionTree, node: usize) -> &[f64] {
    match &tree.nodes[node] {
        TreeNode::Leaf { class_probs, .. } => class_probs,
        TreeNode::Internal { .. } => unreachable!("not a leaf"),
    }
}

fn n_classes_of(tree: &DecisionTree) -> usize {
    tree.nodes
        .iter()
        .find_map(|n| match n {
            TreeNode::Leaf { class_probs, .. } => Some(class_probs.len()),
            TreeNode::Internal { .. } => None,
        })
        .expect("a tree has at least one leaf")
}

/// `1 / C(n, k)` via a running product.
fn inv_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 1..=k {
        r *= i as f64 / (n - k + i) as f64;
    }
    r
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Open,
    FollowX,
    FollowZ,
}

struct Walker<'a> {
    tree: &'a DecisionTree,
    x: &'a [f64],
    z: &'a [f64],
    n_classes: usize,
    side: Vec<Side>,
    decided: Vec<usize>,
    n_x: usize,
    phi: &'a mut [f64],
}

impl Walker<'_> {
    fn walk(&mut self, node: usize) {
        match &self.tree.nodes[node] {
            TreeNode::Leaf { class_probs, .. } => self.credit(class_probs),
            &TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                let x_left = self.x[feature] <= threshold;
                let z_left = self.z[feature] <= threshold;
                let pick = |go_left: bool| if go_left { left } else { right };
                match self.side[feature] {
                    Side::FollowX => self.walk(pick(x_left)),
                    Side::FollowZ => self.walk(pick(z_left)),
                    Side::Open if x_left == z_left => self.walk(pick(x_left)),
                    Side::Open => {
                        self.decided.push(feature);
                        self.side[feature] = Side::FollowX;
                        self.n_x += 1;
                        self.walk(pick(x_left));
                        self.n_x -= 1;
                        self.side[feature] = Side::FollowZ;
                        self.walk(pick(z_left));
                        self.side[feature] = Side::Open;
                        self.decided.pop();
                    }
                }
            }
        }
    }

    /// The leaf is reached iff every x-side feature is in the coalition and no
    /// z-side feature is. With `a` x-side and `b` z-side features, an x-side
    /// feature earns `(a-1)! b! / (a+b)!` of the leaf value and a z-side
    /// feature loses `a! (b-1)! / (a+b)!`.
    fn credit(&mut self, leaf: &[f64]) {
        let a = self.n_x;
        let b = self.decided.len() - a;
        if a + b == 0 {
            return;
        }
        let w_x = if a > 0 {
            inv_binomial(a + b, a) / a as f64
        } else {
            0.0
        };
        let w_z = if b > 0 {
            inv_binomial(a + b, b) / b as f64
        } else {
            0.0
        };
        let nc = self.n_classes;
        for &j in &self.decided {
            let w = match self.side[j] {
                Side::FollowX => w_x,
                Side::FollowZ => -w_z,
                Side::Open => unreachable!(),
            };
            for (p, v) in self.phi[j * nc..(j + 1) * nc].iter_mut().zip(leaf) {
                *p += w * v;
            }
        }
    }
}

/// Exact interventional SHAP values of `tree` at `x` against `background`.
pub fn tree_shap(tree: &DecisionTree, x: &[f64], background: &Dataset) -> Result<TreeAttribution> {
    let n_features = x.len();
    check_inputs(background.n_features(), x, background)?;
    let n_classes = n_classes_of(tree);
    let mut phi = vec![0.0; n_features * n_classes];
    let mut base = vec![0.0; n_classes];
    let mut side = vec![Side::Open; n_features];
    let mut decided = Vec::new();
    for z in background.rows() {
        let mut w = Walker {
            tree,
            x,
            z,
            n_classes,
            side: std::mem::take(&mut side),
            decided: std::mem::take(&mut decided),
            n_x: 0,
            phi: &mut phi,
        };
        w.walk(tree.root);
        side = w.side;
        decided = w.decided;
        for (b, p) in base.iter_mut().zip(leaf_probs(tree, tree.leaf_index(z))) {
            *b += p;
        }
    }
    let nb = background.n_rows() as f64;
    phi.iter_mut().for_each(|p| *p /= nb);
    base.iter_mut().for_each(|b| *b /= nb);
    Ok(TreeAttribution {
        n_features,
        n_classes,
        values: phi,
        base,
    })
}

/// Shapley values by enumerating all `2^n` coalitions of the same game as
/// [`tree_shap`]. Test oracle; refuses more than [`ENUMERATION_LIMIT`] features.
pub fn brute_force_shapley(
    tree: &DecisionTree,
    x: &[f64],
    background: &Dataset,
) -> Result<TreeAttribution> {
    let n = x.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::Shap(format!(
            "{n} features exceed the enumeration limit of {ENUMERATION_LIMIT}"
        )));
    }
    check_inputs(background.n_features(), x, background)?;
    let nc = n_classes_of(tree);
    let nb = background.n_rows() as f64;

    let mut game = vec![0.0; (1usize << n) * nc];
    let mut hybrid = vec![0.0; n];
    for mask in 0..(1usize << n) {
        let v = &mut game[mask * nc..(mask + 1) * nc];
        for z in background.rows() {
            for j in 0..n {
                hybrid[j] = if mask >> j & 1 == 1 { x[j] } else { z[j] };
            }
            for (acc, p) in v.iter_mut().zip(tree.predict(&hybrid)) {
                *acc += p;
            }
        }
        v.iter_mut().for_each(|a| *a /= nb);
    }

    // weight(s) = s! (n - s - 1)! / n!
    let weight = |s: usize| inv_binomial(n - 1, s) / n as f64;
    let mut values = vec![0.0; n * nc];
    for i in 0..n {
        for mask in 0..(1usize << n) {
            if mask >> i & 1 == 1 {
                continue;
            }
            let w = weight(mask.count_ones() as usize);
            let with = mask | (1 << i);
            for c in 0..nc {
                values[i * nc + c] += w * (game[with * nc + c] - game[mask * nc + c]);
            }
        }
    }
    Ok(TreeAttribution {
        n_features: n,
        n_classes: nc,
        values,
        base: game[..nc].to_vec(),
    })
}

/// [`tree_shap`] for every tree of the forest, in tree order.
pub fn forest_tree_shap(
    forest: &Forest,
    x: &[f64],
    background: &Dataset,
) -> Result<Vec<TreeAttribution>> {
    check_inputs(forest.n_features, x, background)?;
    forest
        .trees
        .par_iter()
        .map(|t| tree_shap(t, x, background))
        .collect()
}

/// Per-tree SHAP tensor of one sub-ensemble: `values[(t * F + j) * C + c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub n_trees: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub values: Vec<f64>,
    /// `base_values[t * C + c]`.
    pub base_values: Vec<f64>,
}

impl ShapMatrix {
    pub fn from_attributions(rows: &[&TreeAttribution]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Shap("empty sub-ensemble".into()))?;
        let (f, c) = (first.n_features, first.n_classes);
        let mut values = Vec::with_capacity(rows.len() * f * c);
        let mut base_values = Vec::with_capacity(rows.len() * c);
        for r in rows {
            if r.n_features != f || r.n_classes != c {
                return Err(Error::Shap("attribution shapes differ".into()));
            }
            values.extend_from_slice(&r.values);
            base_values.extend_from_slice(&r.base);
        }
        Ok(ShapMatrix {
            n_trees: rows.len(),
            n_features: f,
            n_classes: c,
            values,
            base_values,
        })
    }

    pub fn get(&self, tree: usize, feature: usize, class: usize) -> f64 {
        self.values[(tree * self.n_features + feature) * self.n_classes + class]
    }

    /// The per-tree values of one feature/class cell.
    pub fn column(&self, feature: usize, class: usize) -> Vec<f64> {
        (0..self.n_trees)
            .map(|t| self.get(t, feature, class))
            .collect()
    }
}

/// One sub-ensemble's attribution summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSample {
    pub raw: ShapMatrix,
    /// `[j * C + c]`, mean over the (multiplicity-expanded) trees.
    pub mean: Vec<f64>,
    pub mean_base: Vec<f64>,
    /// Population variance across trees per feature/class.
    pub covariance_diag: Vec<f64>,
    /// `mean + 0.5 * covariance_diag`.
    pub adjusted: Vec<f64>,
}

impl ShapSample {
    pub fn from_raw(raw: ShapMatrix) -> Result<Self> {
        if raw.n_trees == 0 {
            return Err(Error::Shap("empty sub-ensemble".into()));
        }
        let (f, c) = (raw.n_features, raw.n_classes);
        let m = raw.n_trees as f64;
        // shifted by the first tree so constant columns keep their value exactly
        let first = &raw.values[..f * c];
        let mut mean = vec![0.0; f * c];
        for t in 1..raw.n_trees {
            for ((acc, v), v0) in mean
                .iter_mut()
                .zip(&raw.values[t * f * c..(t + 1) * f * c])
                .zip(first)
            {
                *acc += v - v0;
            }
        }
        mean.iter_mut()
            .zip(first)
            .for_each(|(v, v0)| *v = v0 + *v / m);
        let mut var = vec![0.0; f * c];
        for t in 0..raw.n_trees {
            for ((acc, v), mu) in var
                .iter_mut()
                .zip(&raw.values[t * f * c..(t + 1) * f * c])
                .zip(&mean)
            {
                *acc += (v - mu) * (v - mu);
            }
        }
        var.iter_mut().for_each(|v| *v /= m);
        let mut mean_base = vec![0.0; c];
        for t in 0..raw.n_trees {
            for (acc, b) in mean_base
                .iter_mut()
                .zip(&raw.base_values[t * c..(t + 1) * c])
            {
                *acc += b;
            }
        }
        mean_base.iter_mut().for_each(|v| *v /= m);
        let adjusted = mean.iter().zip(&var).map(|(mu, v)| mu + 0.5 * v).collect();
        Ok(ShapSample {
            raw,
            mean,
            mean_base,
            covariance_diag: var,
            adjusted,
        })
    }

    pub fn n_features(&self) -> usize {
        self.raw.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.raw.n_classes
    }

    pub fn n_trees(&self) -> usize {
        self.raw.n_trees
    }

    /// Full across-tree feature covariance for one class, row-major `F x F`,
    /// population-normalized. Only its diagonal enters the adjustment.
    pub fn covariance(&self, class: usize) -> Vec<f64> {
        let (f, c) = (self.n_features(), self.n_classes());
        let m = self.n_trees() as f64;
        let mut cov = vec![0.0; f * f];
        for t in 0..self.n_trees() {
            for a in 0..f {
                let da = self.raw.get(t, a, class) - self.mean[a * c + class];
                for b in 0..f {
                    let db = self.raw.get(t, b, class) - self.mean[b * c + class];
                    cov[a * f + b] += da * db;
                }
            }
        }
        cov.iter_mut().for_each(|v| *v /= m);
        cov
    }

    /// The per-sample summary: `adjusted` or `mean`.
    pub fn summary(&self, use_adjusted: bool) -> &[f64] {
        if use_adjusted {
            &self.adjusted
        } else {
            &self.mean
        }
    }
}

/// Builds a sample from precomputed per-tree attributions. Raw rows are laid
/// out by ascending tree index, repeated by multiplicity.
pub fn sample_from_table(table: &[TreeAttribution], sub: &SubEnsemble) -> Result<ShapSample> {
    if sub.indices.is_empty() {
        return Err(Error::Shap("empty sub-ensemble".into()));
    }
    let mut idx = sub.indices.clone();
    idx.sort_unstable();
    let rows = idx
        .iter()
        .map(|&k| {
            table
                .get(k)
                .ok_or_else(|| Error::Shap(format!("tree index {k} out of range")))
        })
        .collect::<Result<Vec<_>>>()?;
    ShapSample::from_raw(ShapMatrix::from_attributions(&rows)?)
}

/// SHAP for a sub-ensemble: exact values per distinct tree, computed once,
/// then expanded by multiplicity and summarized.
pub fn constrained_tree_shap(
    forest: &Forest,
    sub: &SubEnsemble,
    x: &[f64],
    background: &Dataset,
) -> Result<ShapSample> {
    if sub.indices.is_empty() {
        return Err(Error::Shap("empty sub-ensemble".into()));
    }
    check_inputs(forest.n_features, x, background)?;
    let mut distinct = sub.indices.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if let Some(&k) = distinct.iter().find(|&&k| k >= forest.n_trees()) {
        return Err(Error::Shap(format!("tree index {k} out of range")));
    }
    let computed: Vec<TreeAttribution> = distinct
        .par_iter()
        .map(|&k| tree_shap(&forest.trees[k], x, background))
        .collect::<Result<_>>()?;
    let rows = {
        let mut idx = sub.indices.clone();
        idx.sort_unstable();
        idx.iter()
            .map(|k| &computed[distinct.binary_search(k).expect("index is present")])
            .collect::<Vec<_>>()
    };
    ShapSample::from_raw(ShapMatrix::from_attributions(&rows)?)
}
