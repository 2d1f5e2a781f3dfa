//! Seeded synthetic classification data for tests, the self-test command and
//! the acceptance suite.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::forest::{DecisionTree, TreeNode};
use crate::rng::{self, Domain};

#[derive(Debug, Clone)]
pub struct Spec {
    pub n_rows: usize,
    pub n_features: usize,
    /// Leading features that drive the label; the rest are pure noise.
    pub n_informative: usize,
    pub n_classes: usize,
    /// Std of the Gaussian noise added to the latent score.
    pub noise: f64,
}

impl Default for Spec {
    fn default() -> Self {
        Spec {
            n_rows: 200,
            n_features: 6,
            n_informative: 3,
            n_classes: 2,
            noise: 0.5,
        }
    }
}

/// Features are i.i.d. standard normal. The latent score is
/// `sum_j x_j / (j + 1)` over informative features plus noise; classes are
/// cut at fixed standard-normal quantile thresholds of the scaled score.
pub fn classification(spec: &Spec, seed: u64) -> Dataset {
    let mut rng = rng::stream(seed, Domain::Synthetic, 0);
    let coef: Vec<f64> = (0..spec.n_informative)
        .map(|j| 1.0 / (j as f64 + 1.0))
        .collect();
    let scale = (coef.iter().map(|c| c * c).sum::<f64>() + spec.noise * spec.noise).sqrt();
    let cuts = class_cuts(spec.n_classes);
    let mut rows = Vec::with_capacity(spec.n_rows);
    let mut labels = Vec::with_capacity(spec.n_rows);
    for i in 0..spec.n_rows {
        let x: Vec<f64> = (0..spec.n_features)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let eps: f64 = rng.sample(StandardNormal);
        let score =
            (coef.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>() + spec.noise * eps) / scale;
        let mut label = cuts.iter().filter(|&&c| score > c).count();
        // force every class to appear in small samples
        if i < spec.n_classes {
            label = i;
        }
        rows.push(x);
        labels.push(label);
    }
    Dataset::new(
        rows,
        labels,
        (0..spec.n_features).map(|j| format!("x{j}")).collect(),
        (0..spec.n_classes).map(|c| format!("c{c}")).collect(),
    )
    .expect("generator produces a valid dataset")
}

/// Two classes split by `x0 > 0` with a margin; `x1` is noise.
pub fn separable(n_rows: usize, seed: u64) -> Dataset {
    let mut rng = rng::stream(seed, Domain::Synthetic, 1);
    let mut rows = Vec::with_capacity(n_rows);
    let mut labels = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let label = i % 2;
        let offset: f64 = rng.random_range(0.5..2.0);
        let x0 = if label == 1 { offset } else { -offset };
        rows.push(vec![x0, rng.random_range(-1.0..1.0)]);
        labels.push(label);
    }
    Dataset::new(
        rows,
        labels,
        vec!["x0".into(), "x1".into()],
        vec!["neg".into(), "pos".into()],
    )
    .expect("generator produces a valid dataset")
}

/// Values on a quarter grid over `[-2, 2]`, so split thresholds and row
/// values coincide often enough to exercise the `<=` boundary.
fn grid_value<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    f64::from(rng.random_range(-8i32..=8)) / 4.0
}

/// A random classification tree: each node below `max_depth` splits with
/// probability 0.7 on a uniformly chosen feature. Leaves hold random class
/// distributions and random covers; internal covers are the child sums.
pub fn random_tree<R: Rng + ?Sized>(
    n_features: usize,
    max_depth: usize,
    n_classes: usize,
    rng: &mut R,
) -> DecisionTree {
    fn grow<R: Rng + ?Sized>(
        nodes: &mut Vec<TreeNode>,
        depth: usize,
        f: usize,
        max_depth: usize,
        c: usize,
        rng: &mut R,
    ) -> usize {
        let id = nodes.len();
        if depth < max_depth && rng.random_bool(0.7) {
            nodes.push(TreeNode::Leaf {
                class_probs: Vec::new(),
                cover: 0,
            });
            let feature = rng.random_range(0..f);
            let threshold = grid_value(rng) * 0.75;
            let left = grow(nodes, depth + 1, f, max_depth, c, rng);
            let right = grow(nodes, depth + 1, f, max_depth, c, rng);
            let cover = nodes[left].cover() + nodes[right].cover();
            nodes[id] = TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
                cover,
            };
        } else {
            let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.0..1.0) + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            let mut class_probs: Vec<f64> = raw.iter().map(|v| v / total).collect();
            // make the distribution sum to one exactly in floating point
            let rest: f64 = class_probs[1..].iter().sum();
            class_probs[0] = 1.0 - rest;
            nodes.push(TreeNode::Leaf {
                class_probs,
                cover: rng.random_range(1..20),
            });
        }
        id
    }
    let mut nodes = Vec::new();
    grow(&mut nodes, 0, n_features, max_depth, n_classes, rng);
    DecisionTree { nodes, root: 0 }
}

/// Rows of quarter-grid values over `[-2, 2]`, labels all zero.
pub fn grid_rows<R: Rng + ?Sized>(
    n_rows: usize,
    n_features: usize,
    n_classes: usize,
    rng: &mut R,
) -> Dataset {
    let rows = (0..n_rows)
        .map(|_| (0..n_features).map(|_| grid_value(rng)).collect())
        .collect();
    Dataset::new(
        rows,
        vec![0; n_rows],
        (0..n_features).map(|j| format!("x{j}")).collect(),
        (0..n_classes.max(2)).map(|c| format!("c{c}")).collect(),
    )
    .expect("generator produces a valid dataset")
}

/// Equally likely classes under a standard-normal score.
fn class_cuts(n_classes: usize) -> Vec<f64> {
    const CUTS: [&[f64]; 4] = [
        &[0.0],
        &[-0.430_727_299_295_457_5, 0.430_727_299_295_457_5],
        &[-0.674_489_750_196_081_7, 0.0, 0.674_489_750_196_081_7],
        &[
            -0.841_621_233_572_914_3,
            -0.253_347_103_135_799_7,
            0.253_347_103_135_799_7,
            0.841_621_233_572_914_3,
        ],
    ];
    assert!(
        (2..=5).contains(&n_classes),
        "synthetic generator supports 2..=5 classes"
    );
    CUTS[n_classes - 2].to_vec()
}
