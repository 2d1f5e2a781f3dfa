//! Reference implementations written directly from the definitions, kept
//! separate from the library code they check.

#![allow(dead_code)]

use ubiqtree::data::Dataset;
use ubiqtree::forest::{DecisionTree, TreeNode};

/// Walks the tree from the root.
pub fn eval_tree(tree: &DecisionTree, x: &[f64]) -> Vec<f64> {
    let mut i = tree.root;
    loop {
        match &tree.nodes[i] {
            TreeNode::Leaf { class_probs, .. } => return class_probs.clone(),
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

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Interventional Shapley values by enumerating every coalition:
/// `v(S)` averages the tree output over background rows with the features
/// outside `S` taken from the background row. Returns `[feature][class]`
/// and the base value `v({})`.
pub fn shapley_by_enumeration(
    tree: &DecisionTree,
    x: &[f64],
    bg: &Dataset,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = x.len();
    let n_classes = eval_tree(tree, x).len();
    let value = |mask: usize| -> Vec<f64> {
        let mut acc = vec![0.0; n_classes];
        for z in bg.rows() {
            let point: Vec<f64> = (0..n)
                .map(|j| if mask >> j & 1 == 1 { x[j] } else { z[j] })
                .collect();
            for (a, p) in acc.iter_mut().zip(eval_tree(tree, &point)) {
                *a += p;
            }
        }
        acc.iter().map(|a| a / bg.n_rows() as f64).collect()
    };
    let v: Vec<Vec<f64>> = (0..1usize << n).map(value).collect();
    let mut phi = vec![vec![0.0; n_classes]; n];
    for (i, row) in phi.iter_mut().enumerate() {
        for mask in 0..1usize << n {
            if mask >> i & 1 == 1 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = factorial(s) * factorial(n - s - 1) / factorial(n);
            for (c, out) in row.iter_mut().enumerate() {
                *out += w * (v[mask | 1 << i][c] - v[mask][c]);
            }
        }
    }
    (phi, v[0].clone())
}

/// Replaces every leaf of `a` with a copy of `b` whose leaves hold the mean
/// of the two leaf distributions, so the result computes `(a(x) + b(x)) / 2`.
pub fn averaged_tree(a: &DecisionTree, b: &DecisionTree) -> DecisionTree {
    fn copy_b(b: &DecisionTree, node: usize, leaf_a: &[f64], out: &mut Vec<TreeNode>) -> usize {
        let id = out.len();
        match &b.nodes[node] {
            TreeNode::Leaf { class_probs, cover } => out.push(TreeNode::Leaf {
                class_probs: leaf_a
                    .iter()
                    .zip(class_probs)
                    .map(|(p, q)| (p + q) / 2.0)
                    .collect(),
                cover: *cover,
            }),
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
                cover,
            } => {
                out.push(TreeNode::Leaf {
                    class_probs: Vec::new(),
                    cover: 0,
                });
                let l = copy_b(b, *left, leaf_a, out);
                let r = copy_b(b, *right, leaf_a, out);
                out[id] = TreeNode::Internal {
                    feature: *feature,
                    threshold: *threshold,
                    left: l,
                    right: r,
                    cover: *cover,
                };
            }
        }
        id
    }
    fn copy_a(a: &DecisionTree, b: &DecisionTree, node: usize, out: &mut Vec<TreeNode>) -> usize {
        match &a.nodes[node] {
            TreeNode::Leaf { class_probs, .. } => copy_b(b, b.root, class_probs, out),
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
                cover,
            } => {
                let id = out.len();
                out.push(TreeNode::Leaf {
                    class_probs: Vec::new(),
                    cover: 0,
                });
                let l = copy_a(a, b, *left, out);
                let r = copy_a(a, b, *right, out);
                out[id] = TreeNode::Internal {
                    feature: *feature,
                    threshold: *threshold,
                    left: l,
                    right: r,
                    cover: *cover,
                };
                id
            }
        }
    }
    let mut nodes = Vec::new();
    copy_a(a, b, a.root, &mut nodes);
    DecisionTree { nodes, root: 0 }
}

/// An interval with explicit endpoint closedness.
#[derive(Debug, Clone, Copy)]
pub struct Iv {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Iv {
    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn has(&self, v: f64) -> bool {
        let above = v > self.lo || (v == self.lo && self.lo_closed);
        let below = v < self.hi || (v == self.hi && self.hi_closed);
        above && below
    }

    /// `self` is a subset of `outer`.
    pub fn within(&self, outer: &Iv) -> bool {
        if self.is_empty() {
            return true;
        }
        let lo_ok =
            outer.lo < self.lo || (outer.lo == self.lo && (outer.lo_closed || !self.lo_closed));
        let hi_ok =
            self.hi < outer.hi || (outer.hi == self.hi && (outer.hi_closed || !self.hi_closed));
        lo_ok && hi_ok
    }

    pub fn meets(&self, other: &Iv) -> bool {
        let (lo, lo_closed) = if self.lo > other.lo {
            (self.lo, self.lo_closed)
        } else if other.lo > self.lo {
            (other.lo, other.lo_closed)
        } else {
            (self.lo, self.lo_closed && other.lo_closed)
        };
        let (hi, hi_closed) = if self.hi < other.hi {
            (self.hi, self.hi_closed)
        } else if other.hi < self.hi {
            (other.hi, other.hi_closed)
        } else {
            (self.hi, self.hi_closed && other.hi_closed)
        };
        !Iv {
            lo,
            hi,
            lo_closed,
            hi_closed,
        }
        .is_empty()
    }
}

/// Equal-width focal intervals over `[min, max]`, half-open except the last,
/// and the number of values falling in each.
pub fn focal_elements(values: &[f64], n_bins: usize) -> Vec<(Iv, usize)> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        let point = Iv {
            lo,
            hi,
            lo_closed: true,
            hi_closed: true,
        };
        return vec![(point, values.len())];
    }
    let edge = |i: usize| {
        if i == n_bins {
            hi
        } else {
            lo + (hi - lo) * i as f64 / n_bins as f64
        }
    };
    (0..n_bins)
        .map(|i| {
            let iv = Iv {
                lo: edge(i),
                hi: edge(i + 1),
                lo_closed: true,
                hi_closed: i + 1 == n_bins,
            };
            (iv, values.iter().filter(|&&v| iv.has(v)).count())
        })
        .collect()
}

fn share(focal: &[(Iv, usize)], keep: impl Fn(&Iv) -> bool) -> f64 {
    let total: usize = focal.iter().map(|(_, n)| n).sum();
    let hit: usize = focal.iter().filter(|(f, _)| keep(f)).map(|(_, n)| n).sum();
    hit as f64 / total as f64
}

pub fn belief(focal: &[(Iv, usize)], q: &Iv) -> f64 {
    share(focal, |f| f.within(q))
}

pub fn plausibility(focal: &[(Iv, usize)], q: &Iv) -> f64 {
    share(focal, |f| f.meets(q))
}

/// Mass of the focal elements inside any of `pieces`.
pub fn belief_of_union(focal: &[(Iv, usize)], pieces: &[Iv]) -> f64 {
    share(focal, |f| pieces.iter().any(|p| f.within(p)))
}

/// Population variance by the two-pass textbook formula.
pub fn pop_var(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
