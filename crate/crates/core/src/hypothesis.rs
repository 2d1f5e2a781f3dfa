//! Dirichlet-weighted sub-ensemble sampling.
//!
//! Trees are weighted by a softmax of their out-of-bag accuracy at
//! temperature `beta`. Each sample draws `pi ~ Dirichlet(alpha * w)` and then
//! `m` tree indices from `Categorical(pi)` with replacement. Sample `s` uses
//! its own seed stream derived from `(seed, s)`, so the output does not depend
//! on evaluation order or thread count.
//!
//! Gamma variates come from Marsaglia & Tsang's squeeze method; shapes below
//! one use the boost `G(a) = G(a + 1) * U^(1/a)`. Everything is carried in log
//! space so that the tiny shapes produced by small `alpha * w_k` never
//! underflow to an all-zero draw.

use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Domain};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeWeights {
    pub accuracies: Vec<f64>,
    pub beta: f64,
    pub weights: Vec<f64>,
}

/// `w_k = exp(beta * a_k) / sum_j exp(beta * a_j)`, evaluated with the
/// maximum subtracted.
pub fn compute_weights(accuracies: &[f64], beta: f64) -> Result<TreeWeights> {
    if accuracies.is_empty() {
        return Err(Error::Sampling("no tree accuracies".into()));
    }
    if accuracies.iter().any(|a| !a.is_finite()) {
        return Err(Error::Sampling("non-finite tree accuracy".into()));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::Sampling(format!(
            "temperature must be finite and >= 0, got {beta}"
        )));
    }
    let top = accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = accuracies
        .iter()
        .map(|a| (beta * (a - top)).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    Ok(TreeWeights {
        accuracies: accuracies.to_vec(),
        beta,
        weights: exps.iter().map(|e| e / total).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Trees drawn per sub-ensemble; `None` means the forest size.
    pub subsize: Option<usize>,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_samples: 500,
            alpha: 0.5,
            beta: 5.0,
            subsize: None,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Sampling("need at least one sample".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Sampling(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Sampling(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        if self.subsize == Some(0) {
            return Err(Error::Sampling("subsize must be at least 1".into()));
        }
        Ok(())
    }
}

/// One hypothesis: a multiset of tree indices and the simplex point it
/// was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubEnsemble {
    pub sample_id: usize,
    pub pi: Vec<f64>,
    /// Tree indices in draw order; repeats are multiplicity.
    pub indices: Vec<usize>,
}

impl SubEnsemble {
    /// `(tree index, multiplicity)` by ascending index.
    pub fn multiplicities(&self) -> Vec<(usize, usize)> {
        let mut sorted = self.indices.clone();
        sorted.sort_unstable();
        let mut out: Vec<(usize, usize)> = Vec::new();
        for k in sorted {
            match out.last_mut() {
                Some((last, n)) if *last == k => *n += 1,
                _ => out.push((k, 1)),
            }
        }
        out
    }
}

/// Log of a `Gamma(shape, 1)` variate.
pub fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let u: f64 = rng.sample(Open01);
        return sample_log_gamma(shape + 1.0, rng) + u.ln() / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u: f64 = rng.sample(Open01);
        if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
            return (d * v).ln();
        }
    }
}

/// `Dirichlet(concentration)` by normalizing independent Gamma draws.
pub fn sample_dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = concentration
        .iter()
        .map(|&a| sample_log_gamma(a, rng))
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Inverse-CDF draw; zero-mass categories are never selected.
fn sample_categorical<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let total = *cumulative.last().expect("non-empty");
    let u = rng.random::<f64>() * total;
    let i = cumulative.partition_point(|&c| c <= u);
    if i < cumulative.len() {
        return i;
    }
    // u rounded up to the total: take the last category with mass
    let mut j = cumulative.len() - 1;
    while j > 0 && cumulative[j] == cumulative[j - 1] {
        j -= 1;
    }
    j
}

fn draw_one(w: &TreeWeights, cfg: &SamplerConfig, m: usize, sample_id: usize) -> SubEnsemble {
    let mut rng = rng::stream(cfg.seed, Domain::Sample, sample_id as u64);
    let concentration: Vec<f64> = w.weights.iter().map(|wk| cfg.alpha * wk).collect();
    let pi = sample_dirichlet(&concentration, &mut rng);
    let mut cumulative = Vec::with_capacity(pi.len());
    let mut acc = 0.0;
    for p in &pi {
        acc += p;
        cumulative.push(acc);
    }
    let indices = (0..m)
        .map(|_| sample_categorical(&cumulative, &mut rng))
        .collect();
    SubEnsemble {
        sample_id,
        pi,
        indices,
    }
}

/// Draws `cfg.n_samples` sub-ensembles.
pub fn dirichlet_sample(w: &TreeWeights, cfg: &SamplerConfig) -> Result<Vec<SubEnsemble>> {
    cfg.validate()?;
    if w.weights.is_empty() {
        return Err(Error::Sampling("no tree weights".into()));
    }
    if let Some(k) = w
        .weights
        .iter()
        .position(|&wk| (cfg.alpha * wk).is_nan() || cfg.alpha * wk <= 0.0)
    {
        return Err(Error::Sampling(format!(
            "tree {k} has zero Dirichlet concentration"
        )));
    }
    let m = cfg.subsize.unwrap_or(w.weights.len());
    Ok((0..cfg.n_samples)
        .into_par_iter()
        .map(|s| draw_one(w, cfg, m, s))
        .collect())
}
