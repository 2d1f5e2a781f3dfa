//! Dempster-Shafer structures over per-tree SHAP values.
//!
//! Focal elements are equal-width histogram bins over `[min, max]` of the
//! values: half-open `[e_i, e_{i+1})` except the last, which is closed. A
//! bin's mass is the fraction of values falling in it. Belief sums the bins
//! contained in a query interval, plausibility the bins intersecting it.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An interval of the real line with explicit endpoint closedness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalQuery {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl IntervalQuery {
    pub fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::Evidence(format!(
                "query needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(IntervalQuery {
            lo,
            hi,
            lo_closed,
            hi_closed,
        })
    }

    /// `[lo, hi]`
    pub fn closed(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, true, true)
    }

    /// `[lo, hi)`
    pub fn half_open(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, true, false)
    }

    /// `(lo, hi)`
    pub fn open(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, false, false)
    }

    fn point(v: f64) -> Self {
        IntervalQuery {
            lo: v,
            hi: v,
            lo_closed: true,
            hi_closed: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn contains_point(&self, v: f64) -> bool {
        let above = v > self.lo || (v == self.lo && self.lo_closed);
        let below = v < self.hi || (v == self.hi && self.hi_closed);
        above && below
    }

    pub fn intersection(&self, other: &IntervalQuery) -> IntervalQuery {
        let (lo, lo_closed) = match self.lo.total_cmp(&other.lo) {
            std::cmp::Ordering::Greater => (self.lo, self.lo_closed),
            std::cmp::Ordering::Less => (other.lo, other.lo_closed),
            std::cmp::Ordering::Equal => (self.lo, self.lo_closed && other.lo_closed),
        };
        let (hi, hi_closed) = match self.hi.total_cmp(&other.hi) {
            std::cmp::Ordering::Less => (self.hi, self.hi_closed),
            std::cmp::Ordering::Greater => (other.hi, other.hi_closed),
            std::cmp::Ordering::Equal => (self.hi, self.hi_closed && other.hi_closed),
        };
        IntervalQuery {
            lo,
            hi,
            lo_closed,
            hi_closed,
        }
    }

    pub fn intersects(&self, other: &IntervalQuery) -> bool {
        !self.intersection(other).is_empty()
    }

    /// `inner ⊆ self`.
    pub fn contains(&self, inner: &IntervalQuery) -> bool {
        if inner.is_empty() {
            return true;
        }
        let lower =
            self.lo < inner.lo || (self.lo == inner.lo && (self.lo_closed || !inner.lo_closed));
        let upper =
            self.hi > inner.hi || (self.hi == inner.hi && (self.hi_closed || !inner.hi_closed));
        lower && upper
    }
}

/// Binned basic probability assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefStructure {
    /// `B + 1` edges; both equal for the single point bin of constant input.
    pub bin_edges: Vec<f64>,
    pub masses: Vec<f64>,
    pub counts: Vec<usize>,
    pub support_count: usize,
}

/// Default bin count `ceil(sqrt(n))`.
pub fn default_bins(n_values: usize) -> usize {
    ((n_values as f64).sqrt().ceil() as usize).max(1)
}

pub fn build_bpa(values: &[f64], n_bins: usize) -> Result<BeliefStructure> {
    if values.is_empty() {
        return Err(Error::Evidence("no values to build a BPA from".into()));
    }
    if n_bins == 0 {
        return Err(Error::Evidence("need at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evidence("non-finite SHAP value".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = values.len();
    if lo == hi {
        return Ok(BeliefStructure {
            bin_edges: vec![lo, hi],
            masses: vec![1.0],
            counts: vec![n],
            support_count: n,
        });
    }
    let mut edges: Vec<f64> = (0..n_bins)
        .map(|i| lo + (hi - lo) * i as f64 / n_bins as f64)
        .collect();
    edges.push(hi);
    // ranges near the float resolution can collapse neighbouring edges
    edges.dedup();
    let b = edges.len() - 1;
    let mut counts = vec![0usize; b];
    for &v in values {
        counts[edges[1..b].partition_point(|&e| e <= v)] += 1;
    }
    Ok(BeliefStructure {
        bin_edges: edges,
        masses: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        counts,
        support_count: n,
    })
}

impl BeliefStructure {
    pub fn n_bins(&self) -> usize {
        self.masses.len()
    }

    pub fn is_point_mass(&self) -> bool {
        self.bin_edges.len() == 2 && self.bin_edges[0] == self.bin_edges[1]
    }

    pub fn bin(&self, i: usize) -> IntervalQuery {
        if self.is_point_mass() {
            return IntervalQuery::point(self.bin_edges[0]);
        }
        IntervalQuery {
            lo: self.bin_edges[i],
            hi: self.bin_edges[i + 1],
            lo_closed: true,
            hi_closed: i + 1 == self.n_bins(),
        }
    }

    /// The closed span `[e_0, e_B]` of the focal elements.
    pub fn range(&self) -> IntervalQuery {
        IntervalQuery {
            lo: self.bin_edges[0],
            hi: *self.bin_edges.last().unwrap(),
            lo_closed: true,
            hi_closed: true,
        }
    }

    fn mass_where(&self, keep: impl Fn(&IntervalQuery) -> bool) -> f64 {
        let hits: usize = (0..self.n_bins())
            .filter(|&i| keep(&self.bin(i)))
            .map(|i| self.counts[i])
            .sum();
        hits as f64 / self.support_count as f64
    }

    pub fn belief(&self, q: &IntervalQuery) -> f64 {
        self.mass_where(|bin| q.contains(bin))
    }

    pub fn plausibility(&self, q: &IntervalQuery) -> f64 {
        self.mass_where(|bin| q.intersects(bin))
    }

    /// Belief of a union of disjoint intervals separated by non-empty gaps.
    pub fn belief_union(&self, pieces: &[IntervalQuery]) -> f64 {
        self.mass_where(|bin| pieces.iter().any(|p| p.contains(bin)))
    }

    /// `range \ q` as at most two intervals.
    pub fn complement(&self, q: &IntervalQuery) -> Vec<IntervalQuery> {
        let r = self.range();
        let left = IntervalQuery {
            lo: r.lo,
            lo_closed: true,
            hi: q.lo,
            hi_closed: !q.lo_closed,
        };
        let right = IntervalQuery {
            lo: q.hi,
            lo_closed: !q.hi_closed,
            hi: r.hi,
            hi_closed: true,
        };
        [left, right]
            .into_iter()
            .map(|p| p.intersection(&r))
            .filter(|p| !p.is_empty())
            .collect()
    }

    /// Candidate endpoints: bin edges merged with `resolution + 1` evenly
    /// spaced points over the range.
    pub fn query_grid(&self, resolution: usize) -> Vec<f64> {
        let r = self.range();
        let res = resolution.max(self.n_bins());
        let mut grid: Vec<f64> = (0..=res)
            .map(|j| r.lo + (r.hi - r.lo) * j as f64 / res as f64)
            .chain(self.bin_edges.iter().copied())
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }

    /// `max (Pl(A) - Bel(A))` over closed intervals `A` with endpoints on
    /// [`query_grid`](Self::query_grid). A resolution below the bin count is
    /// raised to it.
    pub fn conflict(&self, resolution: usize) -> f64 {
        if self.is_point_mass() {
            return 0.0;
        }
        let grid = self.query_grid(resolution);
        let mut best = 0.0f64;
        for (a, &lo) in grid.iter().enumerate() {
            for &hi in &grid[a + 1..] {
                let q = IntervalQuery {
                    lo,
                    hi,
                    lo_closed: true,
                    hi_closed: true,
                };
                best = best.max(self.plausibility(&q) - self.belief(&q));
            }
        }
        best
    }
}
