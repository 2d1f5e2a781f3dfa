//! Uncertainty distribution of a SHAP value: the empirical CDF `Gamma` of the
//! observed values, a histogram density, its differential entropy, and the
//! variance ranking used to pick acquisition targets.

use serde::{Deserialize, Serialize};

use crate::decompose::check_samples;
use crate::evidence::{build_bpa, default_bins};
use crate::shap::ShapSample;
use crate::stats;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyDistribution {
    pub sorted_values: Vec<f64>,
    /// Differential entropy in nats; `None` for a point mass.
    pub entropy: Option<f64>,
    pub density_edges: Vec<f64>,
    /// Density per bin, `mass / width`.
    pub density: Vec<f64>,
}

impl UncertaintyDistribution {
    /// Histogram with `ceil(sqrt(n))` equal-width bins over `[min, max]`.
    pub fn new(values: &[f64]) -> Result<Self> {
        Self::with_bins(values, default_bins(values.len()))
    }

    pub fn with_bins(values: &[f64], n_bins: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Uncertainty("no values".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Uncertainty("non-finite value".into()));
        }
        let sorted_values = stats::sorted(values);
        let hist = build_bpa(values, n_bins).map_err(|e| Error::Uncertainty(e.to_string()))?;
        if hist.is_point_mass() {
            return Ok(UncertaintyDistribution {
                sorted_values,
                entropy: None,
                density_edges: hist.bin_edges,
                density: Vec::new(),
            });
        }
        let widths: Vec<f64> = hist.bin_edges.windows(2).map(|w| w[1] - w[0]).collect();
        let density: Vec<f64> = hist
            .masses
            .iter()
            .zip(&widths)
            .map(|(p, w)| p / w)
            .collect();
        let entropy = -hist
            .masses
            .iter()
            .zip(&density)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, d)| p * d.ln())
            .sum::<f64>();
        Ok(UncertaintyDistribution {
            sorted_values,
            entropy: Some(entropy),
            density_edges: hist.bin_edges,
            density,
        })
    }

    /// Fraction of values `<= c`.
    pub fn gamma_at(&self, c: f64) -> Result<f64> {
        if !c.is_finite() {
            return Err(Error::Uncertainty(format!("cannot evaluate at {c}")));
        }
        let k = self.sorted_values.partition_point(|&v| v <= c);
        Ok(k as f64 / self.sorted_values.len() as f64)
    }

    /// Smallest value `c` with `Gamma(c) >= 0.5`.
    pub fn median(&self) -> f64 {
        let n = self.sorted_values.len();
        self.sorted_values[n.div_ceil(2) - 1]
    }

    pub fn is_point_mass(&self) -> bool {
        self.entropy.is_none()
    }
}

pub fn entropy(values: &[f64]) -> Result<Option<f64>> {
    Ok(UncertaintyDistribution::new(values)?.entropy)
}

/// Features ordered by descending pooled SHAP variance, ties by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionRanking {
    /// `per_class[c]` ranks features for class `c`.
    pub per_class: Vec<Vec<usize>>,
    /// Ranking on the variance summed over classes.
    pub all_classes: Vec<usize>,
    /// Pooled per-tree variance, `[feature * n_classes + class]`.
    pub pooled_variance: Vec<f64>,
}

fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

pub fn rank_acquisition_targets(samples: &[ShapSample]) -> Result<AcquisitionRanking> {
    check_samples(samples, 2).map_err(Error::Uncertainty)?;
    let (f, c) = (samples[0].n_features(), samples[0].n_classes());
    let mut pooled_variance = Vec::with_capacity(f * c);
    let mut pool = Vec::new();
    for j in 0..f {
        for k in 0..c {
            pool.clear();
            for s in samples {
                pool.extend((0..s.n_trees()).map(|t| s.raw.get(t, j, k)));
            }
            pooled_variance.push(stats::variance(&pool));
        }
    }
    let per_class = (0..c)
        .map(|k| {
            let col: Vec<f64> = (0..f).map(|j| pooled_variance[j * c + k]).collect();
            rank_desc(&col)
        })
        .collect();
    let summed: Vec<f64> = (0..f)
        .map(|j| pooled_variance[j * c..(j + 1) * c].iter().sum())
        .collect();
    Ok(AcquisitionRanking {
        per_class,
        all_classes: rank_desc(&summed),
        pooled_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shap::ShapMatrix;

    #[test]
    fn cdf_of_three_values() {
        let u = UncertaintyDistribution::new(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(u.gamma_at(0.0).unwrap(), 0.0);
        assert_eq!(u.gamma_at(2.0).unwrap(), 2.0 / 3.0);
        assert_eq!(u.gamma_at(3.0).unwrap(), 1.0);
        assert_eq!(u.gamma_at(10.0).unwrap(), 1.0);
        assert_eq!(u.median(), 2.0);
        assert!(u.gamma_at(f64::NAN).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        let vals: Vec<f64> = (0..97).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let u = UncertaintyDistribution::new(&vals).unwrap();
        let integral: f64 = u
            .density
            .iter()
            .zip(u.density_edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum();
        assert!((integral - 1.0).abs() < 1e-9);
    }

    #[test]
    fn evenly_spread_unit_interval_has_zero_entropy() {
        let n = 10_000;
        let vals: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(entropy(&vals).unwrap().unwrap().abs() < 0.05);
        let wide: Vec<f64> = vals.iter().map(|v| 2.0 * v).collect();
        let h = entropy(&wide).unwrap().unwrap();
        assert!((h - std::f64::consts::LN_2).abs() < 0.05);
    }

    #[test]
    fn entropy_is_translation_invariant() {
        let vals: Vec<f64> = (0..500)
            .map(|i| ((i * 7919) % 1000) as f64 / 1000.0)
            .collect();
        let shifted: Vec<f64> = vals.iter().map(|v| v + 3.0).collect();
        let (a, b) = (
            entropy(&vals).unwrap().unwrap(),
            entropy(&shifted).unwrap().unwrap(),
        );
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn constant_values_are_a_point_mass() {
        let u = UncertaintyDistribution::new(&[0.4; 8]).unwrap();
        assert!(u.is_point_mass());
        assert_eq!(u.gamma_at(0.39).unwrap(), 0.0);
        assert_eq!(u.gamma_at(0.4).unwrap(), 1.0);
    }

    fn samples(per_feature_spread: &[f64]) -> Vec<ShapSample> {
        let f = per_feature_spread.len();
        (0..2)
            .map(|s| {
                let sign = if s == 0 { -1.0 } else { 1.0 };
                let values = (0..2)
                    .flat_map(|t| {
                        let sign_t = if t == 0 { sign } else { -sign };
                        per_feature_spread
                            .iter()
                            .map(move |d| sign_t * d)
                            .collect::<Vec<_>>()
                    })
                    .collect();
                ShapSample::from_raw(ShapMatrix {
                    n_trees: 2,
                    n_features: f,
                    n_classes: 1,
                    values,
                    base_values: vec![0.0; 2],
                })
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn ranking_by_variance_and_index() {
        // values +-2 vs +-1: variances 4 and 1
        let r = rank_acquisition_targets(&samples(&[2.0, 1.0])).unwrap();
        assert_eq!(r.per_class[0], vec![0, 1]);
        assert_eq!(r.pooled_variance, vec![4.0, 1.0]);
        let r = rank_acquisition_targets(&samples(&[1.0, 3.0, 1.0])).unwrap();
        assert_eq!(r.all_classes, vec![1, 0, 2]);
        let r = rank_acquisition_targets(&samples(&[0.5, 0.5, 0.5])).unwrap();
        assert_eq!(r.all_classes, vec![0, 1, 2]);
    }
}
