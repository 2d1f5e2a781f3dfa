//! Aleatoric / epistemic / entanglement decomposition of the SHAP
//! distribution over sub-ensembles.
//!
//! Per feature and class, with `mu_s` and `var_s` the within-sample mean and
//! population variance of sample `s`:
//!
//! * aleatoric `A = mean_s(var_s)`
//! * epistemic `E = var_s(mu_s)`
//! * entanglement `C = cov_s(mu_s, var_s)`
//!
//! `total` is the population variance of every per-tree value pooled across
//! samples. With equal sub-ensemble sizes the law of total variance gives
//! `total = A + E` exactly at the estimator level; the `A + E + 2C` sum is
//! reported separately and is not an identity.

use serde::{Deserialize, Serialize};

use crate::shap::ShapSample;
use crate::stats;
use crate::{Error, Result};

/// All fields are indexed `[feature * n_classes + class]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub n_features: usize,
    pub n_classes: usize,
    pub aleatoric: Vec<f64>,
    pub epistemic: Vec<f64>,
    pub entanglement: Vec<f64>,
    pub total: Vec<f64>,
}

impl VarianceComponents {
    fn at(&self, v: &[f64], feature: usize, class: usize) -> f64 {
        v[feature * self.n_classes + class]
    }

    pub fn aleatoric_at(&self, feature: usize, class: usize) -> f64 {
        self.at(&self.aleatoric, feature, class)
    }

    pub fn epistemic_at(&self, feature: usize, class: usize) -> f64 {
        self.at(&self.epistemic, feature, class)
    }

    pub fn entanglement_at(&self, feature: usize, class: usize) -> f64 {
        self.at(&self.entanglement, feature, class)
    }

    pub fn total_at(&self, feature: usize, class: usize) -> f64 {
        self.at(&self.total, feature, class)
    }
}

pub(crate) fn check_samples(samples: &[ShapSample], min: usize) -> std::result::Result<(), String> {
    if samples.len() < min {
        return Err(format!(
            "need at least {min} samples, got {}",
            samples.len()
        ));
    }
    let first = &samples[0];
    for (s, x) in samples.iter().enumerate() {
        if x.n_features() != first.n_features() || x.n_classes() != first.n_classes() {
            return Err(format!("sample {s} has a different feature/class shape"));
        }
    }
    Ok(())
}

/// Decomposition over the per-sample means.
pub fn decompose_variance(samples: &[ShapSample]) -> Result<VarianceComponents> {
    decompose_variance_with(samples, false)
}

/// With `use_adjusted`, `mu_s` is the sample's adjusted vector; `var_s` and the
/// pooled total are unchanged.
pub fn decompose_variance_with(
    samples: &[ShapSample],
    use_adjusted: bool,
) -> Result<VarianceComponents> {
    check_samples(samples, 2).map_err(Error::Decompose)?;
    let m = samples[0].n_trees();
    if let Some(s) = samples.iter().position(|x| x.n_trees() != m) {
        return Err(Error::Decompose(format!(
            "sample {s} has {} trees, sample 0 has {m}",
            samples[s].n_trees()
        )));
    }
    let (f, c) = (samples[0].n_features(), samples[0].n_classes());
    let cells = f * c;
    let mut out = VarianceComponents {
        n_features: f,
        n_classes: c,
        aleatoric: Vec::with_capacity(cells),
        epistemic: Vec::with_capacity(cells),
        entanglement: Vec::with_capacity(cells),
        total: Vec::with_capacity(cells),
    };
    let mut mus = vec![0.0; samples.len()];
    let mut vars = vec![0.0; samples.len()];
    let mut pooled = Vec::with_capacity(samples.len() * m);
    for j in 0..f {
        for k in 0..c {
            let cell = j * c + k;
            pooled.clear();
            for (s, x) in samples.iter().enumerate() {
                mus[s] = x.summary(use_adjusted)[cell];
                vars[s] = x.covariance_diag[cell];
                pooled.extend((0..m).map(|t| x.raw.get(t, j, k)));
            }
            out.aleatoric.push(stats::mean(&vars));
            out.epistemic.push(stats::variance(&mus));
            out.entanglement.push(stats::covariance(&mus, &vars));
            out.total.push(stats::variance(&pooled));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementRow {
    pub feature: usize,
    pub class: usize,
    pub aleatoric: f64,
    pub epistemic: f64,
    pub entanglement: f64,
    pub twice_entanglement: f64,
    /// Pooled variance; equals `aleatoric + epistemic` up to rounding.
    pub total_pooled: f64,
    pub aleatoric_plus_epistemic: f64,
    /// `A + E + 2C`, not expected to equal the pooled variance.
    pub headline_sum: f64,
}

pub fn entanglement_report(vc: &VarianceComponents) -> Vec<EntanglementRow> {
    let mut rows = Vec::with_capacity(vc.n_features * vc.n_classes);
    for feature in 0..vc.n_features {
        for class in 0..vc.n_classes {
            let a = vc.aleatoric_at(feature, class);
            let e = vc.epistemic_at(feature, class);
            let ent = vc.entanglement_at(feature, class);
            rows.push(EntanglementRow {
                feature,
                class,
                aleatoric: a,
                epistemic: e,
                entanglement: ent,
                twice_entanglement: 2.0 * ent,
                total_pooled: vc.total_at(feature, class),
                aleatoric_plus_epistemic: a + e,
                headline_sum: a + e + 2.0 * ent,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shap::ShapMatrix;

    /// One feature, one class, per-tree values given per sample.
    pub(crate) fn samples_1d(sets: &[&[f64]]) -> Vec<ShapSample> {
        sets.iter()
            .map(|vals| {
                ShapSample::from_raw(ShapMatrix {
                    n_trees: vals.len(),
                    n_features: 1,
                    n_classes: 1,
                    values: vals.to_vec(),
                    base_values: vec![0.0; vals.len()],
                })
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn constant_input_has_no_variance() {
        let s = samples_1d(&[&[0.7, 0.7, 0.7], &[0.7, 0.7, 0.7]]);
        let vc = decompose_variance(&s).unwrap();
        assert_eq!(vc.aleatoric, vec![0.0]);
        assert_eq!(vc.epistemic, vec![0.0]);
        assert_eq!(vc.entanglement, vec![0.0]);
        assert_eq!(vc.total, vec![0.0]);
    }

    #[test]
    fn two_sample_hand_example() {
        // mu = {2, 3}, var = {1, 1}
        let s = samples_1d(&[&[1.0, 3.0], &[2.0, 4.0]]);
        let vc = decompose_variance(&s).unwrap();
        assert_eq!(vc.aleatoric, vec![1.0]);
        assert_eq!(vc.epistemic, vec![0.25]);
        assert_eq!(vc.entanglement, vec![0.0]);
        assert_eq!(vc.total, vec![1.25]);
    }

    #[test]
    fn engineered_positive_entanglement() {
        // within-sample spread grows with the mean: {m - d, m + d} with d^2 = m
        let sets: Vec<Vec<f64>> = [1.0f64, 2.0, 4.0, 8.0]
            .iter()
            .map(|&m| vec![m - m.sqrt(), m + m.sqrt()])
            .collect();
        let refs: Vec<&[f64]> = sets.iter().map(|v| v.as_slice()).collect();
        let vc = decompose_variance(&samples_1d(&refs)).unwrap();
        assert!(vc.entanglement[0] > 0.0);
        let row = &entanglement_report(&vc)[0];
        assert_eq!(row.twice_entanglement, 2.0 * vc.entanglement[0]);
        assert!(row.headline_sum > row.aleatoric_plus_epistemic);
    }

    #[test]
    fn equal_variances_mean_zero_entanglement() {
        let s = samples_1d(&[&[0.0, 2.0], &[5.0, 7.0], &[-3.0, -1.0]]);
        let vc = decompose_variance(&s).unwrap();
        assert!(vc.entanglement[0].abs() <= 1e-12);
    }

    #[test]
    fn report_shape() {
        let s = samples_1d(&[&[1.0, 3.0], &[2.0, 4.0]]);
        let vc = decompose_variance(&s).unwrap();
        let rows = entanglement_report(&vc);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].headline_sum, rows[0].aleatoric_plus_epistemic);
        assert_eq!(rows[0].total_pooled, rows[0].aleatoric_plus_epistemic);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(decompose_variance(&samples_1d(&[&[1.0, 2.0]])).is_err());
        assert!(decompose_variance(&samples_1d(&[&[1.0, 2.0], &[1.0, 2.0, 3.0]])).is_err());
    }

    #[test]
    fn adjusted_summary_replaces_means_only() {
        let s = samples_1d(&[&[1.0, 3.0], &[2.0, 6.0]]);
        let plain = decompose_variance(&s).unwrap();
        let adj = decompose_variance_with(&s, true).unwrap();
        assert_eq!(plain.aleatoric, adj.aleatoric);
        assert_eq!(plain.total, adj.total);
        // adjusted means: 2 + 0.5 and 4 + 2 -> variance of {2.5, 6} = 3.0625
        assert_eq!(adj.epistemic, vec![3.0625]);
    }
}
