//! Per-feature summaries across sub-ensemble samples: mean, spread,
//! percentile interval, entropy, sign stability and the resulting stability
//! category and decision route.

use serde::{Deserialize, Serialize};

use crate::decompose::check_samples;
use crate::shap::ShapSample;
use crate::stats;
use crate::uncertainty::UncertaintyDistribution;
use crate::{Error, Result};

pub const HIGH_STABILITY: f64 = 0.90;
pub const MODERATE_STABILITY: f64 = 0.67;
pub const EXPERT_REVIEW_SIGMA: f64 = 0.05;
pub const RETRAIN_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityCategory {
    High,
    Moderate,
    Low,
}

impl StabilityCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            StabilityCategory::High => "high",
            StabilityCategory::Moderate => "moderate",
            StabilityCategory::Low => "low",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRoute {
    Automated,
    ExpertReview,
    Retrain,
}

impl DecisionRoute {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionRoute::Automated => "automated",
            DecisionRoute::ExpertReview => "expert_review",
            DecisionRoute::Retrain => "retrain",
        }
    }
}

/// Which standard deviation drives the routing thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RouteOn {
    /// `sqrt(E)`, the spread of per-sample summaries.
    #[default]
    Epistemic,
    /// `sqrt` of the pooled per-tree variance.
    Total,
}

/// Values the entropy is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EntropySource {
    /// One summary value per sample.
    #[default]
    SampleSummaries,
    /// Every per-tree value of every sample.
    PooledTrees,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct AggregateOptions {
    pub use_adjusted: bool,
    pub route_on: RouteOn,
    pub entropy_source: EntropySource,
}

pub fn stability_category(ss: f64) -> StabilityCategory {
    if ss >= HIGH_STABILITY {
        StabilityCategory::High
    } else if ss >= MODERATE_STABILITY {
        StabilityCategory::Moderate
    } else {
        StabilityCategory::Low
    }
}

/// `sigma < 0.05` automated, `0.05 <= sigma < 0.1` expert review, otherwise retrain.
pub fn route_decision(sigma: f64) -> Result<DecisionRoute> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::Aggregate(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(if sigma < EXPERT_REVIEW_SIGMA {
        DecisionRoute::Automated
    } else if sigma < RETRAIN_SIGMA {
        DecisionRoute::ExpertReview
    } else {
        DecisionRoute::Retrain
    })
}

/// Share of non-zero values carrying the majority sign; 1 when all are zero.
pub fn sign_stability(values: &[f64]) -> f64 {
    let pos = values.iter().filter(|&&v| v > 0.0).count();
    let neg = values.iter().filter(|&&v| v < 0.0).count();
    if pos + neg == 0 {
        1.0
    } else {
        pos.max(neg) as f64 / (pos + neg) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyKind {
    Differential,
    PointMass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub feature: usize,
    pub mean: f64,
    /// Population std of the per-sample summaries.
    pub std: f64,
    pub epistemic_std: f64,
    /// `sqrt` of the pooled per-tree variance.
    pub total_std: f64,
    /// The std the route was decided on.
    pub route_sigma: f64,
    pub ci95: [f64; 2],
    pub entropy: Option<f64>,
    pub entropy_kind: EntropyKind,
    pub sign_stability: f64,
    pub stability_category: StabilityCategory,
    pub decision_route: DecisionRoute,
    /// The per-sample summary values, in sample order.
    pub sample_values: Vec<f64>,
}

fn summary_report(
    feature: usize,
    values: Vec<f64>,
    pooled: &[f64],
    opts: &AggregateOptions,
) -> Result<FeatureReport> {
    // moments over sorted values: independent of sample order
    let sorted = stats::sorted(&values);
    let mean = stats::mean(&sorted);
    let std = stats::variance(&sorted).sqrt();
    let total_std = stats::variance(&stats::sorted(pooled)).sqrt();
    let ci95 = [
        stats::percentile_sorted(&sorted, 2.5),
        stats::percentile_sorted(&sorted, 97.5),
    ];
    let ud = match opts.entropy_source {
        EntropySource::SampleSummaries => UncertaintyDistribution::new(&values),
        EntropySource::PooledTrees => UncertaintyDistribution::new(pooled),
    }
    .map_err(|e| Error::Aggregate(e.to_string()))?;
    let sign_stability = sign_stability(&values);
    let route_sigma = match opts.route_on {
        RouteOn::Epistemic => std,
        RouteOn::Total => total_std,
    };
    Ok(FeatureReport {
        feature,
        mean,
        std,
        epistemic_std: std,
        total_std,
        route_sigma,
        ci95,
        entropy: ud.entropy,
        entropy_kind: if ud.is_point_mass() {
            EntropyKind::PointMass
        } else {
            EntropyKind::Differential
        },
        sign_stability,
        stability_category: stability_category(sign_stability),
        decision_route: route_decision(route_sigma)?,
        sample_values: values,
    })
}

/// Reports indexed `[class][feature]`.
pub fn aggregate(
    samples: &[ShapSample],
    opts: &AggregateOptions,
) -> Result<Vec<Vec<FeatureReport>>> {
    check_samples(samples, 2).map_err(Error::Aggregate)?;
    let (f, c) = (samples[0].n_features(), samples[0].n_classes());
    let mut out = Vec::with_capacity(c);
    for k in 0..c {
        let mut row = Vec::with_capacity(f);
        for j in 0..f {
            let cell = j * c + k;
            let values: Vec<f64> = samples
                .iter()
                .map(|s| s.summary(opts.use_adjusted)[cell])
                .collect();
            let pooled: Vec<f64> = samples
                .iter()
                .flat_map(|s| (0..s.n_trees()).map(move |t| s.raw.get(t, j, k)))
                .collect();
            row.push(summary_report(j, values, &pooled, opts)?);
        }
        out.push(row);
    }
    Ok(out)
}

/// Aggregates bare summary values for one cell; the values double as the
/// pooled set.
pub fn aggregate_values(values: &[f64], opts: &AggregateOptions) -> Result<FeatureReport> {
    if values.len() < 2 {
        return Err(Error::Aggregate(format!(
            "need at least 2 samples, got {}",
            values.len()
        )));
    }
    summary_report(0, values.to_vec(), values, opts)
}
