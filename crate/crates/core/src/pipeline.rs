//! End-to-end explanation: hypothesis sampling, per-tree SHAP, variance
//! decomposition, aggregation, evidence and acquisition ranking.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate, AggregateOptions, EntropySource, FeatureReport, RouteOn};
use crate::data::Dataset;
use crate::decompose::{decompose_variance_with, entanglement_report, EntanglementRow};
use crate::evidence::{build_bpa, default_bins};
use crate::forest::Forest;
use crate::hypothesis::{compute_weights, dirichlet_sample, SamplerConfig, SubEnsemble};
use crate::rng::{self, Domain};
use crate::shap::{forest_tree_shap, sample_from_table, ShapSample, TreeAttribution};
use crate::stats;
use crate::uncertainty::{rank_acquisition_targets, AcquisitionRanking};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub sampler: SamplerConfig,
    pub background_size: usize,
    pub use_adjusted: bool,
    /// BPA bin count; `None` means `ceil(sqrt(K))`.
    pub bins: Option<usize>,
    pub route_on: RouteOn,
    pub entropy_source: EntropySource,
    /// Conflict search grid points per bin.
    pub conflict_refinement: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sampler: SamplerConfig::default(),
            background_size: 256,
            use_adjusted: false,
            bins: None,
            route_on: RouteOn::Epistemic,
            entropy_source: EntropySource::SampleSummaries,
            conflict_refinement: 4,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.background_size == 0 {
            return Err(Error::Data("background size must be at least 1".into()));
        }
        if self.bins == Some(0) {
            return Err(Error::Evidence("bins must be at least 1".into()));
        }
        if self.conflict_refinement == 0 {
            return Err(Error::Evidence(
                "conflict refinement must be at least 1".into(),
            ));
        }
        if self.sampler.n_samples < 2 {
            return Err(Error::Decompose("need at least 2 samples".into()));
        }
        Ok(())
    }

    fn aggregate_options(&self) -> AggregateOptions {
        AggregateOptions {
            use_adjusted: self.use_adjusted,
            route_on: self.route_on,
            entropy_source: self.entropy_source,
        }
    }
}

/// Uniform subsample of at most `size` rows, kept in original row order.
pub fn select_background(train: &Dataset, size: usize, seed: u64) -> Dataset {
    if train.n_rows() <= size {
        return train.clone();
    }
    let mut rng = rng::stream(seed, Domain::Background, 0);
    let mut rows = index::sample(&mut rng, train.n_rows(), size).into_vec();
    rows.sort_unstable();
    train.subset(&rows)
}

/// Stored stage outputs: hypotheses and per-tree attributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intermediates {
    pub sub_ensembles: Vec<SubEnsemble>,
    pub tree_shap: Vec<TreeAttribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bpa {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceCell {
    pub feature: usize,
    pub class: usize,
    pub bpa: Bpa,
    pub conflict: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: usize,
    pub class_name: String,
    /// Mean over samples of the sub-ensemble base value.
    pub base_value: f64,
    pub features: Vec<FeatureReport>,
    /// Spearman correlation of `|mean|` against epistemic variance over
    /// features; `None` when either side is constant.
    pub rank_correlation_abs_mean_epistemic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub n_samples: usize,
    pub alpha: f64,
    pub beta: f64,
    pub subsize: usize,
    pub seed: u64,
    pub n_trees: usize,
    pub background_rows: usize,
    pub use_adjusted: bool,
    pub bins: usize,
    pub conflict_refinement: usize,
    pub route_on: RouteOn,
    pub entropy_source: EntropySource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub instance: Vec<f64>,
    pub prediction: Vec<f64>,
    pub feature_names: Vec<String>,
    pub classes: Vec<ClassReport>,
    pub variance_components: Vec<EntanglementRow>,
    pub evidence: Vec<EvidenceCell>,
    pub acquisition_ranking: AcquisitionRanking,
    pub config: ConfigEcho,
}

impl ExplanationReport {
    /// Compact JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn feature(&self, class: usize, feature: usize) -> &FeatureReport {
        &self.classes[class].features[feature]
    }
}

/// Runs the sampling and per-tree SHAP stages.
pub fn compute_intermediates(
    forest: &Forest,
    x: &[f64],
    background: &Dataset,
    cfg: &PipelineConfig,
) -> Result<Intermediates> {
    cfg.validate()?;
    let weights = compute_weights(&forest.oob_accuracy, cfg.sampler.beta)?;
    let sub_ensembles = dirichlet_sample(&weights, &cfg.sampler)?;
    let tree_shap = forest_tree_shap(forest, x, background)?;
    Ok(Intermediates {
        sub_ensembles,
        tree_shap,
    })
}

pub fn explain(
    forest: &Forest,
    x: &[f64],
    background: &Dataset,
    cfg: &PipelineConfig,
) -> Result<ExplanationReport> {
    let inter = compute_intermediates(forest, x, background, cfg)?;
    explain_from_intermediates(forest, x, background.n_rows(), &inter, cfg)
}

/// Runs the remaining stages on stored intermediates.
pub fn explain_from_intermediates(
    forest: &Forest,
    x: &[f64],
    background_rows: usize,
    inter: &Intermediates,
    cfg: &PipelineConfig,
) -> Result<ExplanationReport> {
    cfg.validate()?;
    let prediction = forest.predict_proba(x)?;
    if inter.tree_shap.len() != forest.n_trees() {
        return Err(Error::Shap(format!(
            "{} tree attributions for {} trees",
            inter.tree_shap.len(),
            forest.n_trees()
        )));
    }
    let samples: Vec<ShapSample> = inter
        .sub_ensembles
        .par_iter()
        .map(|sub| sample_from_table(&inter.tree_shap, sub))
        .collect::<Result<_>>()?;

    let vc = decompose_variance_with(&samples, cfg.use_adjusted)?;
    let per_class = aggregate(&samples, &cfg.aggregate_options())?;
    let acquisition_ranking = rank_acquisition_targets(&samples)?;

    let (f, c) = (forest.n_features, forest.n_classes);
    let k = forest.n_trees();
    let bins = cfg.bins.unwrap_or_else(|| default_bins(k));
    let mut evidence = Vec::with_capacity(f * c);
    for j in 0..f {
        for cls in 0..c {
            let values: Vec<f64> = inter.tree_shap.iter().map(|a| a.get(j, cls)).collect();
            let bpa = build_bpa(&values, bins)?;
            let conflict = bpa.conflict(cfg.conflict_refinement * bpa.n_bins());
            evidence.push(EvidenceCell {
                feature: j,
                class: cls,
                bpa: Bpa {
                    edges: bpa.bin_edges,
                    masses: bpa.masses,
                },
                conflict,
            });
        }
    }

    let classes = per_class
        .into_iter()
        .enumerate()
        .map(|(cls, features)| {
            let abs_mean: Vec<f64> = features.iter().map(|r| r.mean.abs()).collect();
            let epi: Vec<f64> = (0..f).map(|j| vc.epistemic_at(j, cls)).collect();
            let bases: Vec<f64> = samples.iter().map(|s| s.mean_base[cls]).collect();
            ClassReport {
                class: cls,
                class_name: forest.class_names[cls].clone(),
                base_value: stats::mean(&bases),
                features,
                rank_correlation_abs_mean_epistemic: stats::spearman(&abs_mean, &epi)
                    .filter(|r| r.is_finite()),
            }
        })
        .collect();

    Ok(ExplanationReport {
        instance: x.to_vec(),
        prediction,
        feature_names: forest.feature_names.clone(),
        classes,
        variance_components: entanglement_report(&vc),
        evidence,
        acquisition_ranking,
        config: ConfigEcho {
            n_samples: cfg.sampler.n_samples,
            alpha: cfg.sampler.alpha,
            beta: cfg.sampler.beta,
            subsize: cfg.sampler.subsize.unwrap_or(k),
            seed: cfg.sampler.seed,
            n_trees: k,
            background_rows,
            use_adjusted: cfg.use_adjusted,
            bins,
            conflict_refinement: cfg.conflict_refinement,
            route_on: cfg.route_on,
            entropy_source: cfg.entropy_source,
        },
    })
}

/// Sampler seed for the instance with stable identifier `id`.
pub fn instance_seed(seed: u64, id: u64) -> u64 {
    rng::mix(seed, Domain::Instance, id)
}

/// `cfg` with the sampler seed replaced by the instance seed for `id`.
pub fn instance_config(cfg: &PipelineConfig, id: u64) -> PipelineConfig {
    let mut local = cfg.clone();
    local.sampler.seed = instance_seed(cfg.sampler.seed, id);
    local
}

/// Explains one instance under its per-instance seed, as batch mode does.
pub fn explain_instance(
    forest: &Forest,
    id: u64,
    x: &[f64],
    background: &Dataset,
    cfg: &PipelineConfig,
) -> Result<ExplanationReport> {
    explain(forest, x, background, &instance_config(cfg, id))
}

/// Like [`explain_instance`], also returning the stored stage outputs.
pub fn explain_instance_detailed(
    forest: &Forest,
    id: u64,
    x: &[f64],
    background: &Dataset,
    cfg: &PipelineConfig,
) -> Result<(Intermediates, ExplanationReport)> {
    let local = instance_config(cfg, id);
    let inter = compute_intermediates(forest, x, background, &local)?;
    let report = explain_from_intermediates(forest, x, background.n_rows(), &inter, &local)?;
    Ok((inter, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortFeature {
    pub feature: usize,
    pub mean_abs_shap: f64,
    /// Root-mean-square of the per-instance routing sigma.
    pub sigma: f64,
    pub band_lo: f64,
    pub band_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortClass {
    pub class: usize,
    pub class_name: String,
    pub features: Vec<CohortFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n_instances: usize,
    /// How the cohort numbers were formed.
    pub aggregation: String,
    pub classes: Vec<CohortClass>,
}

pub const COHORT_AGGREGATION: &str =
    "mean_abs_shap = mean over instances of |mean|; sigma = root-mean-square over instances of route_sigma; band = mean_abs_shap +- 2 sigma";

/// Cohort summary; contributions are summed in ascending id order so the
/// result does not depend on batch order.
pub fn cohort_summary(
    reports: &[(u64, ExplanationReport)],
    class_names: &[String],
) -> Result<CohortSummary> {
    let first = &reports
        .first()
        .ok_or_else(|| Error::Aggregate("empty batch".into()))?
        .1;
    let f = first.feature_names.len();
    let mut order: Vec<&(u64, ExplanationReport)> = reports.iter().collect();
    order.sort_by_key(|(id, _)| *id);
    let n = reports.len() as f64;
    let classes = (0..class_names.len())
        .map(|cls| {
            let features = (0..f)
                .map(|j| {
                    let mut abs_sum = 0.0;
                    let mut sq_sum = 0.0;
                    for (_, r) in &order {
                        let fr = r.feature(cls, j);
                        abs_sum += fr.mean.abs();
                        sq_sum += fr.route_sigma * fr.route_sigma;
                    }
                    let mean_abs_shap = abs_sum / n;
                    let sigma = (sq_sum / n).sqrt();
                    CohortFeature {
                        feature: j,
                        mean_abs_shap,
                        sigma,
                        band_lo: mean_abs_shap - 2.0 * sigma,
                        band_hi: mean_abs_shap + 2.0 * sigma,
                    }
                })
                .collect();
            CohortClass {
                class: cls,
                class_name: class_names[cls].clone(),
                features,
            }
        })
        .collect();
    Ok(CohortSummary {
        n_instances: reports.len(),
        aggregation: COHORT_AGGREGATION.to_string(),
        classes,
    })
}

/// Explains every `(id, row)` under its per-instance seed. Reports come back
/// in input order.
pub fn explain_batch(
    forest: &Forest,
    instances: &[(u64, Vec<f64>)],
    background: &Dataset,
    cfg: &PipelineConfig,
) -> Result<(Vec<(u64, ExplanationReport)>, CohortSummary)> {
    if instances.is_empty() {
        return Err(Error::Data("no instances to explain".into()));
    }
    let reports: Vec<(u64, ExplanationReport)> = instances
        .par_iter()
        .map(|(id, x)| explain_instance(forest, *id, x, background, cfg).map(|r| (*id, r)))
        .collect::<Result<_>>()?;
    let cohort = cohort_summary(&reports, &forest.class_names)?;
    Ok((reports, cohort))
}

/// Rows of `d` paired with their row index as the stable id.
pub fn indexed_rows(d: &Dataset) -> Vec<(u64, Vec<f64>)> {
    d.rows()
        .enumerate()
        .map(|(i, r)| (i as u64, r.to_vec()))
        .collect()
}
