//! Self-describing report documents, stored stage outputs and the plot-data
//! CSV projections of a report.

use serde::{Deserialize, Serialize};

use crate::aggregate::FeatureReport;
use crate::pipeline::{
    cohort_summary, ClassReport, CohortClass, CohortSummary, ConfigEcho, ExplanationReport,
    Intermediates,
};
use crate::{Error, Result};

pub const REPORT_SCHEMA_VERSION: &str = "ubiqtree.report/1";
pub const INTERMEDIATES_SCHEMA_VERSION: &str = "ubiqtree.intermediates/1";
pub const GENERATOR: &str = concat!("ubiqtree ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the model file bytes, lowercase hex.
    pub model_sha256: String,
    /// SHA-256 of the instance CSV bytes.
    pub data_sha256: Option<String>,
    /// SHA-256 of an explicit background CSV; `None` when the model's stored
    /// background was used.
    pub background_sha256: Option<String>,
    /// Base seed; each instance runs under its own derived seed.
    pub seed: u64,
    /// Free-form timestamp supplied by the caller; `None` keeps the document
    /// a pure function of its inputs.
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Single,
    Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    /// Stable identifier: the row index in the instance CSV.
    pub id: u64,
    pub report: ExplanationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: String,
    pub generator: String,
    pub mode: Mode,
    /// Run configuration with the base seed.
    pub config: ConfigEcho,
    pub provenance: Provenance,
    pub instances: Vec<InstanceEntry>,
    /// Present in batch mode.
    pub cohort: Option<CohortSummary>,
}

impl ReportDocument {
    pub fn new(
        mode: Mode,
        instances: Vec<(u64, ExplanationReport)>,
        cohort: Option<CohortSummary>,
        provenance: Provenance,
    ) -> Result<Self> {
        let first = &instances
            .first()
            .ok_or_else(|| Error::Format("report needs at least one instance".into()))?
            .1;
        if mode == Mode::Single && instances.len() != 1 {
            return Err(Error::Format(format!(
                "single mode holds one instance, got {}",
                instances.len()
            )));
        }
        let mut config = first.config.clone();
        config.seed = provenance.seed;
        let doc = ReportDocument {
            schema_version: REPORT_SCHEMA_VERSION.to_string(),
            generator: GENERATOR.to_string(),
            mode,
            config,
            provenance,
            instances: instances
                .into_iter()
                .map(|(id, report)| InstanceEntry { id, report })
                .collect(),
            cohort,
        };
        doc.validate()?;
        Ok(doc)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ReportDocument = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("malformed report: {e}")))?;
        doc.validate()?;
        Ok(doc)
    }

    /// Checks the version tag and that every instance has the same
    /// feature/class shape.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported report schema '{}', expected '{REPORT_SCHEMA_VERSION}'",
                self.schema_version
            )));
        }
        let first = &self
            .instances
            .first()
            .ok_or_else(|| Error::Format("report has no instances".into()))?
            .report;
        let f = first.feature_names.len();
        let c = first.classes.len();
        for entry in &self.instances {
            let r = &entry.report;
            if r.feature_names != first.feature_names || r.classes.len() != c {
                return Err(Error::Format(format!(
                    "instance {} has a different shape",
                    entry.id
                )));
            }
            for (k, cls) in r.classes.iter().enumerate() {
                if cls.class != k || cls.features.len() != f {
                    return Err(Error::Format(format!(
                        "instance {} class {k} is malformed",
                        entry.id
                    )));
                }
                if let Some(j) = cls
                    .features
                    .iter()
                    .enumerate()
                    .position(|(j, fr)| fr.feature != j)
                {
                    return Err(Error::Format(format!(
                        "instance {} class {k} feature {j} is out of order",
                        entry.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn feature_names(&self) -> &[String] {
        &self.instances[0].report.feature_names
    }

    pub fn class_names(&self) -> Vec<String> {
        self.instances[0]
            .report
            .classes
            .iter()
            .map(|c| c.class_name.clone())
            .collect()
    }

    /// The stored cohort, or the one implied by the instances.
    pub fn cohort_or_derived(&self) -> Result<CohortSummary> {
        match &self.cohort {
            Some(c) => Ok(c.clone()),
            None => {
                let pairs: Vec<(u64, ExplanationReport)> = self
                    .instances
                    .iter()
                    .map(|e| (e.id, e.report.clone()))
                    .collect();
                cohort_summary(&pairs, &self.class_names())
            }
        }
    }
}

/// Features of one class with the largest `|mean|`, ties by feature index.
pub fn top_features(class: &ClassReport, k: usize) -> Vec<&FeatureReport> {
    let mut fs: Vec<&FeatureReport> = class.features.iter().collect();
    fs.sort_by(|a, b| {
        b.mean
            .abs()
            .total_cmp(&a.mean.abs())
            .then(a.feature.cmp(&b.feature))
    });
    fs.truncate(k);
    fs
}

/// Cohort features of one class with the largest mean `|SHAP|`, ties by index.
pub fn top_cohort_features(class: &CohortClass, k: usize) -> Vec<&crate::pipeline::CohortFeature> {
    let mut fs: Vec<_> = class.features.iter().collect();
    fs.sort_by(|a, b| {
        b.mean_abs_shap
            .total_cmp(&a.mean_abs_shap)
            .then(a.feature.cmp(&b.feature))
    });
    fs.truncate(k);
    fs
}

/// A named CSV file body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotFile {
    pub name: String,
    pub contents: String,
}

pub fn bar_file_name(class: usize) -> String {
    format!("bar_{class}.csv")
}

pub fn distribution_file_name(class: usize, feature: usize) -> String {
    format!("distribution_{class}_{feature}.csv")
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Format(format!("csv write failed: {e}"));
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("csv flush failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `feature, mean_abs_shap, band_lo, band_hi` for one class, features in index order.
pub fn bar_csv(class: &CohortClass, feature_names: &[String]) -> Result<String> {
    csv_string(
        &["feature", "mean_abs_shap", "band_lo", "band_hi"],
        class.features.iter().map(|f| {
            vec![
                feature_names[f.feature].clone(),
                f.mean_abs_shap.to_string(),
                f.band_lo.to_string(),
                f.band_hi.to_string(),
            ]
        }),
    )
}

/// `instance_id, sample_id, value, mean, ci_lo, ci_hi`: one row per
/// instance and sub-ensemble sample.
pub fn distribution_csv(doc: &ReportDocument, class: usize, feature: usize) -> Result<String> {
    let rows = doc.instances.iter().flat_map(|e| {
        let fr = e.report.feature(class, feature);
        fr.sample_values.iter().enumerate().map(move |(s, v)| {
            vec![
                e.id.to_string(),
                s.to_string(),
                v.to_string(),
                fr.mean.to_string(),
                fr.ci95[0].to_string(),
                fr.ci95[1].to_string(),
            ]
        })
    });
    csv_string(
        &[
            "instance_id",
            "sample_id",
            "value",
            "mean",
            "ci_lo",
            "ci_hi",
        ],
        rows,
    )
}

/// Every plot-data file for the document: one bar file per class and one
/// distribution file per class and feature.
pub fn plot_data(doc: &ReportDocument) -> Result<Vec<PlotFile>> {
    let cohort = doc.cohort_or_derived()?;
    let names = doc.feature_names();
    let mut files = Vec::new();
    for cls in &cohort.classes {
        files.push(PlotFile {
            name: bar_file_name(cls.class),
            contents: bar_csv(cls, names)?,
        });
        for j in 0..names.len() {
            files.push(PlotFile {
                name: distribution_file_name(cls.class, j),
                contents: distribution_csv(doc, cls.class, j)?,
            });
        }
    }
    Ok(files)
}

/// Stored stage outputs for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntermediatesDocument {
    pub schema_version: String,
    pub id: u64,
    /// The instance seed the sampler ran under.
    pub seed: u64,
    pub instance: Vec<f64>,
    pub background_rows: usize,
    pub intermediates: Intermediates,
}

impl IntermediatesDocument {
    pub fn new(
        id: u64,
        seed: u64,
        instance: Vec<f64>,
        background_rows: usize,
        intermediates: Intermediates,
    ) -> Self {
        IntermediatesDocument {
            schema_version: INTERMEDIATES_SCHEMA_VERSION.to_string(),
            id,
            seed,
            instance,
            background_rows,
            intermediates,
        }
    }

    pub fn file_name(id: u64) -> String {
        format!("intermediates_{id}.json")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("intermediates serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: IntermediatesDocument = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("malformed intermediates: {e}")))?;
        if doc.schema_version != INTERMEDIATES_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported intermediates schema '{}'",
                doc.schema_version
            )));
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{fit, ForestConfig};
    use crate::hypothesis::SamplerConfig;
    use crate::pipeline::{explain_batch, indexed_rows, select_background, PipelineConfig};
    use crate::synthetic;

    fn batch_doc() -> ReportDocument {
        let d = synthetic::classification(&synthetic::Spec::default(), 3);
        let forest = fit(
            &d,
            &ForestConfig {
                n_trees: 8,
                max_depth: Some(3),
                ..ForestConfig::default()
            },
        )
        .unwrap();
        let bg = select_background(&d, 20, 1);
        let cfg = PipelineConfig {
            sampler: SamplerConfig {
                n_samples: 6,
                ..SamplerConfig::default()
            },
            ..PipelineConfig::default()
        };
        let rows: Vec<_> = indexed_rows(&d).into_iter().take(3).collect();
        let (reports, cohort) = explain_batch(&forest, &rows, &bg, &cfg).unwrap();
        let prov = Provenance {
            model_sha256: "00".into(),
            data_sha256: None,
            background_sha256: None,
            seed: 0,
            timestamp: None,
        };
        ReportDocument::new(Mode::Batch, reports, Some(cohort), prov).unwrap()
    }

    #[test]
    fn document_round_trips_through_json() {
        let doc = batch_doc();
        let text = doc.to_json();
        let back = ReportDocument::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut doc = batch_doc();
        doc.schema_version = "ubiqtree.report/0".into();
        let err = ReportDocument::from_json(&serde_json::to_string(&doc).unwrap()).unwrap_err();
        assert!(err.to_string().contains("unsupported"));
    }

    #[test]
    fn distribution_file_has_one_row_per_instance_sample() {
        let doc = batch_doc();
        let csv = distribution_csv(&doc, 0, 1).unwrap();
        assert_eq!(csv.lines().count(), 1 + 3 * 6);
        let files = plot_data(&doc).unwrap();
        assert_eq!(files.len(), 2 * (1 + doc.feature_names().len()));
    }

    #[test]
    fn top_features_break_ties_by_index() {
        let doc = batch_doc();
        let mut cls = doc.instances[0].report.classes[0].clone();
        for f in &mut cls.features {
            f.mean = if f.feature % 2 == 0 { 0.5 } else { -0.5 };
        }
        let top: Vec<usize> = top_features(&cls, 3).iter().map(|f| f.feature).collect();
        assert_eq!(top, vec![0, 1, 2]);
    }

    #[test]
    fn single_mode_holds_one_instance() {
        let doc = batch_doc();
        let pairs: Vec<_> = doc
            .instances
            .iter()
            .map(|e| (e.id, e.report.clone()))
            .collect();
        assert!(ReportDocument::new(Mode::Single, pairs, None, doc.provenance.clone()).is_err());
    }
}
