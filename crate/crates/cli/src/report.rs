use std::fmt::Write;

use anyhow::Context;
use ubiqtree::report::{top_cohort_features, top_features, ReportDocument};

use crate::args::ReportArgs;
use crate::fsio;

/// Renders the per-class top-`k` tables for every instance, then the cohort
/// table when the report has one.
pub fn render(doc: &ReportDocument, k: usize) -> String {
    let names = doc.feature_names();
    let width = names
        .iter()
        .map(|n| n.len())
        .max()
        .unwrap_or(0)
        .max("feature".len());
    let mut out = String::new();
    for entry in &doc.instances {
        let _ = writeln!(out, "instance {}", entry.id);
        for cls in &entry.report.classes {
            let _ = writeln!(out, "  class {} ({})", cls.class_name, cls.class);
            let _ = writeln!(
                out,
                "    {:<width$}  {:>12}  {:>10}  {:>5}  {:<8}  route",
                "feature", "mean", "sigma", "SS", "category"
            );
            for fr in top_features(cls, k) {
                let _ = writeln!(
                    out,
                    "    {:<width$}  {:>12.6}  {:>10.6}  {:>5.3}  {:<8}  {}",
                    names[fr.feature],
                    fr.mean,
                    fr.route_sigma,
                    fr.sign_stability,
                    fr.stability_category.as_str(),
                    fr.decision_route.as_str()
                );
            }
        }
    }
    if let Some(cohort) = &doc.cohort {
        let _ = writeln!(out, "cohort ({} instances)", cohort.n_instances);
        for cls in &cohort.classes {
            let _ = writeln!(out, "  class {} ({})", cls.class_name, cls.class);
            let _ = writeln!(
                out,
                "    {:<width$}  {:>13}  {:>10}  {:>10}  {:>10}",
                "feature", "mean_abs_shap", "sigma", "band_lo", "band_hi"
            );
            for f in top_cohort_features(cls, k) {
                let _ = writeln!(
                    out,
                    "    {:<width$}  {:>13.6}  {:>10.6}  {:>10.6}  {:>10.6}",
                    names[f.feature], f.mean_abs_shap, f.sigma, f.band_lo, f.band_hi
                );
            }
        }
    }
    out
}

pub fn run(a: &ReportArgs) -> anyhow::Result<()> {
    let text = fsio::read_text(&a.report)?;
    let doc = ReportDocument::from_json(&text)
        .with_context(|| format!("reading {}", a.report.display()))?;
    print!("{}", render(&doc, a.top_k));
    Ok(())
}
