//! Structural checks on a finished explanation report. Each check is
//! recomputed from the report's own fields, so a stored report can be audited
//! without the model.

use crate::aggregate::{route_decision, sign_stability, stability_category};
use crate::evidence::{BeliefStructure, IntervalQuery};
use crate::pipeline::ExplanationReport;
use crate::uncertainty::UncertaintyDistribution;

/// Absolute tolerance used for identities that hold up to rounding.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

/// Rebuilds the belief structure of a stored BPA whose masses are tree
/// counts over `support`.
pub fn belief_from_stored(edges: &[f64], masses: &[f64], support: usize) -> BeliefStructure {
    BeliefStructure {
        bin_edges: edges.to_vec(),
        masses: masses.to_vec(),
        counts: masses
            .iter()
            .map(|m| (m * support as f64).round() as usize)
            .collect(),
        support_count: support,
    }
}

/// Bel/Pl checks on closed, open and half-open queries with endpoints on the
/// conflict grid.
pub fn check_belief(bs: &BeliefStructure, out: &mut Vec<String>, tag: &str) {
    let grid = bs.query_grid(2 * bs.n_bins());
    let full = bs.range();
    if (bs.belief(&full) - 1.0).abs() > 1e-12 || (bs.plausibility(&full) - 1.0).abs() > 1e-12 {
        out.push(format!("{tag}: Bel/Pl of the full range is not 1"));
    }
    let step = (grid.len() / 6).max(1);
    for a in (0..grid.len()).step_by(step) {
        for b in (a..grid.len()).step_by(step) {
            for (lc, hc) in [(true, true), (true, false), (false, true), (false, false)] {
                let Ok(q) = IntervalQuery::new(grid[a], grid[b], lc, hc) else {
                    continue;
                };
                let bel = bs.belief(&q);
                let pl = bs.plausibility(&q);
                if !(0.0..=1.0).contains(&bel) || !(0.0..=1.0).contains(&pl) || bel > pl + 1e-12 {
                    out.push(format!("{tag}: Bel {bel} / Pl {pl} out of order on {q:?}"));
                }
                let dual = 1.0 - bs.belief_union(&bs.complement(&q));
                if (dual - pl).abs() > 1e-12 {
                    out.push(format!(
                        "{tag}: Pl {pl} differs from 1 - Bel(complement) {dual}"
                    ));
                }
            }
        }
    }
}

/// Violations found in `report`; empty when every check passes.
pub fn check_report(report: &ExplanationReport) -> Vec<String> {
    let mut out = Vec::new();
    let k = report.config.n_trees;

    for row in &report.variance_components {
        let tag = format!("feature {} class {}", row.feature, row.class);
        if (row.total_pooled - row.aleatoric_plus_epistemic).abs() > IDENTITY_TOLERANCE {
            out.push(format!(
                "{tag}: pooled variance {} differs from A + E {}",
                row.total_pooled, row.aleatoric_plus_epistemic
            ));
        }
        if row.aleatoric < 0.0 || row.epistemic < 0.0 {
            out.push(format!("{tag}: negative variance component"));
        }
    }

    for cls in &report.classes {
        for fr in &cls.features {
            let tag = format!("feature {} class {}", fr.feature, cls.class);
            if fr.sample_values.len() != report.config.n_samples {
                out.push(format!("{tag}: {} sample values", fr.sample_values.len()));
                continue;
            }
            let ss = sign_stability(&fr.sample_values);
            if !(0.5..=1.0).contains(&fr.sign_stability) || ss != fr.sign_stability {
                out.push(format!(
                    "{tag}: sign stability {} (recomputed {ss})",
                    fr.sign_stability
                ));
            }
            if stability_category(fr.sign_stability) != fr.stability_category {
                out.push(format!("{tag}: stability category does not match SS"));
            }
            match route_decision(fr.route_sigma) {
                Ok(r) if r == fr.decision_route => {}
                _ => out.push(format!(
                    "{tag}: route does not match sigma {}",
                    fr.route_sigma
                )),
            }
            if fr.ci95[0] > fr.ci95[1] {
                out.push(format!("{tag}: interval bounds reversed"));
            }
            match UncertaintyDistribution::new(&fr.sample_values) {
                Ok(ud) => {
                    let lo = ud.sorted_values[0];
                    let hi = *ud.sorted_values.last().unwrap();
                    let below = ud.gamma_at(lo - 1.0).unwrap_or(f64::NAN);
                    let top = ud.gamma_at(hi).unwrap_or(f64::NAN);
                    if below != 0.0 || top != 1.0 {
                        out.push(format!("{tag}: CDF bounds {below} and {top}"));
                    }
                    let mut prev = 0.0;
                    for &v in &ud.sorted_values {
                        let g = ud.gamma_at(v).unwrap_or(f64::NAN);
                        if g.is_nan() || g < prev {
                            out.push(format!("{tag}: CDF decreases at {v}"));
                            break;
                        }
                        prev = g;
                    }
                    if ud.entropy.is_some_and(|h| !h.is_finite()) {
                        out.push(format!("{tag}: non-finite entropy"));
                    }
                }
                Err(e) => out.push(format!("{tag}: {e}")),
            }
        }
        if cls
            .rank_correlation_abs_mean_epistemic
            .is_some_and(|r| !r.is_finite() || r.abs() > 1.0 + 1e-12)
        {
            out.push(format!(
                "class {}: rank correlation out of range",
                cls.class
            ));
        }
    }

    for cell in &report.evidence {
        let tag = format!("evidence feature {} class {}", cell.feature, cell.class);
        let sum: f64 = cell.bpa.masses.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || cell.bpa.masses.iter().any(|m| *m < 0.0) {
            out.push(format!("{tag}: masses sum to {sum}"));
        }
        if cell.bpa.edges.windows(2).any(|w| w[0] > w[1]) {
            out.push(format!("{tag}: edges not sorted"));
        }
        if !(0.0..=1.0).contains(&cell.conflict) {
            out.push(format!("{tag}: conflict {} outside [0, 1]", cell.conflict));
        }
        let bs = belief_from_stored(&cell.bpa.edges, &cell.bpa.masses, k);
        check_belief(&bs, &mut out, &tag);
        let recomputed = bs.conflict(report.config.conflict_refinement * bs.n_bins());
        if recomputed != cell.conflict {
            out.push(format!(
                "{tag}: stored conflict {} recomputes to {recomputed}",
                cell.conflict
            ));
        }
    }
    out
}
