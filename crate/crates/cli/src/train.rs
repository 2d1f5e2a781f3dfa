use anyhow::Context;
use ubiqtree::data::{self, SplitSpec};
use ubiqtree::forest::{self, ForestConfig};
use ubiqtree::pipeline::select_background;

use crate::args::{Oversample, TrainArgs};
use crate::{fsio, usage, Ctx};

/// Header names accepted as the label column when `--label` is absent,
/// matched case-insensitively in this order.
pub const DEFAULT_LABEL_NAMES: [&str; 4] = ["label", "target", "class", "y"];

fn resolve_label(header: &[String], flag: Option<&str>) -> anyhow::Result<String> {
    if let Some(name) = flag {
        if !header.iter().any(|h| h == name) {
            return Err(usage(format!(
                "--label: column '{name}' not found in the header"
            )));
        }
        return Ok(name.to_string());
    }
    DEFAULT_LABEL_NAMES
        .iter()
        .find_map(|d| header.iter().find(|h| h.eq_ignore_ascii_case(d)))
        .cloned()
        .ok_or_else(|| {
            usage(format!(
                "--label not given and no column is named {}",
                DEFAULT_LABEL_NAMES.join(", ")
            ))
        })
}

pub fn run(a: &TrainArgs, ctx: &Ctx) -> anyhow::Result<()> {
    if a.trees == 0 {
        return Err(usage("--trees must be at least 1"));
    }
    if a.min_samples_leaf == 0 {
        return Err(usage("--min-samples-leaf must be at least 1"));
    }
    if a.max_depth == Some(0) {
        return Err(usage("--max-depth must be at least 1"));
    }
    if a.background_size == 0 {
        return Err(usage("--background-size must be at least 1"));
    }
    let split = a
        .test_fraction
        .map(|f| {
            SplitSpec::new(f, ctx.seed, true).map_err(|e| usage(format!("--test-fraction: {e}")))
        })
        .transpose()?;

    let header =
        data::csv_header(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let label = resolve_label(&header, a.label.as_deref())?;
    let mut ds = data::load_csv(&a.input, Some(&label))
        .with_context(|| format!("reading {}", a.input.display()))?;
    if !a.drop.is_empty() {
        if let Some(bad) = a.drop.iter().find(|d| !ds.feature_names().contains(d)) {
            return Err(usage(format!("--drop: '{bad}' is not a feature column")));
        }
        ds = ds.drop_columns(&a.drop)?;
    }
    if let Some(m) = a.mtry {
        if m == 0 || m > ds.n_features() {
            return Err(usage(format!("--mtry must lie in 1..={}", ds.n_features())));
        }
    }

    let (train, test) = match &split {
        Some(spec) => {
            let (tr, te) = data::stratified_split(&ds, spec)?;
            (tr, Some(te))
        }
        None => (ds, None),
    };
    let fit_set = match a.oversample {
        Some(Oversample::Simple) => data::oversample_simple(&train, ctx.seed),
        None => train.clone(),
    };

    let cfg = ForestConfig {
        n_trees: a.trees,
        max_depth: a.max_depth,
        min_samples_leaf: a.min_samples_leaf,
        mtry: a.mtry,
        seed: ctx.seed,
        ..ForestConfig::default()
    };
    let mut model = forest::fit(&fit_set, &cfg)?;
    let background = select_background(&train, a.background_size, ctx.seed);
    model.background = Some(background.rows().map(<[f64]>::to_vec).collect());

    let mut json = model.to_json();
    json.push('\n');
    fsio::write_atomic(&a.out, json.as_bytes())?;

    let oob = &model.oob_accuracy;
    let mean = oob.iter().sum::<f64>() / oob.len() as f64;
    let lo = oob.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = oob.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ctx.say(format!(
        "trained {} trees on {} rows ({} features, {} classes)",
        model.n_trees(),
        fit_set.n_rows(),
        model.n_features,
        model.n_classes
    ));
    ctx.say(format!(
        "out-of-bag accuracy: mean {mean:.4}, min {lo:.4}, max {hi:.4}"
    ));
    let (_, train_f1) = forest::evaluate(&model, &train)?;
    ctx.say(format!("train macro-F1: {train_f1:.2}"));
    if let Some(te) = &test {
        let (_, test_f1) = forest::evaluate(&model, te)?;
        ctx.say(format!(
            "test macro-F1: {test_f1:.2} ({} rows)",
            te.n_rows()
        ));
    }
    ctx.say(format!("wrote {}", a.out.display()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn default_label_names_are_case_insensitive() {
        assert_eq!(
            resolve_label(&header(&["a", "Target"]), None).unwrap(),
            "Target"
        );
        assert_eq!(
            resolve_label(&header(&["y", "label"]), None).unwrap(),
            "label"
        );
    }

    #[test]
    fn unknown_label_is_a_usage_error() {
        let e = resolve_label(&header(&["a", "b"]), None).unwrap_err();
        assert!(e.downcast_ref::<crate::UsageError>().is_some());
        let e = resolve_label(&header(&["a", "b"]), Some("z")).unwrap_err();
        assert!(e.to_string().contains("--label"));
    }
}
