use std::path::Path;

use anyhow::{bail, Context};
use rayon::prelude::*;
use ubiqtree::aggregate::{EntropySource, RouteOn};
use ubiqtree::data::{self, Dataset};
use ubiqtree::forest::Forest;
use ubiqtree::hypothesis::SamplerConfig;
use ubiqtree::pipeline::{
    cohort_summary, explain_from_intermediates, explain_instance, explain_instance_detailed,
    instance_config, ExplanationReport, PipelineConfig,
};
use ubiqtree::report::{plot_data, IntermediatesDocument, Mode, Provenance, ReportDocument};

use crate::args::{EntropySourceArg, ExplainArgs, RouteOnArg};
use crate::{fsio, usage, Ctx};

fn pipeline_config(a: &ExplainArgs, seed: u64) -> anyhow::Result<PipelineConfig> {
    if a.samples < 2 {
        return Err(usage("--samples must be at least 2"));
    }
    if !(a.alpha.is_finite() && a.alpha > 0.0) {
        return Err(usage(format!(
            "--alpha must be a positive number, got {}",
            a.alpha
        )));
    }
    if !(a.beta.is_finite() && a.beta >= 0.0) {
        return Err(usage(format!(
            "--beta must be a non-negative number, got {}",
            a.beta
        )));
    }
    if a.subsize == Some(0) {
        return Err(usage("--subsize must be at least 1"));
    }
    if a.bins == Some(0) {
        return Err(usage("--bins must be at least 1"));
    }
    if a.conflict_refinement == 0 {
        return Err(usage("--conflict-refinement must be at least 1"));
    }
    let cfg = PipelineConfig {
        sampler: SamplerConfig {
            n_samples: a.samples,
            alpha: a.alpha,
            beta: a.beta,
            subsize: a.subsize,
            seed,
        },
        use_adjusted: a.use_adjusted,
        bins: a.bins,
        route_on: match a.route_on {
            RouteOnArg::Epistemic => RouteOn::Epistemic,
            RouteOnArg::Total => RouteOn::Total,
        },
        entropy_source: match a.entropy_source {
            EntropySourceArg::SampleSummaries => EntropySource::SampleSummaries,
            EntropySourceArg::PooledTrees => EntropySource::PooledTrees,
        },
        conflict_refinement: a.conflict_refinement,
        ..PipelineConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

pub fn load_model(path: &Path) -> anyhow::Result<(Forest, String)> {
    let bytes = fsio::read(path)?;
    let hash = fsio::sha256_hex(&bytes);
    let text =
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let forest =
        Forest::from_json(&text).with_context(|| format!("invalid model {}", path.display()))?;
    Ok((forest, hash))
}

fn load_background(forest: &Forest, path: Option<&Path>) -> anyhow::Result<Dataset> {
    match path {
        Some(p) => {
            let rows = data::load_feature_rows(p, &forest.feature_names)
                .with_context(|| format!("reading background {}", p.display()))?;
            Ok(forest.unlabelled(rows)?)
        }
        None => match forest.background_dataset() {
            Some(d) => Ok(d?),
            None => bail!("the model stores no background rows; pass --background"),
        },
    }
}

fn load_intermediates(
    dir: &Path,
    id: u64,
    x: &[f64],
    cfg: &PipelineConfig,
) -> anyhow::Result<IntermediatesDocument> {
    let path = dir.join(IntermediatesDocument::file_name(id));
    let doc = IntermediatesDocument::from_json(&fsio::read_text(&path)?)
        .with_context(|| format!("reading {}", path.display()))?;
    let expected_seed = instance_config(cfg, id).sampler.seed;
    if doc.id != id || doc.seed != expected_seed {
        bail!("{} was stored for another instance or seed", path.display());
    }
    if doc.instance.len() != x.len()
        || doc
            .instance
            .iter()
            .zip(x)
            .any(|(a, b)| a.to_bits() != b.to_bits())
    {
        bail!("{} holds a different instance row", path.display());
    }
    Ok(doc)
}

pub fn run(a: &ExplainArgs, ctx: &Ctx) -> anyhow::Result<()> {
    let cfg = pipeline_config(a, ctx.seed)?;
    let (forest, model_hash) = load_model(&a.model)?;
    let data_bytes = fsio::read(&a.data)?;
    let rows = data::read_feature_rows(data_bytes.as_slice(), &forest.feature_names)
        .with_context(|| format!("reading {}", a.data.display()))?;
    let (mode, instances): (Mode, Vec<(u64, Vec<f64>)>) = match a.instance_index {
        Some(i) if i >= rows.len() => {
            bail!(
                "--instance-index {i} is out of range: {} has {} rows",
                a.data.display(),
                rows.len()
            )
        }
        Some(i) => (Mode::Single, vec![(i as u64, rows[i].clone())]),
        None => (
            Mode::Batch,
            rows.into_iter()
                .enumerate()
                .map(|(i, r)| (i as u64, r))
                .collect(),
        ),
    };

    let background_hash = a
        .background
        .as_deref()
        .map(|p| fsio::read(p).map(|b| fsio::sha256_hex(&b)))
        .transpose()?;

    let reports: Vec<(u64, ExplanationReport)> = match (&a.from_intermediate, &a.save_intermediate)
    {
        (Some(dir), _) => instances
            .par_iter()
            .map(|(id, x)| {
                let doc = load_intermediates(dir, *id, x, &cfg)?;
                let local = instance_config(&cfg, *id);
                let r = explain_from_intermediates(
                    &forest,
                    x,
                    doc.background_rows,
                    &doc.intermediates,
                    &local,
                )?;
                Ok((*id, r))
            })
            .collect::<anyhow::Result<_>>()?,
        (None, Some(dir)) => {
            let background = load_background(&forest, a.background.as_deref())?;
            fsio::ensure_dir(dir)?;
            instances
                .par_iter()
                .map(|(id, x)| {
                    let (inter, r) = explain_instance_detailed(&forest, *id, x, &background, &cfg)?;
                    let seed = instance_config(&cfg, *id).sampler.seed;
                    let doc = IntermediatesDocument::new(
                        *id,
                        seed,
                        x.clone(),
                        background.n_rows(),
                        inter,
                    );
                    fsio::write_atomic(
                        &dir.join(IntermediatesDocument::file_name(*id)),
                        doc.to_json().as_bytes(),
                    )?;
                    Ok((*id, r))
                })
                .collect::<anyhow::Result<_>>()?
        }
        (None, None) => {
            let background = load_background(&forest, a.background.as_deref())?;
            instances
                .par_iter()
                .map(|(id, x)| Ok((*id, explain_instance(&forest, *id, x, &background, &cfg)?)))
                .collect::<anyhow::Result<_>>()?
        }
    };
    finish(
        a,
        ctx,
        &cfg,
        mode,
        reports,
        model_hash,
        &data_bytes,
        background_hash,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish(
    a: &ExplainArgs,
    ctx: &Ctx,
    cfg: &PipelineConfig,
    mode: Mode,
    reports: Vec<(u64, ExplanationReport)>,
    model_hash: String,
    data_bytes: &[u8],
    background_hash: Option<String>,
) -> anyhow::Result<()> {
    let cohort = match mode {
        Mode::Batch => {
            let names: Vec<String> = reports[0]
                .1
                .classes
                .iter()
                .map(|c| c.class_name.clone())
                .collect();
            Some(cohort_summary(&reports, &names)?)
        }
        Mode::Single => None,
    };
    let provenance = Provenance {
        model_sha256: model_hash,
        data_sha256: Some(fsio::sha256_hex(data_bytes)),
        background_sha256: background_hash,
        seed: cfg.sampler.seed,
        timestamp: a.timestamp.clone(),
    };
    let n = reports.len();
    let doc = ReportDocument::new(mode, reports, cohort, provenance)?;
    let json = doc.to_json();
    match &a.out {
        Some(path) => {
            fsio::write_atomic(path, json.as_bytes())?;
            ctx.say(format!(
                "explained {n} instance(s); wrote {}",
                path.display()
            ));
        }
        None => print!("{json}"),
    }
    if let Some(dir) = &a.plot_data {
        fsio::ensure_dir(dir)?;
        let files = plot_data(&doc)?;
        for f in &files {
            fsio::write_atomic(&dir.join(&f.name), f.contents.as_bytes())?;
        }
        if a.out.is_some() {
            ctx.say(format!(
                "wrote {} plot-data files to {}",
                files.len(),
                dir.display()
            ));
        }
    }
    Ok(())
}
