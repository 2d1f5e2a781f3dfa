use std::process::ExitCode;

use ubiqtree::decompose::decompose_variance;
use ubiqtree::forest::{fit, ForestConfig};
use ubiqtree::hypothesis::SamplerConfig;
use ubiqtree::invariants::{check_report, IDENTITY_TOLERANCE};
use ubiqtree::pipeline::{explain_instance, select_background, PipelineConfig};
use ubiqtree::rng::{self, Domain};
use ubiqtree::shap::{brute_force_shapley, tree_shap, ShapMatrix, ShapSample};
use ubiqtree::synthetic;

use crate::args::SelftestArgs;
use crate::Ctx;

type Check = fn(&SelftestArgs, u64) -> Result<String, String>;

fn treeshap_matches_enumeration(_: &SelftestArgs, seed: u64) -> Result<String, String> {
    let mut worst = 0.0f64;
    for case in 0..40 {
        let mut rng = rng::stream(seed, Domain::Synthetic, 100 + case);
        let f = 2 + (case as usize % 4);
        let tree = synthetic::random_tree(f, 3, 2, &mut rng);
        let bg = synthetic::grid_rows(6, f, 2, &mut rng);
        let x = synthetic::grid_rows(1, f, 2, &mut rng);
        let fast = tree_shap(&tree, x.row(0), &bg).map_err(|e| e.to_string())?;
        let slow = brute_force_shapley(&tree, x.row(0), &bg).map_err(|e| e.to_string())?;
        for (a, b) in fast.values.iter().zip(&slow.values) {
            worst = worst.max((a - b).abs());
        }
        for (out, target) in fast
            .reconstructed_output()
            .iter()
            .zip(tree.predict(x.row(0)))
        {
            worst = worst.max((out - target).abs());
        }
    }
    if worst <= 1e-9 {
        Ok(format!("40 trees, max error {worst:.1e}"))
    } else {
        Err(format!("max error {worst:.3e}"))
    }
}

fn variance_identity(_: &SelftestArgs, seed: u64) -> Result<String, String> {
    use rand::Rng;
    let mut worst = 0.0f64;
    for case in 0..20 {
        let mut rng = rng::stream(seed, Domain::Synthetic, 200 + case);
        let s = rng.random_range(2..30);
        let m = rng.random_range(2..15);
        let samples: Vec<ShapSample> = (0..s)
            .map(|_| {
                let values = (0..m * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
                ShapSample::from_raw(ShapMatrix {
                    n_trees: m,
                    n_features: 3,
                    n_classes: 1,
                    values,
                    base_values: vec![0.0; m],
                })
                .expect("non-empty sample")
            })
            .collect();
        let vc = decompose_variance(&samples).map_err(|e| e.to_string())?;
        for i in 0..3 {
            worst = worst.max((vc.total[i] - vc.aleatoric[i] - vc.epistemic[i]).abs());
        }
    }
    if worst <= IDENTITY_TOLERANCE {
        Ok(format!("20 sample sets, max gap {worst:.1e}"))
    } else {
        Err(format!("pooled variance differs from A + E by {worst:.3e}"))
    }
}

fn config(samples: usize) -> PipelineConfig {
    PipelineConfig {
        sampler: SamplerConfig {
            n_samples: samples,
            ..SamplerConfig::default()
        },
        ..PipelineConfig::default()
    }
}

fn report_invariants(a: &SelftestArgs, seed: u64) -> Result<String, String> {
    let spec = synthetic::Spec {
        n_rows: 300,
        ..synthetic::Spec::default()
    };
    let d = synthetic::classification(&spec, seed);
    let forest = fit(
        &d,
        &ForestConfig {
            n_trees: 30,
            max_depth: Some(5),
            seed,
            ..ForestConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let bg = select_background(&d, 64, seed);
    let cfg = config(a.samples);
    let mut cells = 0;
    for id in 0..3u64 {
        let r = explain_instance(&forest, id, d.row(id as usize), &bg, &cfg)
            .map_err(|e| e.to_string())?;
        let bad = check_report(&r);
        if !bad.is_empty() {
            return Err(format!("instance {id}: {}", bad.join("; ")));
        }
        cells += r.variance_components.len();
    }
    Ok(format!("3 instances, {cells} feature/class cells"))
}

fn determinism(a: &SelftestArgs, seed: u64) -> Result<String, String> {
    let d = synthetic::classification(&synthetic::Spec::default(), seed);
    let forest = fit(
        &d,
        &ForestConfig {
            n_trees: 20,
            seed,
            ..ForestConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let bg = select_background(&d, 32, seed);
    let cfg = config(a.samples);
    let once = || {
        explain_instance(&forest, 0, d.row(0), &bg, &cfg)
            .map(|r| r.to_json())
            .map_err(|e| e.to_string())
    };
    let first = once()?;
    let second = once()?;
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?
        .install(once)?;
    if first == second && first == single {
        Ok("repeat and single-thread runs identical".into())
    } else {
        Err("reports differ between runs".into())
    }
}

fn single_tree(a: &SelftestArgs, seed: u64) -> Result<String, String> {
    let d = synthetic::classification(&synthetic::Spec::default(), seed);
    let forest = fit(
        &d,
        &ForestConfig {
            n_trees: 1,
            seed,
            ..ForestConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let bg = select_background(&d, 32, seed);
    let r = explain_instance(&forest, 0, d.row(0), &bg, &config(a.samples))
        .map_err(|e| e.to_string())?;
    if r.variance_components
        .iter()
        .all(|row| row.aleatoric == 0.0 && row.epistemic == 0.0)
    {
        Ok("A = E = 0 for every cell".into())
    } else {
        Err("a single-tree forest produced non-zero variance".into())
    }
}

pub fn run(a: &SelftestArgs, ctx: &Ctx) -> anyhow::Result<ExitCode> {
    if a.samples < 2 {
        return Err(crate::usage("--samples must be at least 2"));
    }
    let checks: [(&str, Check); 5] = [
        ("treeshap-exact", treeshap_matches_enumeration),
        ("variance-identity", variance_identity),
        ("report-invariants", report_invariants),
        ("determinism", determinism),
        ("single-tree", single_tree),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check(a, ctx.seed) {
            Ok(detail) => ctx.say(format!("ok    {name}: {detail}")),
            Err(msg) => {
                failed += 1;
                eprintln!("FAIL  {name}: {msg}");
            }
        }
    }
    ctx.say(format!(
        "{} of {} checks passed",
        checks.len() - failed,
        checks.len()
    ));
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
