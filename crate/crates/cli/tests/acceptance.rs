//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng;
use ubiqtree::aggregate::{aggregate_values, route_decision, sign_stability, stability_category};
use ubiqtree::aggregate::{AggregateOptions, DecisionRoute, StabilityCategory};
use ubiqtree::data;
use ubiqtree::decompose::decompose_variance;
use ubiqtree::evidence::{build_bpa, IntervalQuery};
use ubiqtree::forest::{fit, ForestConfig};
use ubiqtree::hypothesis::{compute_weights, dirichlet_sample, SamplerConfig};
use ubiqtree::pipeline::{explain_instance, select_background, PipelineConfig};
use ubiqtree::rng::{self, Domain};
use ubiqtree::shap::{brute_force_shapley, tree_shap, ShapMatrix, ShapSample};
use ubiqtree::synthetic;
use ubiqtree::uncertainty::{entropy, UncertaintyDistribution};

const IDENTITY_TOL: f64 = 1e-10;
const SHAP_TOL: f64 = 1e-9;
const DST_TOL: f64 = 1e-12;
const UNIFORM_ENTROPY_TOL: f64 = 0.05;
const SCALE_LAW_TOL: f64 = 0.02;
const DIRICHLET_SE: f64 = 3.0;
const SHRINK_SLACK: f64 = 1.10;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn seeded(index: u64) -> impl Rng {
    rng::stream(2024, Domain::Synthetic, index)
}

fn within(budget: Duration, start: Instant, detail: String) -> Outcome {
    let took = start.elapsed();
    if took <= budget {
        Ok(format!("{detail}; {:.2} s", took.as_secs_f64()))
    } else {
        Err(format!(
            "{detail}; took {:.2} s, budget {} s",
            took.as_secs_f64(),
            budget.as_secs()
        ))
    }
}

fn variance_identity() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut r = seeded(1);
    for _ in 0..100 {
        let s = r.random_range(2..=50);
        let m = r.random_range(2..=20);
        let f = r.random_range(1..=4);
        let c = r.random_range(1..=3);
        let samples: Vec<ShapSample> = (0..s)
            .map(|_| {
                let scale = 10f64.powi(r.random_range(-3..=1));
                ShapSample::from_raw(ShapMatrix {
                    n_trees: m,
                    n_features: f,
                    n_classes: c,
                    values: (0..m * f * c)
                        .map(|_| scale * r.random_range(-1.0..1.0))
                        .collect(),
                    base_values: vec![0.0; m * c],
                })
                .unwrap()
            })
            .collect();
        let vc = decompose_variance(&samples).map_err(|e| e.to_string())?;
        for i in 0..f * c {
            worst = worst.max((vc.total[i] - vc.aleatoric[i] - vc.epistemic[i]).abs());
        }
    }
    if worst > IDENTITY_TOL {
        return Err(format!(
            "max |total - (A + E)| = {worst:.3e} > {IDENTITY_TOL:e}"
        ));
    }
    within(
        Duration::from_secs(5),
        start,
        format!("100 sets, max gap {worst:.2e}"),
    )
}

fn treeshap_exactness() -> Outcome {
    let start = Instant::now();
    let (mut worst, mut worst_eff) = (0.0f64, 0.0f64);
    let mut r = seeded(2);
    for _ in 0..200 {
        let f = r.random_range(1..=6);
        let depth = r.random_range(1..=4);
        let c = r.random_range(2..=3);
        let tree = synthetic::random_tree(f, depth, c, &mut r);
        let bg = synthetic::grid_rows(r.random_range(1..=10), f, c, &mut r);
        let x = synthetic::grid_rows(1, f, c, &mut r);
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
            worst_eff = worst_eff.max((out - target).abs());
        }
    }
    if worst > SHAP_TOL || worst_eff > SHAP_TOL {
        return Err(format!(
            "max error {worst:.3e}, efficiency gap {worst_eff:.3e}"
        ));
    }
    within(
        Duration::from_secs(30),
        start,
        format!("200 trees, max error {worst:.2e}, efficiency gap {worst_eff:.2e}"),
    )
}

fn random_query<R: Rng>(r: &mut R, lo: f64, hi: f64) -> IntervalQuery {
    let span = hi - lo;
    let pick = |r: &mut R| match r.random_range(0..3) {
        0 => lo + span * r.random_range(0..=8) as f64 / 8.0,
        _ => lo - 0.1 * span + 1.2 * span * r.random::<f64>(),
    };
    let (a, b) = (pick(r), pick(r));
    IntervalQuery {
        lo: a.min(b),
        hi: a.max(b),
        lo_closed: r.random(),
        hi_closed: r.random(),
    }
}

fn dst_axioms() -> Outcome {
    let start = Instant::now();
    let mut r = seeded(3);
    let mut checked = 0usize;
    for case in 0..500 {
        let n = r.random_range(2..=80);
        let values: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let b = build_bpa(&values, r.random_range(1..=12)).map_err(|e| e.to_string())?;
        let range = b.range();
        if (b.belief(&range) - 1.0).abs() > DST_TOL
            || (b.plausibility(&range) - 1.0).abs() > DST_TOL
        {
            return Err(format!(
                "bpa {case}: Bel/Pl of the whole range differ from 1"
            ));
        }
        for _ in 0..50 {
            let q = random_query(&mut r, range.lo, range.hi);
            if q.is_empty() {
                continue;
            }
            let (bel, pl) = (b.belief(&q), b.plausibility(&q));
            if !(-DST_TOL..=1.0 + DST_TOL).contains(&bel)
                || !(-DST_TOL..=1.0 + DST_TOL).contains(&pl)
            {
                return Err(format!("bpa {case}: Bel {bel} or Pl {pl} out of [0, 1]"));
            }
            if bel > pl + DST_TOL {
                return Err(format!("bpa {case}: Bel {bel} > Pl {pl}"));
            }
            let outer = IntervalQuery {
                lo: q.lo - r.random::<f64>(),
                hi: q.hi + r.random::<f64>(),
                lo_closed: true,
                hi_closed: true,
            };
            if b.belief(&outer) + DST_TOL < bel || b.plausibility(&outer) + DST_TOL < pl {
                return Err(format!("bpa {case}: monotonicity fails"));
            }
            let inside = q.intersection(&range);
            if !inside.is_empty() {
                let dual = 1.0 - b.belief_union(&b.complement(&inside));
                if (b.plausibility(&inside) - dual).abs() > DST_TOL {
                    return Err(format!(
                        "bpa {case}: Pl {} vs 1 - Bel(complement) {dual}",
                        b.plausibility(&inside)
                    ));
                }
            }
            checked += 1;
        }
    }
    within(
        Duration::from_secs(10),
        start,
        format!("500 BPAs, {checked} queries"),
    )
}

fn gamma_and_entropy() -> Outcome {
    let start = Instant::now();
    let mut r = seeded(4);
    let values: Vec<f64> = (0..500).map(|_| r.random_range(-1.0..1.0)).collect();
    let d = UncertaintyDistribution::new(&values).map_err(|e| e.to_string())?;
    let lo = d.sorted_values[0];
    let hi = *d.sorted_values.last().unwrap();
    let below = d.gamma_at(lo - 1e-9).map_err(|e| e.to_string())?;
    let top = d.gamma_at(hi).map_err(|e| e.to_string())?;
    if below != 0.0 || top != 1.0 {
        return Err(format!("Gamma below min {below}, at max {top}"));
    }
    let mut last = 0.0;
    for i in 0..=1000 {
        let g = d
            .gamma_at(-1.2 + 2.4 * i as f64 / 1000.0)
            .map_err(|e| e.to_string())?;
        if g < last {
            return Err("Gamma decreases".into());
        }
        last = g;
    }
    let uniform: Vec<f64> = (0..10_000).map(|_| r.random::<f64>()).collect();
    let h = entropy(&uniform)
        .map_err(|e| e.to_string())?
        .ok_or("uniform sample is a point mass")?;
    if h.abs() >= UNIFORM_ENTROPY_TOL {
        return Err(format!("uniform entropy {h:.4}"));
    }
    let base: Vec<f64> = (0..1000).map(|_| r.random::<f64>()).collect();
    let doubled: Vec<f64> = base.iter().map(|x| 2.0 * x).collect();
    let h1 = entropy(&base).map_err(|e| e.to_string())?.unwrap();
    let h2 = entropy(&doubled).map_err(|e| e.to_string())?.unwrap();
    let gap = h2 - h1 - 2f64.ln();
    if gap.abs() > SCALE_LAW_TOL {
        return Err(format!("H(2X) - H(X) - ln 2 = {gap:.4}"));
    }
    within(
        Duration::from_secs(10),
        start,
        format!("uniform H = {h:.4}, scale-law gap {gap:.1e}"),
    )
}

fn dirichlet_moments() -> Outcome {
    let start = Instant::now();
    let acc = [0.62, 0.70, 0.81, 0.75, 0.90];
    let w = compute_weights(&acc, 5.0).map_err(|e| e.to_string())?;
    let n = 10_000;
    let mut worst = 0.0f64;
    for (i, alpha) in [0.1, 0.5, 1.0, 10.0].into_iter().enumerate() {
        let cfg = SamplerConfig {
            n_samples: n,
            alpha,
            seed: 500 + i as u64,
            ..SamplerConfig::default()
        };
        let draws = dirichlet_sample(&w, &cfg).map_err(|e| e.to_string())?;
        for (k, &wk) in w.weights.iter().enumerate() {
            let xs: Vec<f64> = draws.iter().map(|d| d.pi[k]).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
            let target_var = wk * (1.0 - wk) / (alpha + 1.0);
            let z_mean = (m - wk).abs() / (target_var / n as f64).sqrt();
            let z_var = (v - target_var).abs() / ((m4 - v * v) / n as f64).sqrt();
            worst = worst.max(z_mean).max(z_var);
            if z_mean > DIRICHLET_SE || z_var > DIRICHLET_SE {
                return Err(format!(
                    "alpha {alpha}, component {k}: mean {m:.5} vs {wk:.5} ({z_mean:.2} SE), var {v:.3e} vs {target_var:.3e} ({z_var:.2} SE)"
                ));
            }
        }
    }
    within(
        Duration::from_secs(20),
        start,
        format!("4 concentrations x 5 components, worst {worst:.2} SE"),
    )
}

fn aggregation_conventions() -> Outcome {
    let ci = aggregate_values(
        &(0..100).map(f64::from).collect::<Vec<_>>(),
        &AggregateOptions::default(),
    )
    .map_err(|e| e.to_string())?
    .ci95;
    if ci != [2.475, 96.525] {
        return Err(format!("interval of 0..99 is {ci:?}"));
    }
    let ss = sign_stability(&[1.0, 2.0, 3.0, -1.0]);
    if ss != 0.75 {
        return Err(format!("sign stability of 3+/1- is {ss}"));
    }
    let routes = [
        (0.0, DecisionRoute::Automated),
        (0.049_999_999, DecisionRoute::Automated),
        (0.05, DecisionRoute::ExpertReview),
        (0.099_999_999, DecisionRoute::ExpertReview),
        (0.1, DecisionRoute::Retrain),
        (0.5, DecisionRoute::Retrain),
    ];
    for (sigma, want) in routes {
        let got = route_decision(sigma).map_err(|e| e.to_string())?;
        if got != want {
            return Err(format!(
                "sigma {sigma} routes to {got:?}, expected {want:?}"
            ));
        }
    }
    let cats = [
        (1.0, StabilityCategory::High),
        (0.9, StabilityCategory::High),
        (0.899_999, StabilityCategory::Moderate),
        (0.67, StabilityCategory::Moderate),
        (0.669_999, StabilityCategory::Low),
        (0.5, StabilityCategory::Low),
    ];
    for (ss, want) in cats {
        if stability_category(ss) != want {
            return Err(format!("SS {ss} is not {want:?}"));
        }
    }
    Ok("ci (2.475, 96.525), SS 0.75, route and category boundaries".into())
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ubiqtree"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "ubiqtree {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).display().to_string();
    let d = synthetic::classification(
        &synthetic::Spec {
            n_rows: 400,
            n_features: 20,
            n_informative: 6,
            ..synthetic::Spec::default()
        },
        7,
    );
    let file = std::fs::File::create(p("data.csv")).map_err(|e| e.to_string())?;
    data::write_csv(&d, file, "label").map_err(|e| e.to_string())?;
    run_cli(&[
        "-q",
        "--seed",
        "7",
        "train",
        "--input",
        &p("data.csv"),
        "--trees",
        "100",
        "--out",
        &p("model.json"),
    ])?;
    let start = Instant::now();
    let explain = |threads: &str, out: &str| {
        run_cli(&[
            "-q",
            "--seed",
            "11",
            "--threads",
            threads,
            "explain",
            "--model",
            &p("model.json"),
            "--data",
            &p("data.csv"),
            "--instance-index",
            "3",
            "--samples",
            "100",
            "--out",
            &p(out),
        ])
        .map(|_| std::fs::read(p(out)).expect("report was written"))
    };
    let first = explain("4", "a.json")?;
    let second = explain("4", "b.json")?;
    let single = explain("1", "c.json")?;
    if first != second {
        return Err("two runs with the same seed differ".into());
    }
    if first != single {
        return Err("--threads 1 and --threads 4 differ".into());
    }
    within(
        Duration::from_secs(60),
        start,
        format!("3 explain runs, {} byte reports identical", first.len()),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Mean epistemic variance of the three features with the largest |mean|,
/// averaged over a fixed probe set.
fn top3_epistemic(n_rows: usize, seed: u64, probes: &data::Dataset) -> Result<f64, String> {
    let spec = synthetic::Spec {
        n_rows,
        n_features: 6,
        n_informative: 3,
        ..synthetic::Spec::default()
    };
    let d = synthetic::classification(&spec, seed);
    let forest = fit(
        &d,
        &ForestConfig {
            n_trees: 40,
            max_depth: Some(6),
            seed,
            ..ForestConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let bg = select_background(&d, 64, seed);
    let cfg = PipelineConfig {
        sampler: SamplerConfig {
            n_samples: 100,
            seed,
            ..SamplerConfig::default()
        },
        ..PipelineConfig::default()
    };
    let mut total = 0.0;
    for (i, x) in probes.rows().enumerate() {
        let r = explain_instance(&forest, i as u64, x, &bg, &cfg).map_err(|e| e.to_string())?;
        let mut rows: Vec<(f64, f64)> = r
            .variance_components
            .iter()
            .filter(|v| v.class == 1)
            .map(|v| (r.feature(1, v.feature).mean.abs(), v.epistemic))
            .collect();
        rows.sort_by(|a, b| b.0.total_cmp(&a.0));
        total += rows[..3].iter().map(|(_, e)| e).sum::<f64>() / 3.0;
    }
    Ok(total / probes.n_rows() as f64)
}

fn epistemic_shrinkage() -> Outcome {
    let start = Instant::now();
    let probes = synthetic::classification(
        &synthetic::Spec {
            n_rows: 10,
            n_features: 6,
            n_informative: 3,
            ..synthetic::Spec::default()
        },
        9_999,
    );
    let mut medians = Vec::new();
    for n in [100, 400, 1600] {
        let per_seed = (1..=5)
            .map(|seed| top3_epistemic(n, seed, &probes))
            .collect::<Result<Vec<_>, _>>()?;
        medians.push(median(per_seed));
    }
    let detail = format!(
        "median top-3 E at n = 100, 400, 1600: {:.3e}, {:.3e}, {:.3e}",
        medians[0], medians[1], medians[2]
    );
    if medians.windows(2).any(|w| w[1] > SHRINK_SLACK * w[0]) {
        return Err(detail);
    }
    within(Duration::from_secs(300), start, detail)
}

fn single_tree() -> Outcome {
    let d = synthetic::classification(&synthetic::Spec::default(), 12);
    let forest = fit(
        &d,
        &ForestConfig {
            n_trees: 1,
            seed: 12,
            ..ForestConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let bg = select_background(&d, 32, 12);
    let cfg = PipelineConfig {
        sampler: SamplerConfig {
            n_samples: 50,
            ..SamplerConfig::default()
        },
        ..PipelineConfig::default()
    };
    let mut cells = 0;
    for id in 0..5u64 {
        let r = explain_instance(&forest, id, d.row(id as usize), &bg, &cfg)
            .map_err(|e| e.to_string())?;
        for v in &r.variance_components {
            if v.aleatoric != 0.0 || v.epistemic != 0.0 {
                return Err(format!(
                    "instance {id}, feature {}: A = {:e}, E = {:e}",
                    v.feature, v.aleatoric, v.epistemic
                ));
            }
            cells += 1;
        }
    }
    Ok(format!("A = E = 0 in all {cells} cells"))
}

fn main() -> ExitCode {
    // the binary must exist before the determinism check shells out to it
    assert!(Path::new(env!("CARGO_BIN_EXE_ubiqtree")).exists());
    let criteria: [Criterion; 9] = [
        ("variance-identity", variance_identity),
        ("treeshap-exactness", treeshap_exactness),
        ("dst-axioms", dst_axioms),
        ("gamma-entropy", gamma_and_entropy),
        ("dirichlet-moments", dirichlet_moments),
        ("aggregation-conventions", aggregation_conventions),
        ("determinism", determinism),
        ("epistemic-shrinkage", epistemic_shrinkage),
        ("single-tree-hypothesis-space", single_tree),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
