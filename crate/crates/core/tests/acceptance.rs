//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlhmm::baum_welch::forward;
use vlhmm::bic_ctm::{ctm_prune, default_depth, exhaustive_bic};
use vlhmm::contamination::{brute_force_likelihood, contaminate, EmissionConvention, NoiseSpec, Regime};
use vlhmm::context_tree::{ContextTree, InitialLaw};
use vlhmm::hmm_embedding::{embed_emissions, embed_observations, embed_tree, EmbedMode, HmmParams};
use vlhmm::pipeline::{run_scenario, two_step_estimate, EstimateConfig, EstimationReport, ScenarioSpec};
use vlhmm::presets;
use vlhmm::vlmc_source::{sample_vlmc, VlmcModel};
use vlhmm::{Alphabet, SymbolSequence};

const SHAPES: [&[&str]; 6] = [
    &[""],
    &["0", "1"],
    &["00", "10", "1"],
    &["0", "01", "11"],
    &["00", "01", "10", "11"],
    &["010", "110", "00", "1"],
];

fn random_tree(rng: &mut ChaCha8Rng, min_depth: usize, max_depth: usize) -> ContextTree<f64> {
    let shapes: Vec<&[&str]> = SHAPES
        .iter()
        .copied()
        .filter(|s| {
            let d = s.iter().map(|c| c.len()).max().unwrap_or(0);
            (min_depth..=max_depth).contains(&d)
        })
        .collect();
    let shape = shapes[rng.gen_range(0..shapes.len())];
    let rows: Vec<(&str, Vec<f64>)> = shape
        .iter()
        .map(|c| {
            let p = rng.gen_range(0.05..0.95);
            (*c, vec![p, 1.0 - p])
        })
        .collect();
    let table: Vec<(&str, &[f64])> = rows.iter().map(|(c, r)| (*c, r.as_slice())).collect();
    ContextTree::from_table(Alphabet::BINARY, &table).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, o: &Outcome) {
    println!("criterion {id} [{name}]: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn oracle_likelihood() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for fixture in 0..50 {
        let tree = random_tree(&mut rng, 1, 3);
        let k = tree.depth();
        let states = 1 << k;
        let weights: Vec<f64> = (0..states).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let pi: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let init = InitialLaw::blocks(Alphabet::BINARY, k, pi.clone()).unwrap();
        let regime = if fixture % 2 == 0 { Regime::Sum } else { Regime::Product };
        let eps = [0.05, 0.1, 0.3][fixture % 3];
        let noise = NoiseSpec::binary(regime, eps).unwrap();
        let t = rng.gen_range(k..=10);
        let z = SymbolSequence::new(Alphabet::BINARY, (0..t).map(|_| rng.gen_range(0..2u8)).collect()).unwrap();
        let params = HmmParams::new(
            embed_tree(&tree, k).unwrap(),
            embed_emissions(&noise, k, EmbedMode::Symbol).unwrap(),
            pi,
        )
        .unwrap();
        let ll = forward(&params, &embed_observations(&z, k, EmbedMode::Symbol).unwrap()).unwrap().loglik;
        let exact = brute_force_likelihood(&z, &tree, &init, &noise, EmissionConvention::AllSteps).unwrap();
        worst = worst.max((ll - exact).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome { pass: worst <= 1e-10 && secs < 10.0, detail: format!("50 fixtures, max |diff| {worst:.2e}, {secs:.2}s") }
}

fn ctm_matches_exhaustive() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut mismatches = Vec::new();
    let mut worst = 0.0f64;
    for fixture in 0..100 {
        let tree = random_tree(&mut rng, 0, 4);
        let m = rng.gen_range(20..=500);
        let depth = rng.gen_range(1..=4);
        let x = sample_vlmc(&VlmcModel::new(tree, 50).unwrap(), m, rng.gen()).unwrap();
        let fast = ctm_prune(&x, depth, m).unwrap();
        let (tree, score) = exhaustive_bic(&x, depth, m).unwrap();
        let diff = (fast.bic_score - score).abs();
        worst = worst.max(diff);
        if fast.tree.context_set() != tree.context_set() || diff > 1e-9 {
            mismatches.push(fixture);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: mismatches.is_empty() && secs < 60.0,
        detail: format!("100 fixtures, mismatches {mismatches:?}, max score diff {worst:.2e}, {secs:.1}s"),
    }
}

fn point<'a>(report: &'a EstimationReport, eps: f64) -> &'a vlhmm::pipeline::PointSummary {
    report.points.iter().find(|p| (p.eps - eps).abs() < 1e-12).unwrap()
}

fn scenario1(sweep: &[f64], t: usize, reps: usize, seed: u64) -> EstimationReport {
    let mut spec = ScenarioSpec::scenario1(Regime::Sum);
    spec.sweep = sweep.to_vec();
    spec.sample_size = t;
    spec.replications = reps;
    spec.seed = seed;
    run_scenario(&spec).unwrap()
}

fn max_drop(report: &EstimationReport) -> f64 {
    report.records.iter().filter_map(|r| r.max_trace_drop).fold(0.0, f64::max)
}

fn within(label: &str, value: f64, target: f64, tol: f64, ok: &mut bool, parts: &mut Vec<String>) {
    let hit = (value - target).abs() <= tol;
    *ok &= hit;
    parts.push(format!("{label} {value:.3} vs {target:.3}±{tol:.3}{}", if hit { "" } else { " MISS" }));
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut drops: Vec<f64> = Vec::new();
    let mut fits = 0usize;

    results.push((1, "oracle likelihood", oracle_likelihood()));
    results.push((3, "ctm equals exhaustive", ctm_matches_exhaustive()));

    let start = Instant::now();
    let desk = scenario1(&[0.01, 0.05, 0.25], 10_000, 20, 2024);
    drops.push(max_drop(&desk));
    fits += desk.records.len();
    let failures = desk.failures();
    let mut ok = failures == 0;
    let mut parts = Vec::new();
    within("eps 0.05", point(&desk, 0.05).eps_hat.mean, 0.055, 0.036, &mut ok, &mut parts);
    within("eps 0.25", point(&desk, 0.25).eps_hat.mean, 0.256, 0.039, &mut ok, &mut parts);
    let desk_secs = start.elapsed().as_secs_f64();
    results.push((4, "noise recovery", Outcome { pass: ok, detail: format!("{}, {desk_secs:.0}s", parts.join("; ")) }));

    let low = point(&desk, 0.01);
    let mut ok = failures == 0;
    let mut parts = Vec::new();
    for (ctx, target, tol) in [("010", 0.060, 0.048), ("110", 0.880, 0.054), ("00", 0.261, 0.057), ("1", 0.369, 0.054)] {
        let stat = low.contexts.iter().find(|c| c.context == ctx).unwrap();
        within(ctx, stat.p0.mean, target, tol, &mut ok, &mut parts);
    }
    results.push((5, "transition recovery", Outcome { pass: ok, detail: parts.join("; ") }));

    let big = scenario1(&[0.05], 30_000, 20, 77);
    drops.push(max_drop(&big));
    fits += big.records.len();
    let rate = big.points[0].recovery_rate;
    results.push((
        6,
        "tree recovery",
        Outcome {
            pass: rate >= 0.8 && big.failures() == 0,
            detail: format!("recovered in {:.0}% of 20 replications", 100.0 * rate),
        },
    ));

    let half = scenario1(&[0.5], 10_000, 10, 5);
    drops.push(max_drop(&half));
    fits += half.records.len();
    let root = half.points[0].root_only_rate;
    results.push((
        7,
        "degradation at one half",
        Outcome {
            pass: half.failures() == 0 && root >= 0.5,
            detail: format!("completed, root-only in {:.0}% of 10 replications", 100.0 * root),
        },
    ));

    let model = VlmcModel::new(presets::scenario1_tree(), 1000).unwrap();
    let mut equal = 0;
    let mut identity = true;
    let mut pipeline_drop = 0.0f64;
    for run in 0..10u64 {
        let x = sample_vlmc(&model, 10_000, 900 + run).unwrap();
        let z = contaminate(&x, &NoiseSpec::binary(Regime::Sum, 0.0).unwrap(), run).unwrap();
        identity &= z == x;
        let mut cfg = ScenarioSpec::scenario1(Regime::Sum).fit_config();
        cfg.k = 3;
        let est = two_step_estimate::<f64>(&z, &EstimateConfig::new(cfg, run)).unwrap();
        fits += 1;
        pipeline_drop = pipeline_drop.max(
            est.fit.restart_table.iter().flat_map(|r| r.trace.windows(2)).map(|w| w[0] - w[1]).fold(0.0, f64::max),
        );
        let direct = ctm_prune(&x, est.depth, x.len()).unwrap();
        if direct.tree.context_set() == est.tree.context_set() {
            equal += 1;
        }
    }
    drops.push(pipeline_drop);
    results.push((
        8,
        "zero-noise collapse",
        Outcome { pass: identity && equal == 10, detail: format!("z == x: {identity}, equal trees {equal}/10") },
    ));

    let truth = presets::scenario1_tree().context_set();
    let mut rates = Vec::new();
    for (i, m) in [5_000usize, 30_000, 100_000].into_iter().enumerate() {
        let depth = default_depth(m, Alphabet::BINARY).unwrap();
        let hits = (0..50u64)
            .filter(|&rep| {
                let x = sample_vlmc(&model, m, 10_000 * (i as u64 + 1) + rep).unwrap();
                ctm_prune(&x, depth, m).unwrap().tree.context_set() == truth
            })
            .count();
        rates.push(hits as f64 / 50.0);
    }
    results.push((
        9,
        "consistency trend",
        Outcome {
            pass: rates.windows(2).all(|w| w[0] <= w[1]),
            detail: format!("recovery at m=5k/30k/100k: {rates:?}"),
        },
    ));

    let worst = drops.into_iter().fold(0.0, f64::max);
    results.push((
        2,
        "EM monotonicity",
        Outcome { pass: worst <= 1e-8, detail: format!("{fits} fits, largest per-iteration drop {worst:.2e}") },
    ));

    results.sort_by_key(|r| r.0);
    for (id, name, outcome) in &results {
        report(*id, name, outcome);
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
