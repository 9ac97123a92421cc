//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

mod common;

use std::path::Path;
use std::time::Instant;

use catrobust::attack_graph::{graph_attack, FnScorer, NetScorer, Scorer, SearchMode};
use catrobust::attack_pgd::{cat_pgd, PgdConfig};
use catrobust::bench::{run_pipeline, ExperimentSpec, Report, Stage, DEFAULT_EPS, MERGE_PERCENTILES};
use catrobust::merging::merge_embeddings;
use catrobust::net::{EmbeddingFile, EmbeddingSet};
use catrobust::projections::{
    constraint_violation, dykstra_project_traced, project_simplex, project_weighted_l1, BlockLayout,
};
use catrobust::training::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [1, 2, 3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn projection_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let n = 500;
    let mut simplex_err: f64 = 0.0;
    let mut l1_err: f64 = 0.0;
    for _ in 0..n {
        let dim = rng.gen_range(1..=6);
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        simplex_err = simplex_err.max(common::l2(&project_simplex(&v), &common::simplex_oracle(&v)));
    }
    for _ in 0..n {
        let dim = rng.gen_range(1..=6);
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let w: Vec<f64> = (0..dim)
            .map(|_| if rng.gen_bool(0.15) { 0.0 } else { rng.gen_range(0.1..10.0) })
            .collect();
        let eps = rng.gen_range(0.0..5.0);
        let got = project_weighted_l1(&v, &w, eps).unwrap();
        l1_err = l1_err.max(common::l2(&got, &common::weighted_l1_oracle(&v, &w, eps)));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        simplex_err <= 1e-5 && l1_err <= 1e-5 && secs < 60.0,
        format!(
            "simplex max l2 err {simplex_err:.2e}, weighted-l1 max l2 err {l1_err:.2e} over {n} instances each (tol 1e-5), {secs:.1}s (limit 60s)"
        ),
    )
}

fn dykstra_feasibility() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let n = 1000;
    let (mut feasible, mut monotone) = (0, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let m = rng.gen_range(1..=4);
        let cards: Vec<usize> = (0..m).map(|_| rng.gen_range(2..=6)).collect();
        let layout = BlockLayout::from_cardinalities(&cards);
        let xtilde = common::random_block_point(&mut rng, &layout);
        let delta: Vec<f64> = (0..layout.width()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..layout.width()).map(|_| rng.gen_range(0.1..20.0)).collect();
        let eps = rng.gen_range(0.0..10.0);
        let (out, trace) = dykstra_project_traced(&xtilde, &delta, &w, eps, &layout, 20).unwrap();
        let v = constraint_violation(&xtilde, &out, &w, eps, &layout);
        worst = worst.max(v);
        if v <= 1e-6 {
            feasible += 1;
        }
        if trace.windows(2).all(|p| p[1] <= p[0] + 1e-12) {
            monotone += 1;
        }
    }
    outcome(
        feasible == n && monotone == n,
        format!(
            "{feasible}/{n} within 1e-6 after 20 iterations (worst violation {worst:.2e}), {monotone}/{n} with non-increasing violation"
        ),
    )
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.gen_range(1..=4);
        let cards: Vec<usize> = (0..m).map(|_| rng.gen_range(2..=5)).collect();
        let dim = rng.gen_range(1..=4);
        let hidden: Vec<usize> = (0..rng.gen_range(0..=2)).map(|_| rng.gen_range(2..=6)).collect();
        let net = common::random_net(&mut rng, &cards, dim, &hidden);
        let layout = BlockLayout::from_cardinalities(&cards);
        let x = common::random_block_point(&mut rng, &layout);
        let y = rng.gen_range(0..=1);
        worst = worst.max(common::gradient_check(&net, &x, y, 1e-5));
    }
    outcome(
        worst < 1e-4,
        format!("max relative error {worst:.2e} over theta, Q and input gradients on 20 nets (tol 1e-4)"),
    )
}

fn pgd_feasibility_and_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let defaults = TrainConfig::default();
    let (mut infeasible, mut checked) = (0, 0);
    let (mut dominated, mut dominated_tuned) = (0, 0);
    let mut worst_gap: f64 = 0.0;
    let n_models = 50;
    for _ in 0..n_models {
        let cards = loop {
            let m = rng.gen_range(2..=4);
            let c: Vec<usize> = (0..m).map(|_| rng.gen_range(2..=8)).collect();
            if c.iter().product::<usize>() <= 10_000 {
                break c;
            }
        };
        let cm = common::random_cost_model(&mut rng, &cards, 0.1, 10.0, 0.1);
        let net = common::random_net(&mut rng, &cards, defaults.embedding_dim, &defaults.hidden);
        let row = common::random_row(&mut rng, &cards);
        let eps = rng.gen_range(0.5..15.0);
        let cfg = PgdConfig::with_eps(eps);
        let res = cat_pgd(&row, 1, &net, &cm, &cfg).unwrap();
        let xbar = cm.one_hot(&row).unwrap();
        let w = cm.cost_weights(&row).unwrap();
        let delta: Vec<f64> = res.xtilde_prime.iter().zip(&xbar).map(|(a, b)| a - b).collect();
        checked += 1;
        if constraint_violation(&xbar, &delta, &w, eps, cm.layout()) > 1e-6 {
            infeasible += 1;
        }
        let best = common::reachable(&cm, &row, eps)
            .iter()
            .map(|(r, _)| net.forward(&cm.one_hot(r).unwrap(), 1).unwrap().loss)
            .fold(f64::NEG_INFINITY, f64::max);
        if res.loss_after >= best - 1e-9 {
            dominated += 1;
        } else {
            worst_gap = worst_gap.max(best - res.loss_after);
        }
        // Same model under the benchmark's fixed step size, for the record.
        let tuned = cat_pgd(&row, 1, &net, &cm, &PgdConfig { alpha: Some(5.0), ..cfg }).unwrap();
        if tuned.loss_after >= best - 1e-9 {
            dominated_tuned += 1;
        }
    }
    // Feasibility on a larger batch of random rows.
    for _ in 0..1000 {
        let m = rng.gen_range(1..=5);
        let cards: Vec<usize> = (0..m).map(|_| rng.gen_range(2..=10)).collect();
        let cm = common::random_cost_model(&mut rng, &cards, 0.1, 50.0, 0.1);
        let net = common::random_net(&mut rng, &cards, 3, &[4]);
        let row = common::random_row(&mut rng, &cards);
        let eps = rng.gen_range(0.0..30.0);
        let res = cat_pgd(&row, 1, &net, &cm, &PgdConfig::with_eps(eps)).unwrap();
        let xbar = cm.one_hot(&row).unwrap();
        let delta: Vec<f64> = res.xtilde_prime.iter().zip(&xbar).map(|(a, b)| a - b).collect();
        checked += 1;
        if constraint_violation(&xbar, &delta, &cm.cost_weights(&row).unwrap(), eps, cm.layout()) > 1e-6 {
            infeasible += 1;
        }
    }
    outcome(
        infeasible == 0 && dominated == n_models,
        format!(
            "{infeasible}/{checked} outputs infeasible at 1e-6; relaxed loss >= best discrete loss on {dominated}/{n_models} models at the default step size (largest shortfall {worst_gap:.3e}), {dominated_tuned}/{n_models} at alpha 5"
        ),
    )
}

fn graph_attack_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let n = 100;
    let (mut agree, mut successes) = (0, 0);
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let cards = loop {
            let m = rng.gen_range(2..=6);
            let c: Vec<usize> = (0..m).map(|_| rng.gen_range(2..=10)).collect();
            if c.iter().product::<usize>() <= 100_000 {
                break c;
            }
        };
        let cm = common::random_cost_model(&mut rng, &cards, 0.1, 20.0, 0.1);
        let row = common::random_row(&mut rng, &cards);
        let eps = rng.gen_range(0.5..40.0);
        let (got, want) = if k % 2 == 0 {
            let net = common::random_net(&mut rng, &cards, 4, &[8]);
            let bias = NetScorer(&net).score(&row);
            // Shift so the original row starts correctly classified half the time.
            let shift = if rng.gen_bool(0.5) { -bias + 0.5 } else { 0.0 };
            let s = FnScorer(move |r: &[usize]| net.logit_row(r).unwrap() + shift);
            (
                graph_attack(&row, 1, &s, &cm, eps, SearchMode::Exact).unwrap(),
                common::enumerate_attack(&cm, &row, 1, eps, &s),
            )
        } else {
            let table: Vec<f64> = (0..cards.iter().product::<usize>())
                .map(|_| rng.gen_range(-0.3..1.0))
                .collect();
            let index = move |r: &[usize]| r.iter().zip(&cards).fold(0, |acc, (&v, &t)| acc * t + v);
            let s = FnScorer(move |r: &[usize]| table[index(r)]);
            (
                graph_attack(&row, 1, &s, &cm, eps, SearchMode::Exact).unwrap(),
                common::enumerate_attack(&cm, &row, 1, eps, &s),
            )
        };
        let same = match want {
            None => !got.success,
            Some(c) => {
                successes += 1;
                worst = worst.max((got.cost - c).abs());
                got.success && (got.cost - c).abs() <= 1e-9 && cm.cost(&row, &got.row).unwrap() <= eps
            }
        };
        if same {
            agree += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        agree == n && secs < 120.0,
        format!(
            "{agree}/{n} instances match enumeration ({successes} attackable, max cost diff {worst:.1e}, tol 1e-9), {secs:.1}s (limit 120s)"
        ),
    )
}

fn mean_robust(report: &Report, model: &str, eps: f64) -> f64 {
    report.row(model, eps).map_or(f64::NAN, |r| r.robust_acc)
}

fn adversarial_training_direction(report: &Report, secs: f64) -> Outcome {
    let clean = mean_robust(report, "net_clean", DEFAULT_EPS);
    let adv = mean_robust(report, "net_adv", DEFAULT_EPS);
    let gap = 100.0 * (adv - clean);
    outcome(
        gap >= 10.0 && secs < 600.0,
        format!(
            "robust acc at eps {DEFAULT_EPS}: adv {:.1}% vs clean {:.1}% (+{gap:.1} points, need 10), {secs:.0}s (limit 600s)",
            100.0 * adv,
            100.0 * clean
        ),
    )
}

fn merging_ablation(report: &Report) -> Outcome {
    let at = |tag: &str| mean_robust(report, &format!("gbs_{tag}"), DEFAULT_EPS);
    let (best_p, best) = MERGE_PERCENTILES
        .iter()
        .map(|&p| (p, at(&format!("bilevel_p{p:.2}"))))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let unmerged = at("bilevel");
    let (rand_p, random) = MERGE_PERCENTILES
        .iter()
        .map(|&p| (p, at(&format!("random_p{p:.2}"))))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let (a, b) = (100.0 * (best - unmerged), 100.0 * (best - random));
    outcome(
        a >= 5.0 && b >= 5.0,
        format!(
            "GBS robust acc at eps {DEFAULT_EPS}: merged bilevel p={best_p:.2} {:.1}%, unmerged {:.1}% (+{a:.1}), best merged random p={rand_p:.2} {:.1}% (+{b:.1}); need 5 each",
            100.0 * best,
            100.0 * unmerged,
            100.0 * random
        ),
    )
}

fn merging_identities(dir: &Path) -> Outcome {
    let mut sets: Vec<EmbeddingSet> = Vec::new();
    for seed in SEEDS {
        let f = EmbeddingFile::load(&dir.join(format!("seed_{seed}/embeddings_bilevel.json"))).unwrap();
        sets.push(f.to_embeddings().unwrap());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let cards = sets[0].cardinalities();
    for _ in 0..3 {
        sets.push(EmbeddingSet::random(&cards, sets[0].dim, &mut rng));
    }
    let mut identity = true;
    let (mut clusters, mut violations) = (0, 0);
    for q in &sets {
        let r = merge_embeddings(q, 0.0).unwrap();
        let bits = |s: &EmbeddingSet| -> Vec<u64> {
            s.tables.iter().flat_map(|t| t.as_slice().iter().map(|x| x.to_bits())).collect()
        };
        identity &= bits(&r.merged) == bits(q);
        for p in [0.01, 0.05, 0.1, 0.15, 0.3, 0.5] {
            let r = merge_embeddings(q, p).unwrap();
            let (c, v) = common::check_clusters(q, &r);
            clusters += c;
            violations += v;
        }
    }
    outcome(
        identity && violations == 0,
        format!(
            "p=0 bit-identical on {} embedding sets: {identity}; {violations} certificate violations over {clusters} clusters",
            sets.len()
        ),
    )
}

fn monotonicity(reports: &[&Report]) -> Outcome {
    let (mut curves, mut bad) = (0, Vec::new());
    for report in reports {
        for run in &report.runs {
            let mut models: Vec<&str> = run.rows.iter().map(|r| r.model.as_str()).collect();
            models.dedup();
            for m in models {
                let mut rows: Vec<_> = run.rows.iter().filter(|r| r.model == m).collect();
                rows.sort_by(|a, b| a.eps.total_cmp(&b.eps));
                curves += 1;
                if rows.windows(2).any(|w| w[1].robust_acc > w[0].robust_acc) {
                    bad.push(format!("{m}@seed{}", run.seed));
                }
            }
        }
    }
    outcome(
        bad.is_empty() && curves > 0,
        format!("{} of {curves} per-seed curves non-increasing over the eps grid {bad:?}", curves - bad.len()),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = determinism_spec(dir.path());
    let files = ["report.json", "report.csv", "report.txt"];
    let read = || -> Vec<Vec<u8>> { files.iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect() };
    run_pipeline(&spec).unwrap();
    let first = read();
    run_pipeline(&spec).unwrap();
    let second = read();
    let same = first == second;
    outcome(
        same,
        format!(
            "two strict runs of all stages with seed {}: {} report files byte-identical: {same}",
            spec.seeds[0],
            files.len()
        ),
    )
}

fn determinism_spec(out: &Path) -> ExperimentSpec {
    let mut spec = ExperimentSpec {
        seeds: vec![1],
        out_dir: Some(out.to_path_buf()),
        strict_deterministic: true,
        ..ExperimentSpec::default()
    };
    if let catrobust::bench::DataSource::Synthetic { spec: s } = &mut spec.data {
        s.n_samples = 1500;
    }
    spec.train.epochs = 3;
    spec.bilevel.epochs = 3;
    spec
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report_line = |id: usize, name: &'static str, o: Outcome| {
        println!("{} {id:>2}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };
    report_line(1, "projection oracles", projection_oracles());
    report_line(2, "dykstra feasibility", dykstra_feasibility());
    report_line(3, "gradient correctness", gradient_correctness());
    report_line(4, "cat-pgd feasibility and dominance", pgd_feasibility_and_dominance());
    report_line(5, "graph attack exactness", graph_attack_exactness());

    let start = Instant::now();
    let adv_report = run_pipeline(&ExperimentSpec {
        stages: vec![Stage::Clean, Stage::Adv, Stage::AttackEval],
        seeds: SEEDS.to_vec(),
        ..ExperimentSpec::default()
    })
    .unwrap();
    let adv_secs = start.elapsed().as_secs_f64();
    let clean = adv_report.row("net_clean", DEFAULT_EPS).unwrap();
    println!(
        "      note: clean net clean acc {:.1}%, robust acc at eps {DEFAULT_EPS} {:.1}%",
        100.0 * clean.clean_acc,
        100.0 * clean.robust_acc
    );
    report_line(6, "adversarial training direction", adversarial_training_direction(&adv_report, adv_secs));

    let dir = tempfile::tempdir().unwrap();
    let merge_report = run_pipeline(&ExperimentSpec {
        stages: vec![Stage::Bilevel, Stage::Merge, Stage::Trees, Stage::AttackEval],
        seeds: SEEDS.to_vec(),
        out_dir: Some(dir.path().to_path_buf()),
        ..ExperimentSpec::default()
    })
    .unwrap();
    report_line(7, "merging ablation direction", merging_ablation(&merge_report));
    report_line(8, "merging identities", merging_identities(dir.path()));
    report_line(9, "monotonicity", monotonicity(&[&adv_report, &merge_report]));
    report_line(10, "determinism", determinism());

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
