//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mercbo::afo::{
    brute_force_minimize, build_bqp, graphcut_minimize, submodular_relaxation_solve, BqpProblem, RelaxationConfig,
    SubmodularQuadratic,
};
use mercbo::benchmarks::{
    make_ising, merit_factor, Alphabet, IsingSpec, Labs, ObjectiveSpec, TabularSpec, ISING_EDGES,
};
use mercbo::driver::{random_search, run_batch_bo, run_bo, run_sequential, RunConfig, RunHistory};
use mercbo::features::spectrum::{hadamard_column, laplacian_eigens_oracle};
use mercbo::features::{binomial, exact_kernel, kernel_from_features, FeatureBasis};
use mercbo::BinaryPoint;
use mercbo_cli::{run_experiment, ExperimentConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn scratch_dir(name: &str) -> PathBuf {
    let base = option_env!("CARGO_TARGET_TMPDIR").map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let dir = base.join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn kernel_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for n in 2..=10 {
        for beta in [0.1, 0.5, 1.0] {
            let basis = FeatureBasis::new(n, n, beta).unwrap();
            for _ in 0..100 {
                let x = BinaryPoint::random(n, &mut rng);
                let y = BinaryPoint::random(n, &mut rng);
                let exact = exact_kernel(&x, &y, beta).unwrap();
                let approx = kernel_from_features(&x, &y, &basis).unwrap();
                worst = worst.max((exact - approx).abs() / exact.abs());
            }
        }
    }
    outcome(worst <= 1e-9, format!("max relative error {worst:.2e}"))
}

fn spectrum_oracle() -> Outcome {
    let mut worst_value = 0.0f64;
    let mut worst_vector = 0.0f64;
    let mut multiplicities_ok = true;
    for n in 1..=4 {
        let s = laplacian_eigens_oracle(n).unwrap();
        let m = s.multiplicities(1e-8);
        multiplicities_ok &= m.len() == n + 1;
        for (j, &(v, c)) in m.iter().enumerate() {
            worst_value = worst_value.max((v - 2.0 * j as f64).abs());
            multiplicities_ok &= c == binomial(n, j);
        }
        let dim = 1usize << n;
        let scale = (dim as f64).sqrt();
        let mut used = vec![false; dim];
        for k in 0..dim {
            let v = s.eigenvectors.column(k);
            let (best_c, err) = (0..dim)
                .filter(|&c| !used[c])
                .map(|c| {
                    let h = hadamard_column(n, c);
                    let sign = if v.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
                    let err = v.iter().zip(&h).map(|(a, b)| (a - sign * b / scale).abs()).fold(0.0, f64::max);
                    (c, err)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            used[best_c] = true;
            worst_vector = worst_vector.max(err);
            worst_value = worst_value.max((s.eigenvalues[k] - 2.0 * best_c.count_ones() as f64).abs());
        }
    }
    outcome(
        multiplicities_ok && worst_value <= 1e-8 && worst_vector <= 1e-8,
        format!("eigenvalue error {worst_value:.1e}, eigenvector error {worst_vector:.1e}, multiplicities C(n,j): {multiplicities_ok}"),
    )
}

fn bqp_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = 0.0f64;
    for n in 2..=12 {
        let basis = FeatureBasis::new(n, 2, rng.random_range(0.05..1.5)).unwrap();
        let phis: Vec<DVector<f64>> = (0..1u64 << n)
            .map(|i| basis.features(&BinaryPoint::from_index(n, i)).unwrap().0)
            .collect();
        for _ in 0..50 {
            let theta = DVector::from_fn(basis.len(), |_, _| rng.random_range(-3.0..3.0));
            let p = build_bqp(&theta, &basis).unwrap();
            for (i, phi) in phis.iter().enumerate() {
                let x = BinaryPoint::from_index(n, i as u64);
                worst = worst.max((p.value(&x).unwrap() - theta.dot(phi)).abs());
            }
        }
    }
    outcome(worst <= 1e-10, format!("max absolute error {worst:.2e}"))
}

fn random_upper(rng: &mut ChaCha8Rng, n: usize, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            a[(i, j)] = f(rng.random_range(-1.0..1.0));
        }
    }
    a
}

fn cut_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0f64;
    let mut argmin_mismatch = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=14);
        let a = random_upper(&mut rng, n, |v| -v.abs() * 2.0);
        let b = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let q = SubmodularQuadratic::new(rng.random_range(-1.0..1.0), b, a).unwrap();
        let (x, v) = graphcut_minimize(&q).unwrap();
        let (bx, bv) = brute_force_minimize(&q.as_bqp()).unwrap();
        worst = worst.max((v - bv).abs());
        if x != bx {
            argmin_mismatch += 1;
        }
    }
    outcome(
        worst <= 1e-6 && argmin_mismatch == 0,
        format!("max value gap {worst:.2e}, argmin mismatches {argmin_mismatch}/200"),
    )
}

fn relaxation_quality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut sound = true;
    let mut monotone = true;
    let mut wins = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=14);
        let a = random_upper(&mut rng, n, |v| v);
        let b = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = BqpProblem::new(rng.random_range(-1.0..1.0), b, a).unwrap();
        let out = submodular_relaxation_solve(&p, &RelaxationConfig::default()).unwrap();
        let (_, opt) = brute_force_minimize(&p).unwrap();
        let tol = 1e-9 * (1.0 + opt.abs());
        sound &= out.state.bound_trace.iter().all(|&l| l <= opt + tol) && opt <= out.value + tol;
        let best = out.state.best_bounds();
        monotone &= best.len() <= 5 && best.windows(2).all(|w| w[0] <= w[1]);
        let random_min = (0..1000)
            .map(|_| p.value(&BinaryPoint::random(n, &mut rng)).unwrap())
            .fold(f64::INFINITY, f64::min);
        if out.value <= random_min {
            wins += 1;
        }
    }
    outcome(
        sound && monotone && wins >= 95,
        format!("bounds sound: {sound}, best-bound trace monotone: {monotone}, beats 1000 random points in {wins}/100"),
    )
}

fn best_merit(h: &RunHistory) -> f64 {
    merit_factor(&h.best().unwrap().point).unwrap()
}

fn labs_end_to_end() -> Outcome {
    let seeds = 0..10u64;
    let mut bo = Vec::new();
    let mut rs = Vec::new();
    for seed in seeds {
        let cfg = RunConfig { budget: 150, seed, ..RunConfig::default() };
        let objective = ObjectiveSpec::new(Labs::new(20).unwrap());
        let h = run_bo(&cfg, &objective).unwrap();
        assert_eq!(objective.evaluation_count(), 150);
        bo.push(best_merit(&h));
        rs.push(best_merit(&random_search(&ObjectiveSpec::new(Labs::new(20).unwrap()), 150, seed).unwrap()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ratio = mean(&bo) / mean(&rs);
    outcome(
        ratio >= 1.1,
        format!("mean best MF {:.3} vs random search {:.3}, ratio {ratio:.3} (need >= 1.1)", mean(&bo), mean(&rs)),
    )
}

fn ising_sanity() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for seed in 0..2u64 {
        let spec: IsingSpec = make_ising(seed, 0.0).unwrap();
        let full = spec.kl_divergence(&BinaryPoint::ones(ISING_EDGES)).unwrap();
        ok &= full == 0.0;
        let cfg = RunConfig { budget: 100, seed, ..RunConfig::default() };
        let h = run_bo(&cfg, &ObjectiveSpec::new(spec)).unwrap();
        let nonneg = h.records.iter().all(|r| r.value >= 0.0);
        let init_best = h.records[..5].iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
        let final_best = *h.best_so_far().last().unwrap();
        ok &= nonneg && final_best <= 0.5 * init_best;
        details.push(format!(
            "seed {seed}: KL(all ones) = {full}, non-negative: {nonneg}, best {final_best:.4} vs initial {init_best:.4}"
        ));
    }
    outcome(ok, details.join("; "))
}

fn mean_round_diversity(h: &RunHistory) -> f64 {
    let d: Vec<f64> = h.batches.iter().filter(|b| b.batch_id > 0).filter_map(|b| b.diversity).collect();
    d.iter().sum::<f64>() / d.len() as f64
}

fn batch_behavior() -> Outcome {
    let table = |seed: u64| ObjectiveSpec::new(TabularSpec::synthetic(Alphabet::dna(), 8, seed).unwrap());
    let mut div5 = 0.0;
    let mut div20 = 0.0;
    for seed in 0..10u64 {
        for (b, acc) in [(5usize, &mut div5), (20, &mut div20)] {
            let cfg = RunConfig { budget: 105, batch_size: b, seed, ..RunConfig::default() };
            *acc += mean_round_diversity(&run_batch_bo(&cfg, &table(seed)).unwrap()) / 10.0;
        }
    }
    let mut identical = true;
    for seed in 0..3u64 {
        let cfg = RunConfig { budget: 30, batch_size: 1, seed, ..RunConfig::default() };
        let a = run_batch_bo(&cfg, &table(seed)).unwrap();
        let s = run_sequential(&cfg, &table(seed)).unwrap();
        identical &= a.records.len() == s.records.len()
            && a.records.iter().zip(&s.records).all(|(x, y)| {
                x.point == y.point && x.value.to_bits() == y.value.to_bits() && x.batch_id == y.batch_id
            });
    }
    outcome(
        div20 > div5 && identical,
        format!("mean diversity B=20 {div20:.3} vs B=5 {div5:.3}; B=1 equals sequential: {identical}"),
    )
}

fn determinism() -> Outcome {
    let mut cfgs = Vec::new();
    let mut labs = ExperimentConfig::new("labs", 25);
    labs.labs_n = Some(12);
    labs.repeats = 3;
    labs.batch_size = 4;
    labs.seed = 5;
    cfgs.push(("labs", labs));
    let mut table = ExperimentConfig::new("synthetic_tabular", 30);
    table.tabular_length = Some(6);
    table.tabular_seed = Some(9);
    table.tabular_init = Some(0.1);
    table.dedupe = "forbid".into();
    table.repeats = 2;
    cfgs.push(("tabular", table));

    let mut compared = 0;
    let mut identical = true;
    for (name, mut cfg) in cfgs {
        let mut outputs = Vec::new();
        for attempt in 0..2 {
            cfg.output_dir = scratch_dir(&format!("a9_{name}_{attempt}"));
            run_experiment(&cfg).unwrap();
            let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&cfg.output_dir)
                .unwrap()
                .map(|e| e.unwrap().path())
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
                .collect();
            files.sort();
            outputs.push(files);
        }
        compared += outputs[0].len();
        identical &= outputs[0] == outputs[1];
    }
    outcome(identical, format!("{compared} CSV files compared across reruns, byte-identical: {identical}"))
}

fn order_ablation() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for (order, afo) in [(2usize, "submodular_relaxation"), (3, "local_search")] {
        let mut cfg = ExperimentConfig::new("labs", 60);
        cfg.labs_n = Some(15);
        cfg.max_order = order;
        cfg.afo = afo.into();
        cfg.repeats = 2;
        cfg.output_dir = scratch_dir(&format!("a10_order{order}"));
        match run_experiment(&cfg) {
            Ok(report) => {
                let complete = report.histories.iter().all(|h| h.len() == 60);
                let summary = std::fs::read_to_string(report.output_dir.join("summary.csv")).unwrap();
                let last = summary.lines().last().unwrap_or_default().to_owned();
                ok &= complete;
                details.push(format!("order {order} ({afo}): complete {complete}, final summary row {last}"));
            }
            Err(e) => {
                ok = false;
                details.push(format!("order {order}: {e}"));
            }
        }
    }
    outcome(ok, details.join("; "))
}

type Criterion = (&'static str, &'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("A1", "kernel identity", Duration::from_secs(10), kernel_identity),
        ("A2", "spectrum oracle", Duration::from_secs(5), spectrum_oracle),
        ("A3", "quadratic program identity", Duration::from_secs(30), bqp_identity),
        ("A4", "cut exactness", Duration::from_secs(30), cut_exactness),
        ("A5", "relaxation soundness and quality", Duration::from_secs(120), relaxation_quality),
        ("A6", "end-to-end LABS", Duration::from_secs(600), labs_end_to_end),
        ("A7", "Ising sanity", Duration::from_secs(600), ising_sanity),
        ("A8", "batch behavior", Duration::from_secs(600), batch_behavior),
        ("A9", "determinism", Duration::from_secs(600), determinism),
        ("A10", "order ablation", Duration::from_secs(600), order_ablation),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('A')).collect();
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {id} {name}: {} [{:.1}s, limit {}s{}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
