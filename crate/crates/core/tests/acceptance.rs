//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Criterion 8 needs the MSR Action3D skeleton files; point
//! `MSR_ACTION3D_DIR` at the directory (and set `MSR_HAS_HEADER=1` if the
//! files carry per-frame header lines) to run it, otherwise it is skipped.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{brute_force_three, dtw_exhaustive, kernel_gram, kkt_violation, random_fixed, rbf_gram};
use elastic_gesture::eval::{
    grid_search, kfold, kfold_subset, latency_sweep, run_experiment, subject_splits, write_splits_csv, EvalOptions,
    EvalReport, ExperimentConfig, GridSpec, SigmaRule, SplitPlan,
};
use elastic_gesture::gram::raw_gram;
use elastic_gesture::kernels::{d_dtw, fit_normalization};
use elastic_gesture::mocap::{load_msr, MSR_DEFAULT_ROOT};
use elastic_gesture::svm::{solve_dual, train_binary};
use elastic_gesture::synth::{generate, SyntheticConfig};
use elastic_gesture::{Dataset, FixedSequence, KernelFamily, KernelSpec, ResampleMode, SmoOptions};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn within(limit: Duration, start: Instant, outcome: Outcome) -> Outcome {
    let elapsed = start.elapsed();
    match outcome {
        Outcome::Pass(d) if elapsed > limit => {
            Outcome::Fail(format!("{d}; took {:.1} s, limit {:.0} s", elapsed.as_secs_f64(), limit.as_secs_f64()))
        }
        other => other,
    }
}

fn dtw_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs = 1200;
    let mut mismatches = 0;
    let mut worst_rel: f64 = 0.0;
    for _ in 0..pairs {
        let k = rng.random_range(1..=3);
        let (la, lb) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let a = random_fixed(&mut rng, la, k);
        let b = random_fixed(&mut rng, lb, k);
        let got = d_dtw(&a, &b).unwrap();
        let want = dtw_exhaustive(&a, &b);
        if got != want {
            mismatches += 1;
            worst_rel = worst_rel.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
        }
    }
    within(
        Duration::from_secs(10),
        start,
        check(
            worst_rel <= 1e-12,
            format!("{pairs} pairs, {mismatches} not bit-identical, worst relative error {worst_rel:.1e}"),
        ),
    )
}

fn rdtw_psd() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let datasets = 60;
    let mut worst: f64 = f64::INFINITY;
    let mut failures = 0;
    for i in 0..datasets {
        let n = rng.random_range(2..=20);
        let len = rng.random_range(2..=10);
        let k = rng.random_range(1..=6);
        let nu = [0.1, 1.0, 10.0][i % 3];
        let seqs: Vec<FixedSequence> = (0..n).map(|_| random_fixed(&mut rng, len, k)).collect();
        let g = raw_gram(&seqs, &KernelSpec::rdtw(nu, 1.0).unwrap(), None).unwrap();
        let m = DMatrix::from_fn(n, n, |i, j| g.get(i, j).exp());
        let trace = m.trace();
        let min = SymmetricEigen::new(m).eigenvalues.min();
        worst = worst.min(min / trace);
        if min < -1e-8 * trace {
            failures += 1;
        }
    }
    within(
        Duration::from_secs(60),
        start,
        check(
            failures == 0,
            format!("{datasets} datasets, {failures} below −1e−8·trace, smallest λ_min/trace {worst:.2e}"),
        ),
    )
}

fn normalization_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sets = 150;
    let mut worst: f64 = 0.0;
    for _ in 0..sets {
        let n = rng.random_range(2..50);
        let values: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-40.0..10.0))).collect();
        let m = values.iter().copied().fold(f64::INFINITY, f64::min);
        let big = values.iter().copied().fold(0.0, f64::max);
        let norm = fit_normalization(&values).unwrap();
        let lo = norm.beta() * m.powf(norm.alpha);
        let hi = norm.beta() * big.powf(norm.alpha);
        worst = worst.max((lo - 1.0).abs()).max((hi - std::f64::consts::E).abs());
    }
    check(worst <= 1e-10, format!("{sets} value sets, worst deviation {worst:.1e}"))
}

fn svm_correctness() -> Outcome {
    let opts = SmoOptions::default();
    let g = kernel_gram(2, vec![1.0, -1.0, -1.0, 1.0]);
    let sol = solve_dual(&g, &[1, -1], 1.0, &opts, None).unwrap();
    let two_point = sol.alpha == [0.5, 0.5] && sol.bias == 0.0;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tight = SmoOptions { tol: 1e-9, ..opts };
    let mut worst_rel: f64 = 0.0;
    let triples = 50;
    for _ in 0..triples {
        let pts: Vec<Vec<f64>> = (0..3)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let mut y: Vec<i8> = (0..3).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
        if y.iter().all(|&l| l == y[0]) {
            y[rng.random_range(0..3)] *= -1;
        }
        let c = [0.1, 1.0, 10.0][rng.random_range(0..3)];
        let g = rbf_gram(&pts, rng.random_range(0.1..3.0));
        let got = solve_dual(&g, &y, c, &tight, None).unwrap().objective();
        let want = brute_force_three(&g, &y, c);
        worst_rel = worst_rel.max((got - want).abs() / want.abs());
    }

    let mut worst_kkt: f64 = 0.0;
    let problems = 20;
    for _ in 0..problems {
        let w: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let mut pts = Vec::new();
        let mut y = Vec::new();
        while pts.len() < 40 {
            let p: Vec<f64> = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let s = w[0] * p[0] + w[1] * p[1];
            if s.abs() > 0.1 {
                y.push(if s > 0.0 { 1 } else { -1 });
                pts.push(p);
            }
        }
        if y.iter().all(|&l| l == y[0]) {
            continue;
        }
        let g = rbf_gram(&pts, 0.5);
        let model = train_binary(&g, &y, 10.0, &opts).unwrap();
        let sol = solve_dual(&g, &y, 10.0, &opts, None).unwrap();
        assert_eq!(model.bias, sol.bias);
        worst_kkt = worst_kkt.max(kkt_violation(&g, &y, 10.0, &sol.alpha, sol.bias));
    }
    check(
        two_point && worst_rel <= 1e-4 && worst_kkt <= opts.tol + 1e-9,
        format!(
            "2-point α = {:?}, b = {}; {triples} 3-point duals worst relative gap {worst_rel:.1e}; \
             {problems} separable problems worst KKT violation {worst_kkt:.1e}",
            sol.alpha, sol.bias
        ),
    )
}

fn base_config(family: KernelFamily, poses: usize) -> ExperimentConfig {
    ExperimentConfig {
        poses,
        family,
        nu: 1.0,
        sigma: SigmaRule::relative(1.0),
        c: 1.0,
        corridor: None,
        resample: ResampleMode::Nearest,
    }
}

/// Hyperparameters from a 5-fold search on the first split's training set.
fn select(ds: &Dataset, train: &[usize], family: KernelFamily, poses: usize, opts: &EvalOptions) -> ExperimentConfig {
    let inner = kfold_subset(ds, train, 5, 17).unwrap();
    let grid = GridSpec { poses: vec![poses], ..GridSpec::default() };
    grid_search(ds, &inner, family, &grid, &base_config(family, poses), opts).unwrap().best
}

fn synthetic_run(ds: &Dataset, plans: &[SplitPlan], family: KernelFamily, poses: usize) -> EvalReport {
    let opts = EvalOptions::default();
    let config = select(ds, &plans[0].train, family, poses, &opts);
    run_experiment(ds, plans, &config, &opts).unwrap()
}

fn describe(r: &EvalReport) -> String {
    format!(
        "{} {:.2} ± {:.2} (ν {}, σ {}×median, C {})",
        r.config.family, r.mean_test, r.std_test, r.config.nu, r.config.sigma.value, r.config.c
    )
}

fn synthetic_benchmark() -> Outcome {
    let start = Instant::now();
    let ds = generate(&SyntheticConfig::easy(2024)).unwrap();
    let plans = subject_splits(&ds, 5).unwrap();
    let rdtw = synthetic_run(&ds, &plans, KernelFamily::Rdtw, 15);
    let euclid = synthetic_run(&ds, &plans, KernelFamily::Euclid, 15);
    within(
        Duration::from_secs(300),
        start,
        check(
            rdtw.mean_test >= euclid.mean_test && rdtw.mean_test >= 90.0,
            format!("{} splits at L = 15: {} vs {}", plans.len(), describe(&rdtw), describe(&euclid)),
        ),
    )
}

fn downsampling_robustness() -> Outcome {
    let ds = generate(&SyntheticConfig::easy(2024)).unwrap();
    let plans = subject_splits(&ds, 5).unwrap();
    let at10 = synthetic_run(&ds, &plans, KernelFamily::Rdtw, 10);
    let at30 = synthetic_run(&ds, &plans, KernelFamily::Rdtw, 30);
    let gap = (at10.mean_test - at30.mean_test).abs();
    check(
        gap <= 5.0,
        format!("L = 10: {}; L = 30: {}; gap {gap:.2} points", describe(&at10), describe(&at30)),
    )
}

fn latency() -> Outcome {
    let ds = generate(&SyntheticConfig {
        n_classes: 20,
        n_subjects: 8,
        repetitions: 2,
        n_joints: 20,
        ..SyntheticConfig::easy(7)
    })
    .unwrap();
    let train: Vec<usize> = (0..ds.len()).filter(|&i| ds.sequences()[i].subject != "s07").collect();
    let samples: Vec<usize> = (0..ds.len()).filter(|&i| ds.sequences()[i].subject == "s07").take(20).collect();
    let config = ExperimentConfig { c: 10.0, ..base_config(KernelFamily::Rdtw, 15) };
    let rows = latency_sweep(&ds, &train, &samples, &[config], &EvalOptions::default(), 2, 5).unwrap();
    let r = &rows[0];
    check(
        r.stats.median_ms < 50.0,
        format!(
            "rdtw L = 15, {} training sequences ({} support): median {:.2} ms, p95 {:.2} ms",
            r.n_train, r.n_support, r.stats.median_ms, r.stats.p95_ms
        ),
    )
}

fn msr_protocol() -> Outcome {
    let Some(dir) = std::env::var_os("MSR_ACTION3D_DIR") else {
        return Outcome::Skip("MSR_ACTION3D_DIR not set".into());
    };
    let has_header = std::env::var("MSR_HAS_HEADER").is_ok_and(|v| v == "1");
    let ds = match load_msr(Path::new(&dir), 20, has_header) {
        Ok(ds) => ds.relativized(MSR_DEFAULT_ROOT).unwrap(),
        Err(e) => return Outcome::Fail(format!("cannot load dataset: {e}")),
    };
    let opts = EvalOptions::default();
    let plans = subject_splits(&ds, 5).unwrap();
    let inner = kfold_subset(&ds, &plans[0].train, 10, 17).unwrap();
    let grid = GridSpec { poses: vec![15], ..GridSpec::default() };
    let best = grid_search(&ds, &inner, KernelFamily::Rdtw, &grid, &base_config(KernelFamily::Rdtw, 15), &opts)
        .unwrap()
        .best;
    let r = run_experiment(&ds, &plans, &best, &opts).unwrap();
    check(
        (r.mean_test - 82.50).abs() <= 3.0 && (r.mean_train - 96.65).abs() <= 3.0,
        format!(
            "{} sequences, {} splits: train {:.2}, test {:.2} ± {:.2}",
            ds.len(),
            r.splits.len(),
            r.mean_train,
            r.mean_test,
            r.std_test
        ),
    )
}

fn determinism() -> Outcome {
    let ds = generate(&SyntheticConfig {
        n_classes: 5,
        n_subjects: 5,
        ..SyntheticConfig::hard(99)
    })
    .unwrap();
    let subjects = subject_splits(&ds, 2).unwrap();
    let folds = kfold(&ds, 5, 42).unwrap();
    let config = ExperimentConfig { nu: 0.5, c: 10.0, ..base_config(KernelFamily::Rdtw, 10) };
    let grid = GridSpec {
        poses: vec![8, 12],
        nu: vec![0.1, 1.0],
        sigma: vec![1.0, 10.0],
        sigma_relative: true,
        c: vec![1.0, 100.0],
    };
    let outputs = |workers: usize| {
        let opts = EvalOptions { workers: Some(workers), ..Default::default() };
        let mut eval_csv = Vec::new();
        let reports = vec![
            run_experiment(&ds, &subjects, &config, &opts).unwrap(),
            run_experiment(&ds, &folds, &config, &opts).unwrap(),
        ];
        write_splits_csv(&reports, &mut eval_csv).unwrap();
        let mut grid_csv = Vec::new();
        let g = grid_search(&ds, &folds, KernelFamily::Rdtw, &grid, &config, &opts).unwrap();
        write_splits_csv(&g.entries, &mut grid_csv).unwrap();
        (eval_csv, grid_csv)
    };
    let reference = outputs(1);
    let counts = [2, 3, 8];
    let identical = counts.iter().all(|&w| outputs(w) == reference);
    check(
        identical,
        format!(
            "evaluate ({} bytes) and grid ({} bytes) CSVs compared for 1 vs {counts:?} workers",
            reference.0.len(),
            reference.1.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("dtw oracle equivalence", dtw_oracle),
        ("regularized kernel PSD", rdtw_psd),
        ("normalization identity", normalization_identity),
        ("svm correctness", svm_correctness),
        ("synthetic end-to-end benchmark", synthetic_benchmark),
        ("down-sampling robustness", downsampling_robustness),
        ("single-action latency", latency),
        ("MSR Action3D protocol", msr_protocol),
        ("determinism across worker counts", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} criterion {} ({name}): {detail} [{secs:.1} s]", i + 1);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
