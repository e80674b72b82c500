mod common;

use approx::assert_relative_eq;
use common::{brute_force_three, kernel_gram, kkt_violation, random_fixed, rbf_gram};
use elastic_gesture::gram::{finalize_train, raw_gram};
use elastic_gesture::svm::{solve_dual, train_multiclass, DualState};
use elastic_gesture::{KernelSpec, SmoOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn separable(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<i8>) {
    let w: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let mut pts = Vec::new();
    let mut y = Vec::new();
    while pts.len() < n {
        let p: Vec<f64> = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let s = w[0] * p[0] + w[1] * p[1];
        if s.abs() < 0.2 {
            continue;
        }
        // keep both classes present
        let label = if pts.is_empty() { 1 } else if pts.len() == 1 { -1 } else if s > 0.0 { 1 } else { -1 };
        if (label == 1) != (s > 0.0) {
            continue;
        }
        pts.push(p);
        y.push(label);
    }
    (pts, y)
}

#[test]
fn kkt_holds_on_separable_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let opts = SmoOptions::default();
    for _ in 0..20 {
        let (pts, y) = separable(&mut rng, 30);
        let g = rbf_gram(&pts, 0.5);
        for c in [0.5, 10.0] {
            let sol = solve_dual(&g, &y, c, &opts, None).unwrap();
            assert!(sol.converged);
            let v = kkt_violation(&g, &y, c, &sol.alpha, sol.bias);
            assert!(v <= opts.tol + 1e-9, "KKT violation {v}");
        }
    }
}

#[test]
fn three_point_duals_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let opts = SmoOptions { tol: 1e-9, ..SmoOptions::default() };
    for _ in 0..30 {
        let pts: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let mut y: Vec<i8> = (0..3).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
        if y.iter().all(|&l| l == y[0]) {
            y[2] = -y[0];
        }
        let c = [0.1, 1.0, 10.0][rng.random_range(0..3)];
        let g = rbf_gram(&pts, 1.0);
        let sol = solve_dual(&g, &y, c, &opts, None).unwrap();
        let expected = brute_force_three(&g, &y, c);
        assert_relative_eq!(sol.objective(), expected, max_relative = 1e-4);
    }
}

#[test]
fn objective_never_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (pts, y) = separable(&mut rng, 40);
    let g = rbf_gram(&pts, 2.0);
    let mut history = Vec::new();
    let mut observe = |s: &DualState<'_>| history.push(s.objective());
    let sol = solve_dual(&g, &y, 5.0, &SmoOptions::default(), Some(&mut observe)).unwrap();
    assert!(!history.is_empty());
    for w in history.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "{} then {}", w[0], w[1]);
    }
    assert_relative_eq!(*history.last().unwrap(), sol.objective(), max_relative = 1e-12);
}

#[test]
fn indefinite_dtw_gram_terminates() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let seqs: Vec<_> = (0..30).map(|_| random_fixed(&mut rng, 8, 2)).collect();
    let spec = KernelSpec::dtw(0.5).unwrap();
    let (g, _) = finalize_train(&raw_gram(&seqs, &spec, Some(1)).unwrap(), &spec).unwrap();
    let y: Vec<i8> = (0..30).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
    let opts = SmoOptions { max_iter: Some(5_000), ..SmoOptions::default() };
    let sol = solve_dual(&g, &y, 10.0, &opts, None).unwrap();
    assert!(sol.iterations <= 5_000);
    assert!(sol.alpha.iter().all(|&a| (0.0..=10.0).contains(&a)));
    assert!(sol.bias.is_finite());
}

#[test]
fn one_vs_one_memorizes_distinct_points() {
    let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64, (i * i) as f64 * 0.1]).collect();
    let g = rbf_gram(&pts, 1.0);
    let labels: Vec<String> = (0..9).map(|i| format!("k{}", i % 3)).collect();
    let model = train_multiclass(&g, &labels, 100.0, &SmoOptions::default()).unwrap();
    assert_eq!(model.binaries.len(), 3);
    assert_eq!(model.predict(&g).unwrap(), labels);
}

#[test]
fn bias_is_finite_when_all_vectors_are_bounded() {
    let g = kernel_gram(4, vec![1.0; 16]);
    let sol = solve_dual(&g, &[1, 1, -1, -1], 1.0, &SmoOptions::default(), None).unwrap();
    assert!(sol.bias.is_finite());
    assert!(sol.alpha.iter().all(|&a| a == 0.0 || a == 1.0));
}
