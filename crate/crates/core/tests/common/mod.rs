//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use elastic_gesture::gram::GramContent;
use elastic_gesture::{FixedSequence, GramMatrix, KernelSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_fixed(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> FixedSequence {
    let data = (0..len * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    FixedSequence::from_flat(dim, data).unwrap()
}

fn sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Minimum over every monotone path from (0, 0) to (n−1, m−1), each path
/// summed front to back.
pub fn dtw_exhaustive(a: &FixedSequence, b: &FixedSequence) -> f64 {
    fn walk(a: &FixedSequence, b: &FixedSequence, p: usize, q: usize, acc: f64, best: &mut f64) {
        let acc = acc + sq(a.pose(p), b.pose(q));
        if p + 1 == a.len() && q + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if p + 1 < a.len() {
            walk(a, b, p + 1, q, acc, best);
        }
        if q + 1 < b.len() {
            walk(a, b, p, q + 1, acc, best);
        }
        if p + 1 < a.len() && q + 1 < b.len() {
            walk(a, b, p + 1, q + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

/// Linear-domain regularized DTW value straight from its two-table
/// definition, with full `(L+1)²` tables.
pub fn kdtw_naive(a: &FixedSequence, b: &FixedSequence, nu: f64, corridor: Option<usize>) -> f64 {
    let n = a.len();
    assert_eq!(n, b.len());
    let h = |p: usize, q: usize| corridor.is_none_or(|w| p.abs_diff(q) <= w);
    let k = |p: usize, q: usize| (-nu * sq(a.pose(p - 1), b.pose(q - 1))).exp();
    let mut xy = vec![vec![0.0; n + 1]; n + 1];
    let mut xx = vec![vec![0.0; n + 1]; n + 1];
    xy[0][0] = 1.0;
    xx[0][0] = 1.0;
    for p in 1..=n {
        for q in 1..=n {
            let hv = |pp: usize, qq: usize, v: f64| if h(pp, qq) { v } else { 0.0 };
            xy[p][q] = k(p, q) / 3.0
                * (hv(p - 1, q, xy[p - 1][q]) + hv(p - 1, q - 1, xy[p - 1][q - 1]) + hv(p, q - 1, xy[p][q - 1]));
            let diag = if p == q { hv(p, q, k(p, q) * xx[p - 1][q - 1]) } else { 0.0 };
            xx[p][q] = (hv(p - 1, q, k(p, p) * xx[p - 1][q]) + diag + hv(p, q - 1, k(q, q) * xx[p][q - 1])) / 3.0;
        }
    }
    xy[n][n] + xx[n][n]
}

pub fn kernel_gram(n: usize, values: Vec<f64>) -> GramMatrix {
    GramMatrix::from_values(n, n, values, KernelSpec::euclid(1.0).unwrap(), GramContent::Kernel).unwrap()
}

/// Gaussian kernel matrix over points.
pub fn rbf_gram(points: &[Vec<f64>], gamma: f64) -> GramMatrix {
    let n = points.len();
    let mut v = Vec::with_capacity(n * n);
    for x in points {
        for y in points {
            v.push((-gamma * sq(x, y)).exp());
        }
    }
    kernel_gram(n, v)
}

/// Dual objective `Σα − ½ΣΣ α_i α_j y_i y_j K_ij`.
pub fn dual_objective(gram: &GramMatrix, y: &[i8], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * f64::from(y[i] * y[j]) * gram.get(i, j);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Maximum KKT violation of `(α, b)`: box and equality feasibility plus the
/// margin conditions on `y_i f(x_i)`.
pub fn kkt_violation(gram: &GramMatrix, y: &[i8], c: f64, alpha: &[f64], bias: f64) -> f64 {
    let n = y.len();
    let eps = 1e-9 * c;
    let mut worst: f64 = 0.0;
    let balance: f64 = alpha.iter().zip(y).map(|(a, &l)| a * f64::from(l)).sum();
    worst = worst.max(balance.abs());
    for i in 0..n {
        worst = worst.max(-alpha[i]).max(alpha[i] - c);
        let f: f64 = (0..n).map(|j| alpha[j] * f64::from(y[j]) * gram.get(i, j)).sum::<f64>() + bias;
        let margin = f64::from(y[i]) * f;
        let v = if alpha[i] <= eps {
            1.0 - margin
        } else if alpha[i] >= c - eps {
            margin - 1.0
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Maximizes the 3-point dual by a grid over `(α_0, α_1)` (α_2 follows from
/// the equality constraint), then repeatedly zooms in around the best point.
pub fn brute_force_three(gram: &GramMatrix, y: &[i8], c: f64) -> f64 {
    assert_eq!(y.len(), 3);
    let yf: Vec<f64> = y.iter().map(|&l| f64::from(l)).collect();
    let eval = |a0: f64, a1: f64| -> Option<f64> {
        let a2 = -(yf[0] * a0 + yf[1] * a1) * yf[2];
        if !(-1e-15..=c + 1e-15).contains(&a2) {
            return None;
        }
        Some(dual_objective(gram, y, &[a0, a1, a2.clamp(0.0, c)]))
    };
    let steps = 200;
    let (mut lo0, mut hi0, mut lo1, mut hi1) = (0.0, c, 0.0, c);
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for _ in 0..40 {
        for i in 0..=steps {
            for j in 0..=steps {
                let a0 = lo0 + (hi0 - lo0) * i as f64 / steps as f64;
                let a1 = lo1 + (hi1 - lo1) * j as f64 / steps as f64;
                if let Some(w) = eval(a0, a1) {
                    if w > best.0 {
                        best = (w, a0, a1);
                    }
                }
            }
        }
        let r0 = (hi0 - lo0) / 10.0;
        let r1 = (hi1 - lo1) / 10.0;
        lo0 = (best.1 - r0).max(0.0);
        hi0 = (best.1 + r0).min(c);
        lo1 = (best.2 - r1).max(0.0);
        hi1 = (best.2 + r1).min(c);
    }
    best.0
}
