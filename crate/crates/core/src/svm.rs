//! C-SVM on precomputed kernel matrices: SMO for the binary dual and
//! one-vs-one voting for multiclass problems.
//!
//! The binary dual is
//!
//! ```text
//! min_α  ½ αᵀQα − eᵀα   s.t.  0 ≤ α_i ≤ C,  Σ y_i α_i = 0,   Q_ij = y_i y_j K_ij
//! ```
//!
//! Each SMO step picks the maximal violating pair and moves along
//! `α_i += y_i t, α_j −= y_j t`. When the pair curvature
//! `K_ii + K_jj − 2K_ij` is not positive (indefinite kernels such as the DTW
//! exponential), the step goes to the box boundary, which is the minimizer of
//! a concave one-dimensional objective with a descent direction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::GramMatrix;
use crate::kernels::KernelSpec;

/// Default C grid searched by the harness.
pub const DEFAULT_C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoOptions {
    /// Stopping threshold on the maximal KKT violation `m(α) − M(α)`.
    pub tol: f64,
    /// Pair updates before giving up; `None` means `10·n·1000`.
    pub max_iter: Option<usize>,
    /// Curvatures at or below this are treated as non-positive.
    pub tau: f64,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions {
            tol: 1e-3,
            max_iter: None,
            tau: 1e-12,
        }
    }
}

/// Solver state exposed to observers after every pair update.
#[derive(Debug, Clone)]
pub struct DualState<'a> {
    pub iteration: usize,
    pub alpha: &'a [f64],
    /// Gradient of the minimized objective, `Qα − e`.
    pub gradient: &'a [f64],
}

impl DualState<'_> {
    /// Maximized dual objective `eᵀα − ½αᵀQα`.
    pub fn objective(&self) -> f64 {
        dual_objective(self.alpha, self.gradient)
    }
}

fn dual_objective(alpha: &[f64], gradient: &[f64]) -> f64 {
    0.5 * alpha.iter().zip(gradient).map(|(a, g)| a * (1.0 - g)).sum::<f64>()
}

/// Full dual solution of a binary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub gradient: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl DualSolution {
    pub fn objective(&self) -> f64 {
        dual_objective(&self.alpha, &self.gradient)
    }
}

fn validate_problem(gram: &GramMatrix, labels: &[i8], c: f64) -> Result<()> {
    if gram.n_rows() != gram.n_cols() || gram.n_rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{}×{} kernel for {} labels",
            gram.n_rows(),
            gram.n_cols(),
            labels.len()
        )));
    }
    if !gram.symmetric {
        return Err(Error::Param("binary training needs a symmetric kernel matrix".into()));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Param(format!("C must be positive, got {c}")));
    }
    if let Some(l) = labels.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::Label(format!("binary labels must be ±1, got {l}")));
    }
    if !(labels.contains(&1) && labels.contains(&-1)) {
        return Err(Error::Label("binary training needs both classes".into()));
    }
    if gram.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("kernel matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Solves the binary dual by SMO with maximal-violating-pair selection.
/// `observer` is called after every pair update.
pub fn solve_dual(
    gram: &GramMatrix,
    labels: &[i8],
    c: f64,
    opts: &SmoOptions,
    mut observer: Option<&mut dyn FnMut(&DualState<'_>)>,
) -> Result<DualSolution> {
    validate_problem(gram, labels, c)?;
    let n = labels.len();
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = opts.max_iter.unwrap_or(10 * n * 1000);

    let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y < 0.0 && a < c) || (y > 0.0 && a > 0.0);

    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > g_max {
                g_max = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min <= opts.tol {
            converged = true;
            break;
        }

        let k_ii = gram.get(i, i);
        let k_jj = gram.get(j, j);
        let k_ij = gram.get(i, j);
        let curvature = k_ii + k_jj - 2.0 * k_ij;
        let descent = g_max - g_min;
        let room_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let room_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        let t_max = room_i.min(room_j);
        let t = if curvature > opts.tau {
            (descent / curvature).min(t_max)
        } else {
            t_max
        };

        if t == room_i {
            alpha[i] = if y[i] > 0.0 { c } else { 0.0 };
        } else {
            alpha[i] += y[i] * t;
        }
        if t == room_j {
            alpha[j] = if y[j] > 0.0 { 0.0 } else { c };
        } else {
            alpha[j] -= y[j] * t;
        }
        let row_i = gram.row(i);
        let row_j = gram.row(j);
        for k in 0..n {
            grad[k] += y[k] * t * (row_i[k] - row_j[k]);
        }
        iterations += 1;
        if let Some(obs) = observer.as_mut() {
            obs(&DualState {
                iteration: iterations,
                alpha: &alpha,
                gradient: &grad,
            });
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} pair updates without reaching tol {}", opts.tol);
    }
    let bias = compute_bias(&alpha, &grad, &y, c);
    Ok(DualSolution {
        alpha,
        gradient: grad,
        bias,
        converged,
        iterations,
    })
}

/// Bias `b = −ρ` where `ρ` averages `y_i G_i` over free vectors, or is the
/// midpoint of the interval allowed by bound vectors when none are free.
fn compute_bias(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };
    -rho
}

/// One binary classifier of the one-vs-one ensemble. The first class of
/// `class_pair` is the positive side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub class_pair: (String, String),
    pub support_indices: Vec<usize>,
    /// `α_i·y_i` for each support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub converged: bool,
}

impl BinaryModel {
    /// `Σ coef_i·K(x, sv_i) + b`, with `kernel(i)` giving `K(x, train_i)`.
    pub fn decision(&self, kernel: impl Fn(usize) -> f64) -> f64 {
        self.support_indices
            .iter()
            .zip(&self.dual_coefs)
            .map(|(&i, coef)| coef * kernel(i))
            .sum::<f64>()
            + self.bias
    }
}

/// Trains one binary SVM; support indices refer to rows of `gram`.
pub fn train_binary(gram: &GramMatrix, labels: &[i8], c: f64, opts: &SmoOptions) -> Result<BinaryModel> {
    let sol = solve_dual(gram, labels, c, opts, None)?;
    let mut support_indices = Vec::new();
    let mut dual_coefs = Vec::new();
    for (i, (&a, &l)) in sol.alpha.iter().zip(labels).enumerate() {
        if a > 0.0 {
            support_indices.push(i);
            dual_coefs.push(a * f64::from(l));
        }
    }
    Ok(BinaryModel {
        class_pair: ("+1".into(), "-1".into()),
        support_indices,
        dual_coefs,
        bias: sol.bias,
        c,
        converged: sol.converged,
    })
}

/// One-vs-one multiclass SVM over a precomputed kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub spec: KernelSpec,
    pub class_set: Vec<String>,
    pub train_ids: Vec<String>,
    pub binaries: Vec<BinaryModel>,
}

/// Trains `C(m, 2)` binary models, one per unordered class pair, on the
/// rows/columns of `gram` belonging to the two classes.
pub fn train_multiclass(gram: &GramMatrix, labels: &[String], c: f64, opts: &SmoOptions) -> Result<SvmModel> {
    if labels.len() != gram.n_rows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} training rows",
            labels.len(),
            gram.n_rows()
        )));
    }
    let mut class_set: Vec<String> = labels.to_vec();
    class_set.sort();
    class_set.dedup();
    if class_set.len() < 2 {
        return Err(Error::Label(format!(
            "multiclass training needs at least 2 classes, got {}",
            class_set.len()
        )));
    }
    let class_of: Vec<usize> = labels
        .iter()
        .map(|l| class_set.binary_search(l).expect("label in class set"))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..class_set.len())
        .flat_map(|a| (a + 1..class_set.len()).map(move |b| (a, b)))
        .collect();
    let binaries = pairs
        .par_iter()
        .map(|&(a, b)| {
            let rows: Vec<usize> = (0..labels.len())
                .filter(|&i| class_of[i] == a || class_of[i] == b)
                .collect();
            let signs: Vec<i8> = rows.iter().map(|&i| if class_of[i] == a { 1 } else { -1 }).collect();
            let sub = gram.select(&rows, &rows);
            let mut m = train_binary(&sub, &signs, c, opts)
                .map_err(|e| e.context(format!("classes {} vs {}", class_set[a], class_set[b])))?;
            m.class_pair = (class_set[a].clone(), class_set[b].clone());
            m.support_indices = m.support_indices.iter().map(|&k| rows[k]).collect();
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmModel {
        spec: gram.spec.clone(),
        class_set,
        train_ids: gram.row_ids.clone(),
        binaries,
    })
}

impl SvmModel {
    /// Training indices used as support vectors by any binary model, sorted.
    pub fn support_union(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .binaries
            .iter()
            .flat_map(|b| b.support_indices.iter().copied())
            .collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    }

    /// Index into `class_set` chosen by majority vote.
    ///
    /// Positive decisions vote for the first class of a pair, others for the
    /// second. Ties go to the class with the largest summed absolute decision
    /// value over the pairs it won, then to the earliest class.
    pub fn vote(&self, kernel: impl Fn(usize) -> f64) -> usize {
        let m = self.class_set.len();
        let mut votes = vec![0usize; m];
        let mut strength = vec![0.0f64; m];
        for b in &self.binaries {
            let (pos, neg) = self.pair_indices(b);
            let d = b.decision(&kernel);
            let winner = if d > 0.0 { pos } else { neg };
            votes[winner] += 1;
            strength[winner] += d.abs();
        }
        let mut best = 0;
        for k in 1..m {
            if votes[k] > votes[best] || (votes[k] == votes[best] && strength[k] > strength[best]) {
                best = k;
            }
        }
        best
    }

    fn pair_indices(&self, b: &BinaryModel) -> (usize, usize) {
        let find = |l: &String| {
            self.class_set
                .iter()
                .position(|c| c == l)
                .expect("binary class pair drawn from class set")
        };
        (find(&b.class_pair.0), find(&b.class_pair.1))
    }

    /// Predicts one label per row of a test×train kernel matrix whose columns
    /// are the model's training sequences.
    pub fn predict(&self, cross: &GramMatrix) -> Result<Vec<String>> {
        if cross.col_ids != self.train_ids {
            return Err(Error::Alignment(format!(
                "kernel columns ({} ids) do not match the model's {} training ids",
                cross.col_ids.len(),
                self.train_ids.len()
            )));
        }
        Ok((0..cross.n_rows())
            .map(|r| {
                let row = cross.row(r);
                self.class_set[self.vote(|i| row[i])].clone()
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: SvmModel = serde_json::from_str(text)?;
        let m = model.class_set.len();
        if model.binaries.len() != m * m.saturating_sub(1) / 2 {
            return Err(Error::Schema {
                line: 0,
                message: format!("{} binaries for {m} classes", model.binaries.len()),
            });
        }
        Ok(model)
    }
}
