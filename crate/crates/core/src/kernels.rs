//! Sequence similarity measures and their exponential kernel wrappers.
//!
//! Three families are supported:
//!
//! * `euclid` — lock-step squared Euclidean distance between equal-length
//!   sequences, `K = exp(−d²/σ)`;
//! * `dtw` — dynamic time warping with squared Euclidean local cost,
//!   `K = exp(−d_dtw/σ)`;
//! * `rdtw` — the regularized DTW kernel, which sums over all alignment paths
//!   instead of taking the minimum. Its raw value spans many orders of
//!   magnitude, so it is normalized with constants fitted on training pairs
//!   and wrapped as `K = exp(β·𝒦^α / σ)`.
//!
//! The regularized recursion is evaluated entirely in the log domain: every
//! cell holds `ln K` and predecessors are combined with log-sum-exp. This keeps
//! long sequences and large stiffness values from underflowing to zero.
//!
//! Note that the raw regularized value is not maximal on the diagonal in
//! general: `𝒦(X, X) ≥ 𝒦(X, Y)` does not hold for unnormalized sums.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resample::FixedSequence;

const LN_3: f64 = 1.098_612_288_668_109_8;
/// Relative spread `M/m` at or below which normalization falls back to `α = 1`.
pub const DEGENERATE_SPREAD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Euclid,
    Dtw,
    Rdtw,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 3] = [KernelFamily::Euclid, KernelFamily::Dtw, KernelFamily::Rdtw];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelFamily::Euclid => "euclid",
            KernelFamily::Dtw => "dtw",
            KernelFamily::Rdtw => "rdtw",
        }
    }

    /// Whether the stiffness parameter affects this family.
    pub fn uses_nu(self) -> bool {
        self == KernelFamily::Rdtw
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclid" | "euclidean" => Ok(KernelFamily::Euclid),
            "dtw" => Ok(KernelFamily::Dtw),
            "rdtw" | "kdtw" => Ok(KernelFamily::Rdtw),
            other => Err(Error::Param(format!("unknown kernel family {other:?}"))),
        }
    }
}

/// Fitted normalization constants of the regularized kernel.
///
/// `β` is kept alongside `ln β`; evaluation uses the logarithm so that a
/// huge `β` never overflows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormalizationRepr", into = "NormalizationRepr")]
pub struct Normalization {
    pub alpha: f64,
    pub log_beta: f64,
}

#[derive(Serialize, Deserialize)]
struct NormalizationRepr {
    alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log_beta: Option<f64>,
}

impl From<Normalization> for NormalizationRepr {
    fn from(n: Normalization) -> Self {
        let beta = n.beta();
        NormalizationRepr {
            alpha: n.alpha,
            beta: beta.is_finite().then_some(beta),
            log_beta: Some(n.log_beta),
        }
    }
}

impl TryFrom<NormalizationRepr> for Normalization {
    type Error = String;

    fn try_from(r: NormalizationRepr) -> std::result::Result<Self, String> {
        let log_beta = match (r.log_beta, r.beta) {
            (Some(l), _) => l,
            (None, Some(b)) if b > 0.0 => b.ln(),
            _ => return Err("normalization needs a positive beta or log_beta".into()),
        };
        if !(r.alpha.is_finite() && log_beta.is_finite()) {
            return Err("normalization constants must be finite".into());
        }
        Ok(Normalization { alpha: r.alpha, log_beta })
    }
}

impl Normalization {
    pub fn beta(&self) -> f64 {
        self.log_beta.exp()
    }

    /// `β·𝒦^α` from `ln 𝒦`.
    pub fn apply_log(&self, log_raw: f64) -> f64 {
        (self.log_beta + self.alpha * log_raw).exp()
    }

    /// `β·𝒦^α` from `𝒦`.
    pub fn apply(&self, raw: f64) -> f64 {
        self.apply_log(raw.ln())
    }
}

/// Kernel family plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Stiffness of the regularized kernel (ignored by the other families).
    pub nu: f64,
    /// Exponential bandwidth.
    pub sigma: f64,
    /// Half-width of the admissible band `|p − q| ≤ w` for the regularized
    /// recursion; `None` admits every cell.
    #[serde(default)]
    pub corridor: Option<usize>,
    #[serde(default)]
    pub normalization: Option<Normalization>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, nu: f64, sigma: f64) -> Result<Self> {
        let spec = KernelSpec {
            family,
            nu,
            sigma,
            corridor: None,
            normalization: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn euclid(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Euclid, 1.0, sigma)
    }

    pub fn dtw(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Dtw, 1.0, sigma)
    }

    pub fn rdtw(nu: f64, sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Rdtw, nu, sigma)
    }

    pub fn with_corridor(mut self, corridor: Option<usize>) -> Self {
        self.corridor = corridor;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::Param(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Param(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.normalization.is_some() && self.family != KernelFamily::Rdtw {
            return Err(Error::State(format!(
                "{} kernel carries normalization constants",
                self.family
            )));
        }
        Ok(())
    }

    /// True when the spec can be evaluated (normalization fitted for rdtw).
    pub fn is_fitted(&self) -> bool {
        self.family != KernelFamily::Rdtw || self.normalization.is_some()
    }

    /// Same raw statistic as `self`, i.e. identical family, stiffness and corridor.
    pub fn same_raw(&self, other: &KernelSpec) -> bool {
        self.family == other.family
            && self.corridor == other.corridor
            && (!self.family.uses_nu() || self.nu == other.nu)
    }

    pub fn fitted(mut self, normalization: Normalization) -> Self {
        self.normalization = Some(normalization);
        self
    }
}

fn check_dims(a: &FixedSequence, b: &FixedSequence) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "pose dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Lock-step squared Euclidean distance summed over aligned poses.
pub fn d_euclid_sq(a: &FixedSequence, b: &FixedSequence) -> Result<f64> {
    check_dims(a, b)?;
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "sequence lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.poses().zip(b.poses()).map(|(x, y)| sq_dist(x, y)).sum())
}

/// Dynamic time warping with squared Euclidean local cost.
pub fn d_dtw(a: &FixedSequence, b: &FixedSequence) -> Result<f64> {
    check_dims(a, b)?;
    let lb = b.len();
    let mut prev = vec![0.0f64; lb];
    let mut cur = vec![0.0f64; lb];
    for (p, x) in a.poses().enumerate() {
        for (q, y) in b.poses().enumerate() {
            let cost = sq_dist(x, y);
            let best = match (p, q) {
                (0, 0) => 0.0,
                (0, _) => cur[q - 1],
                (_, 0) => prev[0],
                _ => prev[q].min(prev[q - 1]).min(cur[q - 1]),
            };
            cur[q] = cost + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[lb - 1])
}

#[inline]
fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

#[inline]
fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln 𝒦` of the regularized DTW kernel.
///
/// Two coupled tables are filled over `(0..=L)×(0..=L)`, both equal to 1 at
/// `(0, 0)` and 0 on the remaining borders. `K^xy` sums the three
/// predecessors weighted by the local kernel `e^{−ν d²(x_p, y_q)}`; `K^xx`
/// follows the diagonal-anchored recursion whose horizontal and vertical moves
/// are weighted by `e^{−ν d²(x_p, y_p)}` and `e^{−ν d²(x_q, y_q)}`, and whose
/// diagonal move exists only on `p = q`. Both sums carry a factor `1/3`.
///
/// Both sequences must have the same length, as the `K^xx` weights index the
/// two sequences at the same time step.
pub fn kdtw_log(a: &FixedSequence, b: &FixedSequence, nu: f64, corridor: Option<usize>) -> Result<f64> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::Param(format!("nu must be positive, got {nu}")));
    }
    check_dims(a, b)?;
    let n = a.len();
    if b.len() != n {
        return Err(Error::Dimension(format!(
            "regularized kernel needs equal lengths: {} vs {}",
            n,
            b.len()
        )));
    }
    let admissible = |p: usize, q: usize| corridor.is_none_or(|w| p.abs_diff(q) <= w);

    // log local kernels, row-major over 0-based pose indices
    let mut local = Vec::with_capacity(n * n);
    for x in a.poses() {
        for y in b.poses() {
            local.push(-nu * sq_dist(x, y));
        }
    }
    let self_local = |t: usize| local[t * n + t];

    let width = n + 1;
    let neg = f64::NEG_INFINITY;
    let mut xy_prev = vec![neg; width];
    let mut xx_prev = vec![neg; width];
    let mut xy_cur = vec![neg; width];
    let mut xx_cur = vec![neg; width];
    xy_prev[0] = 0.0;
    xx_prev[0] = 0.0;

    for p in 1..=n {
        xy_cur[0] = neg;
        xx_cur[0] = neg;
        let w_up = self_local(p - 1);
        for q in 1..=n {
            let up = admissible(p - 1, q);
            let diag = admissible(p - 1, q - 1);
            let left = admissible(p, q - 1);
            let lk = local[(p - 1) * n + (q - 1)];

            let s = log_sum_exp3(
                if up { xy_prev[q] } else { neg },
                if diag { xy_prev[q - 1] } else { neg },
                if left { xy_cur[q - 1] } else { neg },
            );
            xy_cur[q] = s + lk - LN_3;

            let t = log_sum_exp3(
                if up { xx_prev[q] + w_up } else { neg },
                if p == q && admissible(p, q) { xx_prev[q - 1] + lk } else { neg },
                if left { xx_cur[q - 1] + self_local(q - 1) } else { neg },
            );
            xx_cur[q] = t - LN_3;
        }
        std::mem::swap(&mut xy_prev, &mut xy_cur);
        std::mem::swap(&mut xx_prev, &mut xx_cur);
    }
    Ok(log_sum_exp2(xy_prev[n], xx_prev[n]))
}

/// Raw regularized DTW value `𝒦 = K^xy + K^xx`. May underflow to zero for
/// very dissimilar inputs; use [`kdtw_log`] when the magnitude matters.
pub fn kdtw_raw(a: &FixedSequence, b: &FixedSequence, nu: f64, corridor: Option<usize>) -> Result<f64> {
    kdtw_log(a, b, nu, corridor).map(f64::exp)
}

/// Fits `α = 1/ln(M/m)` and `β = exp(−α·ln m)` from raw kernel values, so that
/// `β·m^α = 1` and `β·M^α = e`.
pub fn fit_normalization(raw_values: &[f64]) -> Result<Normalization> {
    if let Some(v) = raw_values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!(
            "normalization needs positive finite values, got {v}"
        )));
    }
    let logs: Vec<f64> = raw_values.iter().map(|v| v.ln()).collect();
    fit_normalization_log(&logs)
}

/// [`fit_normalization`] on `ln 𝒦` values.
pub fn fit_normalization_log(log_values: &[f64]) -> Result<Normalization> {
    if log_values.is_empty() {
        return Err(Error::Domain("normalization needs at least one value".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in log_values {
        if !v.is_finite() {
            return Err(Error::Domain(format!(
                "normalization needs positive finite values, got ln value {v}"
            )));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let spread = hi - lo;
    if spread <= DEGENERATE_SPREAD.ln_1p() {
        log::warn!(
            "degenerate kernel spread (max/min = {}); falling back to alpha = 1, beta = 1/min",
            spread.exp()
        );
        return Ok(Normalization {
            alpha: 1.0,
            log_beta: -lo,
        });
    }
    let alpha = 1.0 / spread;
    Ok(Normalization {
        alpha,
        log_beta: -alpha * lo,
    })
}

/// The quantity a Gram matrix is built from before the exponential wrapper:
/// `d²` for euclid, `d_dtw` for dtw and `ln 𝒦` for rdtw.
pub fn raw_statistic(spec: &KernelSpec, a: &FixedSequence, b: &FixedSequence) -> Result<f64> {
    match spec.family {
        KernelFamily::Euclid => d_euclid_sq(a, b),
        KernelFamily::Dtw => d_dtw(a, b),
        KernelFamily::Rdtw => kdtw_log(a, b, spec.nu, spec.corridor),
    }
}

/// Applies the exponential wrapper to a value from [`raw_statistic`].
pub fn wrap_raw(spec: &KernelSpec, raw: f64) -> Result<f64> {
    match spec.family {
        KernelFamily::Euclid | KernelFamily::Dtw => Ok((-raw / spec.sigma).exp()),
        KernelFamily::Rdtw => {
            let norm = spec
                .normalization
                .ok_or_else(|| Error::State("rdtw kernel used before normalization was fitted".into()))?;
            Ok((norm.apply_log(raw) / spec.sigma).exp())
        }
    }
}

/// Evaluates the wrapped kernel `K(a, b)`.
pub fn kernel_eval(spec: &KernelSpec, a: &FixedSequence, b: &FixedSequence) -> Result<f64> {
    if !spec.is_fitted() {
        return Err(Error::State("rdtw kernel used before normalization was fitted".into()));
    }
    wrap_raw(spec, raw_statistic(spec, a, b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn seq1d(values: &[f64]) -> FixedSequence {
        FixedSequence::from_flat(1, values.to_vec()).unwrap()
    }

    #[test]
    fn euclid_examples() {
        let a = FixedSequence::from_poses(&[vec![0.0, 0.0, 0.0]]).unwrap();
        let b = FixedSequence::from_poses(&[vec![3.0, 4.0, 0.0]]).unwrap();
        assert_eq!(d_euclid_sq(&a, &b).unwrap(), 25.0);
        assert_eq!(d_euclid_sq(&a, &a).unwrap(), 0.0);
        let c = FixedSequence::from_poses(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let d = FixedSequence::from_poses(&[vec![3.0, 4.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(d_euclid_sq(&c, &d).unwrap(), 29.0);
    }

    #[test]
    fn mismatched_inputs() {
        let a = seq1d(&[0.0, 1.0]);
        let b = FixedSequence::from_flat(2, vec![0.0, 1.0]).unwrap();
        assert!(matches!(d_euclid_sq(&a, &b).unwrap_err(), Error::Dimension(_)));
        assert!(matches!(d_dtw(&a, &b).unwrap_err(), Error::Dimension(_)));
        assert!(matches!(kdtw_log(&a, &b, 1.0, None).unwrap_err(), Error::Dimension(_)));
        assert!(matches!(d_euclid_sq(&a, &seq1d(&[1.0])).unwrap_err(), Error::Dimension(_)));
    }

    #[test]
    fn dtw_hand_computed() {
        // cost table [[0,4],[1,1],[4,0]]; best path 0 → 1 → 0
        assert_eq!(d_dtw(&seq1d(&[0.0, 1.0, 2.0]), &seq1d(&[0.0, 2.0])).unwrap(), 1.0);
    }

    #[test]
    fn dtw_single_pose_is_euclid() {
        let a = FixedSequence::from_poses(&[vec![1.0, -2.0]]).unwrap();
        let b = FixedSequence::from_poses(&[vec![0.5, 3.0]]).unwrap();
        assert_eq!(d_dtw(&a, &b).unwrap(), d_euclid_sq(&a, &b).unwrap());
        assert_eq!(d_dtw(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn kdtw_single_identical_pose() {
        let a = seq1d(&[0.7]);
        for nu in [0.01, 1.0, 50.0] {
            assert_relative_eq!(kdtw_raw(&a, &a, nu, None).unwrap(), 2.0 / 3.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn kdtw_rejects_bad_nu() {
        let a = seq1d(&[0.0, 1.0]);
        assert!(matches!(kdtw_log(&a, &a, 0.0, None).unwrap_err(), Error::Param(_)));
        assert!(matches!(kdtw_log(&a, &a, -1.0, None).unwrap_err(), Error::Param(_)));
    }

    #[test]
    fn kdtw_stays_finite_in_log_domain() {
        let a = FixedSequence::from_flat(3, (0..600).map(|i| (i as f64).sin() * 40.0).collect()).unwrap();
        let b = FixedSequence::from_flat(3, (0..600).map(|i| (i as f64).cos() * 40.0).collect()).unwrap();
        let v = kdtw_log(&a, &b, 10.0, None).unwrap();
        assert!(v.is_finite());
        assert_eq!(kdtw_raw(&a, &b, 10.0, None).unwrap(), 0.0);
    }

    #[test]
    fn normalization_forced_values() {
        let m = 2.0;
        let big = 2.0 * std::f64::consts::E;
        let n = fit_normalization(&[m, 3.0, big]).unwrap();
        assert_relative_eq!(n.alpha, 1.0, max_relative = 1e-14);
        assert_relative_eq!(n.beta(), 0.5, max_relative = 1e-14);
        assert_relative_eq!(n.apply(m), 1.0, max_relative = 1e-14);
        assert_relative_eq!(n.apply(big), std::f64::consts::E, max_relative = 1e-14);
    }

    #[test]
    fn normalization_degenerate_spread() {
        let n = fit_normalization(&[0.25; 4]).unwrap();
        assert_eq!(n.alpha, 1.0);
        assert_relative_eq!(n.beta(), 4.0, max_relative = 1e-14);
        assert_relative_eq!(n.apply(0.25), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn normalization_domain_errors() {
        assert!(matches!(fit_normalization(&[1.0, 0.0]).unwrap_err(), Error::Domain(_)));
        assert!(matches!(fit_normalization(&[-1.0]).unwrap_err(), Error::Domain(_)));
        assert!(matches!(fit_normalization(&[]).unwrap_err(), Error::Domain(_)));
    }

    #[test]
    fn kernel_eval_wrappers() {
        let a = seq1d(&[0.0, 1.0, 3.0]);
        let b = seq1d(&[0.0, 2.0, 3.0]);
        assert_eq!(kernel_eval(&KernelSpec::euclid(2.0).unwrap(), &a, &a).unwrap(), 1.0);
        let d = d_dtw(&a, &b).unwrap();
        let k = kernel_eval(&KernelSpec::dtw(d).unwrap(), &a, &b).unwrap();
        assert_relative_eq!(k, (-1.0f64).exp(), max_relative = 1e-15);

        let unfitted = KernelSpec::rdtw(1.0, 1.0).unwrap();
        assert!(matches!(kernel_eval(&unfitted, &a, &b).unwrap_err(), Error::State(_)));

        let raw_ab = kdtw_raw(&a, &b, 1.0, None).unwrap();
        let raw_aa = kdtw_raw(&a, &a, 1.0, None).unwrap();
        let sigma = 2.0;
        let fitted = unfitted.with_sigma(sigma).fitted(fit_normalization(&[raw_ab, raw_aa]).unwrap());
        let top = if raw_aa > raw_ab { (&a, &a) } else { (&a, &b) };
        let k = kernel_eval(&fitted, top.0, top.1).unwrap();
        assert_relative_eq!(k, (std::f64::consts::E / sigma).exp(), max_relative = 1e-12);
    }

    #[test]
    fn family_parsing() {
        assert_eq!("RDTW".parse::<KernelFamily>().unwrap(), KernelFamily::Rdtw);
        assert!("erp".parse::<KernelFamily>().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = KernelSpec::rdtw(0.5, 3.0)
            .unwrap()
            .with_corridor(Some(2))
            .fitted(Normalization { alpha: 0.25, log_beta: 1.5 });
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"beta\""));
        let back: KernelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
