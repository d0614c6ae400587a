//! Inference for selected surrogate coefficients.
//!
//! Full-sample mode conditions on the selection event `{y : A y <= b}`. For
//! a contrast `v` with observed value `T = v'y`, write `y = c T + W` where
//! `c = v / ||v||^2`. The event then restricts `T` to an interval whose ends
//! depend on `y` only through `W`, and given `W` and the event `T` follows a
//! normal law with mean `v' E[y]` and standard deviation `sigma ||v||`,
//! truncated to that interval. P-values and confidence intervals come from
//! this truncated law.
//!
//! Split-sample mode refits on rows that played no part in selection, so
//! ordinary t-inference applies there. The naive mode runs the same t
//! mechanics on the selection rows and ignores the selection.

use crate::error::{invalid, Error, Result};
use crate::selection::{refit_ols, Polyhedron, SelectionOutcome, MEMBERSHIP_TOL};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;
use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

/// `|a' c|` below which a constraint is treated as parallel to the line
/// `W + c t`.
const PARALLEL_TOL: f64 = 1e-12;
/// Confidence bounds further than this many standard errors from the
/// estimate are reported as infinite.
const CI_BRACKET_LIMIT: f64 = 50.0;
const CI_TOL: f64 = 1e-8;
const CI_MAX_STEPS: usize = 200;

/// Interval `[lower, upper]` to which the selection event restricts `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationInterval {
    #[serde(with = "crate::serde_ext")]
    pub lower: f64,
    #[serde(with = "crate::serde_ext")]
    pub upper: f64,
    /// False when a constraint parallel to the line is violated by `W`,
    /// which can only come from numerical inconsistency.
    pub feasible: bool,
}

impl TruncationInterval {
    pub fn unbounded() -> Self {
        Self { lower: f64::NEG_INFINITY, upper: f64::INFINITY, feasible: true }
    }
}

/// Truncation interval of `T = v'y` along the line `y(t) = W + c t`.
pub fn truncation_bounds(poly: &Polyhedron, v: &DVector<f64>, y: &DVector<f64>) -> Result<TruncationInterval> {
    let n = y.len();
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    if poly.a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: poly.a.ncols() });
    }
    let vv = v.norm_squared();
    if !(vv > 0.0) {
        return invalid("contrast vector is zero");
    }
    let tol = MEMBERSHIP_TOL * (1.0 + y.amax() * poly.a.amax());
    let worst = poly.min_slack(y);
    if worst < -tol {
        return Err(Error::OutsidePolyhedron(-worst));
    }

    let c = v / vv;
    let t = v.dot(y);
    let w = y - &c * t;
    let ac = &poly.a * &c;
    let room = &poly.b - &poly.a * &w;
    let mut out = TruncationInterval::unbounded();
    for (l, &slope) in ac.iter().enumerate() {
        if slope.abs() < PARALLEL_TOL {
            if room[l] < -tol {
                out.feasible = false;
            }
        } else if slope > 0.0 {
            out.upper = out.upper.min(room[l] / slope);
        } else {
            out.lower = out.lower.max(room[l] / slope);
        }
    }
    // Rounding can leave the observed value marginally outside.
    out.lower = out.lower.min(t);
    out.upper = out.upper.max(t);
    Ok(out)
}

/// `Phi(x)` via the complementary error function.
pub fn ndtr(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `log Phi(x)`, accurate far into the lower tail.
pub fn log_ndtr(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x > 5.0 {
        (-ndtr(-x)).ln_1p()
    } else if x > -20.0 {
        ndtr(x).ln()
    } else {
        // Mills-ratio asymptotic series: 1 - 1/x^2 + 3/x^4 - 15/x^6 + ...
        let x2 = x * x;
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..=12 {
            term *= -((2 * k - 1) as f64) / x2;
            series += term;
        }
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

/// `log(1 - exp(x))` for `x <= 0`.
fn log1m_exp(x: f64) -> f64 {
    if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `log(Phi(hi) - Phi(lo))` for standardized `lo <= hi`.
fn log_mass(lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return f64::NEG_INFINITY;
    }
    if lo >= 0.0 {
        let a = log_ndtr(-lo);
        a + log1m_exp(log_ndtr(-hi) - a)
    } else if hi <= 0.0 {
        let a = log_ndtr(hi);
        a + log1m_exp(log_ndtr(lo) - a)
    } else {
        (-(ndtr(lo) + ndtr(-hi))).ln_1p()
    }
}

struct Standardized {
    lo: f64,
    hi: f64,
    z: f64,
    log_total: f64,
}

fn standardize(t: f64, mu: f64, tau: f64, lower: f64, upper: f64) -> Result<Standardized> {
    if !(tau > 0.0 && tau.is_finite()) {
        return invalid(format!("tau must be positive and finite, got {tau}"));
    }
    if !mu.is_finite() || t.is_nan() {
        return invalid("mean and observation must be finite");
    }
    if !(lower < upper) {
        return invalid(format!("truncation interval [{lower}, {upper}] is empty"));
    }
    let lo = (lower - mu) / tau;
    let hi = (upper - mu) / tau;
    let z = (t.clamp(lower, upper) - mu) / tau;
    let log_total = log_mass(lo, hi);
    if !log_total.is_finite() {
        return Err(Error::EmptyInterval);
    }
    Ok(Standardized { lo, hi, z, log_total })
}

/// CDF at `t` of `N(mu, tau^2)` truncated to `[lower, upper]`.
pub fn tn_cdf(t: f64, mu: f64, tau: f64, lower: f64, upper: f64) -> Result<f64> {
    let s = standardize(t, mu, tau, lower, upper)?;
    Ok((log_mass(s.lo, s.z) - s.log_total).exp().clamp(0.0, 1.0))
}

/// Survival function `1 - tn_cdf`, computed without cancellation.
pub fn tn_sf(t: f64, mu: f64, tau: f64, lower: f64, upper: f64) -> Result<f64> {
    let s = standardize(t, mu, tau, lower, upper)?;
    Ok((log_mass(s.z, s.hi) - s.log_total).exp().clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sided {
    Two,
    Greater,
    Less,
}

/// Selective p-value for `H0: theta = theta0`.
pub fn selective_p(t: f64, tau: f64, interval: &TruncationInterval, theta0: f64, sided: Sided) -> Result<f64> {
    if !interval.feasible {
        return Err(Error::Degenerate("truncation interval is infeasible".into()));
    }
    let (lo, hi) = (interval.lower, interval.upper);
    Ok(match sided {
        Sided::Greater => tn_sf(t, theta0, tau, lo, hi)?,
        Sided::Less => tn_cdf(t, theta0, tau, lo, hi)?,
        Sided::Two => {
            let lower_tail = tn_cdf(t, theta0, tau, lo, hi)?;
            let upper_tail = tn_sf(t, theta0, tau, lo, hi)?;
            (2.0 * lower_tail.min(upper_tail)).min(1.0)
        }
    })
}

/// Root of the increasing function `d` near `center`, searched on
/// `center +- 50 tau`; a root beyond that range is reported as an infinite
/// bound in the corresponding direction.
fn invert_increasing(d: impl Fn(f64) -> Result<f64>, center: f64, tau: f64) -> Result<f64> {
    let limit = CI_BRACKET_LIMIT * tau;
    let mut step = tau;
    let mut lo = center - step;
    while d(lo)? > 0.0 {
        if step >= limit {
            return Ok(f64::NEG_INFINITY);
        }
        step = (2.0 * step).min(limit);
        lo = center - step;
    }
    step = tau;
    let mut hi = center + step;
    while d(hi)? < 0.0 {
        if step >= limit {
            return Ok(f64::INFINITY);
        }
        step = (2.0 * step).min(limit);
        hi = center + step;
    }
    for _ in 0..CI_MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= CI_TOL * tau || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if d(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::NoConvergence(format!("confidence bound bisection exceeded {CI_MAX_STEPS} steps")))
}

/// Equal-tailed `1 - alpha` interval obtained by inverting the truncated-normal
/// tests: `ci_low` solves `P_theta(T' >= t) = alpha / 2` and `ci_high` solves
/// `P_theta(T' <= t) = alpha / 2`.
pub fn selective_ci(t: f64, tau: f64, interval: &TruncationInterval, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return invalid(format!("alpha must lie in (0, 0.5], got {alpha}"));
    }
    if !interval.feasible {
        return Err(Error::Degenerate("truncation interval is infeasible".into()));
    }
    let (lo, hi) = (interval.lower, interval.upper);
    let half = 0.5 * alpha;
    let ci_low = invert_increasing(|th| Ok(tn_sf(t, th, tau, lo, hi)? - half), t, tau)?;
    let ci_high = invert_increasing(|th| Ok(half - tn_cdf(t, th, tau, lo, hi)?), t, tau)?;
    Ok((ci_low, ci_high))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    TruncatedNormal,
    SplitT,
    Naive,
}

/// Inference for one selected coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveSummary {
    /// Observed contrast value `v'y`.
    pub observed: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// `estimate / std_error` (a z statistic for the truncated-normal mode,
    /// a t statistic otherwise).
    pub statistic: f64,
    pub p_value: f64,
    #[serde(with = "crate::serde_ext")]
    pub ci_low: f64,
    #[serde(with = "crate::serde_ext")]
    pub ci_high: f64,
    pub alpha: f64,
    pub mode: InferenceMode,
    /// Residual degrees of freedom of the t-based modes.
    pub df: Option<usize>,
    pub truncation: Option<TruncationInterval>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

/// Two-sided t test and `1 - alpha` interval for an estimate with standard
/// error `se` on `df` degrees of freedom.
pub fn t_summary(estimate: f64, se: f64, df: usize, alpha: f64, mode: InferenceMode) -> Result<SelectiveSummary> {
    check_alpha(alpha)?;
    if df == 0 {
        return invalid("t inference needs at least one residual degree of freedom");
    }
    if !(se > 0.0 && se.is_finite()) {
        return Err(Error::Degenerate(format!("standard error is {se}; the refit leaves no residual variance")));
    }
    let nu = df as f64;
    let t = estimate / se;
    let p_value = beta_reg(0.5 * nu, 0.5, nu / (nu + t * t)).clamp(0.0, 1.0);
    let dist = StudentsT::new(0.0, 1.0, nu).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let q = dist.inverse_cdf(1.0 - 0.5 * alpha);
    Ok(SelectiveSummary {
        observed: estimate,
        estimate,
        std_error: se,
        statistic: t,
        p_value,
        ci_low: estimate - q * se,
        ci_high: estimate + q * se,
        alpha,
        mode,
        df: Some(df),
        truncation: None,
    })
}

fn t_inference(x_s: &DMatrix<f64>, y: &DVector<f64>, alpha: f64, mode: InferenceMode) -> Result<Vec<SelectiveSummary>> {
    check_alpha(alpha)?;
    let refit = refit_ols(x_s, y)?;
    check_residual_variance(refit.sigma2_hat, y)?;
    refit
        .coef
        .iter()
        .zip(&refit.gram_inv_diag)
        .map(|(&b, &g)| t_summary(b, (refit.sigma2_hat * g).sqrt(), refit.df, alpha, mode))
        .collect()
}

fn check_residual_variance(sigma2_hat: f64, y: &DVector<f64>) -> Result<()> {
    let mean = y.mean();
    let spread = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
    if !(sigma2_hat > 1e-24 * spread.max(f64::MIN_POSITIVE)) {
        return Err(Error::Degenerate("refit is exact (residual variance is zero)".into()));
    }
    Ok(())
}

/// Classical t inference on rows disjoint from the selection rows.
pub fn split_t_inference(x_s: &DMatrix<f64>, y: &DVector<f64>, alpha: f64) -> Result<Vec<SelectiveSummary>> {
    t_inference(x_s, y, alpha, InferenceMode::SplitT)
}

/// The same t mechanics on the rows used for selection.
pub fn naive_inference(x_s: &DMatrix<f64>, y: &DVector<f64>, alpha: f64) -> Result<Vec<SelectiveSummary>> {
    t_inference(x_s, y, alpha, InferenceMode::Naive)
}

/// Truncated-normal inference for every selected coefficient of a
/// full-sample selection, testing `theta = 0` two-sided.
pub fn truncated_inference(outcome: &SelectionOutcome, y: &DVector<f64>, alpha: f64) -> Result<Vec<SelectiveSummary>> {
    check_alpha(alpha)?;
    if alpha > 0.5 {
        return invalid(format!("alpha must lie in (0, 0.5], got {alpha}"));
    }
    let poly = outcome
        .polyhedron
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("selection carries no polyhedron; use split-sample inference".into()))?;
    let refit = &outcome.refit;
    if !outcome.selected.is_empty() {
        check_residual_variance(refit.sigma2_hat, y)?;
    }
    let sigma = refit.sigma2_hat.sqrt();
    refit
        .contrasts
        .iter()
        .zip(&refit.coef)
        .map(|(v, &estimate)| {
            let observed = v.dot(y);
            let tau = sigma * v.norm();
            let interval = truncation_bounds(poly, v, y)?;
            let p_value = selective_p(observed, tau, &interval, 0.0, Sided::Two)?;
            let (ci_low, ci_high) = selective_ci(observed, tau, &interval, alpha)?;
            Ok(SelectiveSummary {
                observed,
                estimate,
                std_error: tau,
                statistic: estimate / tau,
                p_value,
                ci_low,
                ci_high,
                alpha,
                mode: InferenceMode::TruncatedNormal,
                df: None,
                truncation: Some(interval),
            })
        })
        .collect()
}
