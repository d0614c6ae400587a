//! Surrogate selection on `(X_{S0}, y_sur)`.
//!
//! Three procedures are provided: the first `K` variables entering the
//! LARS-lasso path, the lasso at a fixed penalty, and forward stepwise with a
//! fixed number of steps. All of them work on centered, unit-variance
//! columns and a centered response; the reported coefficients come from an
//! OLS refit (with intercept) on the original columns. The lasso and stepwise
//! procedures also return the polyhedron `{y : A y <= b}` of responses that
//! lead to the same selection (set and signs, resp. ordered set and signs).
//! Because every row of `A` is a combination of centered columns, `A 1 = 0`
//! and the polyhedron can be evaluated on the raw, uncentered response.

use crate::error::{invalid, Error, Result};
use crate::linalg::{center, least_squares, select_columns, standardize_columns, with_intercept};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Slack below which a constraint counts as active when checking that the
/// observed response lies in its own selection polyhedron.
pub(crate) const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "lambda", rename_all = "lowercase")]
pub enum Selector {
    Lars,
    Stepwise,
    Lasso(f64),
}

impl Selector {
    pub fn has_polyhedron(&self) -> bool {
        !matches!(self, Selector::Lars)
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Lars => f.write_str("lars"),
            Selector::Stepwise => f.write_str("stepwise"),
            Selector::Lasso(l) => write!(f, "lasso:{l}"),
        }
    }
}

impl FromStr for Selector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lars" => Ok(Selector::Lars),
            "stepwise" => Ok(Selector::Stepwise),
            other => match other.strip_prefix("lasso:") {
                Some(l) => {
                    let lambda: f64 = l.parse().map_err(|_| Error::InvalidInput(format!("bad lambda {l:?}")))?;
                    if !(lambda > 0.0 && lambda.is_finite()) {
                        return invalid("lasso lambda must be positive");
                    }
                    Ok(Selector::Lasso(lambda))
                }
                None => invalid(format!("unknown selector {other:?} (expected lars|stepwise|lasso:<lambda>)")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    LarsK,
    LassoLambda,
    StepwiseK,
}

/// Half-space representation `{y : A y <= b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Polyhedron {
    pub fn empty(n: usize) -> Self {
        Self { a: DMatrix::zeros(0, n), b: DVector::zeros(0) }
    }

    pub fn n_constraints(&self) -> usize {
        self.a.nrows()
    }

    /// `b - A y`; non-negative entries mean satisfied constraints.
    pub fn slack(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * y
    }

    pub fn min_slack(&self, y: &DVector<f64>) -> f64 {
        self.slack(y).iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, y: &DVector<f64>) -> bool {
        self.min_slack(y) >= 0.0
    }

    fn stack(blocks: Vec<(DMatrix<f64>, DVector<f64>)>, n: usize) -> Self {
        let m: usize = blocks.iter().map(|(a, _)| a.nrows()).sum();
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        let mut at = 0;
        for (ab, bb) in blocks {
            let k = ab.nrows();
            a.rows_mut(at, k).copy_from(&ab);
            b.rows_mut(at, k).copy_from(&bb);
            at += k;
        }
        Self { a, b }
    }
}

/// OLS refit with intercept.
#[derive(Debug, Clone)]
pub struct Refit {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub sigma2_hat: f64,
    /// Residual degrees of freedom `n - |S| - 1`.
    pub df: usize,
    /// `contrasts[k]` is the row of `(Z'Z)^{-1} Z'` for coefficient `k`, so
    /// that `contrasts[k]' y = coef[k]`.
    pub contrasts: Vec<DVector<f64>>,
    /// Diagonal of `(Z'Z)^{-1}` for the non-intercept coefficients.
    pub gram_inv_diag: Vec<f64>,
}

/// Least squares of `y` on `[1, X_S]`.
///
/// Fails when the design is rank deficient (naming the offending columns of
/// `x_s`) or when no residual degrees of freedom remain.
pub fn refit_ols(x_s: &DMatrix<f64>, y: &DVector<f64>) -> Result<Refit> {
    let (n, k) = x_s.shape();
    if n < k + 2 {
        return invalid(format!("refit needs n >= |S| + 2 (n = {n}, |S| = {k})"));
    }
    let z = with_intercept(x_s);
    let ls = least_squares(&z, y).map_err(|e| match e {
        Error::RankDeficient { columns } => Error::RankDeficient {
            columns: columns.into_iter().filter(|&c| c > 0).map(|c| c - 1).collect(),
        },
        other => other,
    })?;
    let df = n - k - 1;
    Ok(Refit {
        intercept: ls.coef[0],
        coef: ls.coef.iter().skip(1).copied().collect(),
        sigma2_hat: ls.rss / df as f64,
        df,
        contrasts: (1..=k).map(|r| ls.pinv.row(r).transpose()).collect(),
        gram_inv_diag: (1..=k).map(|r| ls.gram_inv[(r, r)]).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub method: SelectionMethod,
    /// Selected column indices (into the design passed in), in entry order
    /// for LARS and stepwise, ascending for the lasso.
    pub selected: Vec<usize>,
    pub signs: Vec<f64>,
    pub refit: Refit,
    /// `None` for LARS, which is only used with split-sample inference.
    pub polyhedron: Option<Polyhedron>,
    pub warnings: Vec<String>,
}

impl SelectionOutcome {
    fn finish(
        method: SelectionMethod,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        selected: Vec<usize>,
        signs: Vec<f64>,
        polyhedron: Option<Polyhedron>,
        warnings: Vec<String>,
    ) -> Result<Self> {
        let refit = refit_ols(&select_columns(x, &selected), y)?;
        if let Some(poly) = &polyhedron {
            let scale = 1.0 + y.amax() * poly.a.amax();
            let worst = poly.min_slack(y);
            if worst < -MEMBERSHIP_TOL * scale {
                return Err(Error::OutsidePolyhedron(-worst));
            }
        }
        Ok(Self { method, selected, signs, refit, polyhedron, warnings })
    }
}

fn check_xy(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    if x.nrows() < 3 {
        return invalid("selection needs at least three rows");
    }
    Ok(())
}

fn check_k(k: usize, n: usize, p: usize) -> Result<()> {
    if k > p.min(n.saturating_sub(2)) {
        return invalid(format!("K = {k} exceeds min(p, n - 2) = {}", p.min(n.saturating_sub(2))));
    }
    Ok(())
}

/// Event on the LARS-lasso path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathEvent {
    Enter { feature: usize, lambda: f64, sign: f64 },
    Drop { feature: usize, lambda: f64 },
}

/// LARS with the lasso modification on a centered design, stopped once
/// `max_distinct` different variables have entered (or the path ends).
/// `lambda` is the common absolute correlation `|x_j' r|` of the active set
/// at the event, i.e. the penalty of `0.5 ||y - X b||^2 + lambda ||b||_1`.
pub fn lars_lasso_path(x: &DMatrix<f64>, y: &DVector<f64>, max_distinct: usize) -> Result<Vec<PathEvent>> {
    let (n, p) = x.shape();
    let yc = center(y);
    let mut beta = DVector::<f64>::zeros(p);
    let mut active: Vec<usize> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    let mut entered = vec![false; p];
    let mut n_distinct = 0;
    let mut events = Vec::new();
    let mut just_dropped: Option<usize> = None;
    let tiny = 1e-12 * (1.0 + yc.norm() * x.amax());

    let corr = |beta: &DVector<f64>| x.transpose() * (&yc - x * beta);
    let mut c = corr(&beta);

    // First entry: largest absolute correlation, lowest index on ties.
    let (j0, c0) = c.iter().enumerate().fold((0, 0.0f64), |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc });
    if c0 <= tiny {
        return Ok(events);
    }
    let mut big_c = c0;
    active.push(j0);
    signs.push(c[j0].signum());
    entered[j0] = true;
    n_distinct += 1;
    events.push(PathEvent::Enter { feature: j0, lambda: big_c, sign: c[j0].signum() });

    let max_active = p.min(n.saturating_sub(1));
    while n_distinct < max_distinct && big_c > tiny {
        let xa = select_columns(x, &active);
        let gram = xa.transpose() * &xa;
        let s = DVector::from_column_slice(&signs);
        let d = gram
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&s))
            .ok_or_else(|| Error::Singular("active set became collinear on the LARS path".into()))?;
        let u = &xa * &d;
        let a = x.transpose() * &u;

        let mut gamma = big_c;
        let mut entering: Option<usize> = None;
        if active.len() < max_active {
            for j in 0..p {
                if active.contains(&j) || Some(j) == just_dropped {
                    continue;
                }
                for cand in [(big_c - c[j]) / (1.0 - a[j]), (big_c + c[j]) / (1.0 + a[j])] {
                    if cand.is_finite() && cand > tiny * 1e-3 && cand < gamma {
                        gamma = cand;
                        entering = Some(j);
                    }
                }
            }
        }
        let mut dropping: Option<usize> = None;
        for (k, &j) in active.iter().enumerate() {
            let t = -beta[j] / d[k];
            if t.is_finite() && t > 0.0 && t < gamma {
                gamma = t;
                dropping = Some(k);
                entering = None;
            }
        }
        for (k, &j) in active.iter().enumerate() {
            beta[j] += gamma * d[k];
        }
        big_c -= gamma;
        c = corr(&beta);
        just_dropped = None;
        if let Some(k) = dropping {
            let j = active.remove(k);
            signs.remove(k);
            beta[j] = 0.0;
            events.push(PathEvent::Drop { feature: j, lambda: big_c });
            just_dropped = Some(j);
        } else if let Some(j) = entering {
            let sign = c[j].signum();
            active.push(j);
            signs.push(sign);
            if !entered[j] {
                entered[j] = true;
                n_distinct += 1;
            }
            events.push(PathEvent::Enter { feature: j, lambda: big_c, sign });
        } else {
            // Reached the least-squares end of the path.
            break;
        }
        if let Some(&j) = active.first() {
            big_c = c[j].abs();
        }
    }
    Ok(events)
}

/// Distinct variables in order of first entry, with their entry signs and
/// entry penalties.
pub fn first_entries(events: &[PathEvent]) -> Vec<(usize, f64, f64)> {
    let mut out: Vec<(usize, f64, f64)> = Vec::new();
    for e in events {
        if let PathEvent::Enter { feature, lambda, sign } = *e {
            if !out.iter().any(|(f, _, _)| *f == feature) {
                out.push((feature, sign, lambda));
            }
        }
    }
    out
}

/// Prepares the working design: centered columns, scaled to unit population
/// variance when `standardize` is set.
fn working_design(x: &DMatrix<f64>, standardize: bool) -> DMatrix<f64> {
    if standardize {
        standardize_columns(x)
    } else {
        let means: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j])
    }
}

/// First `k` distinct variables to enter the LARS-lasso path.
pub fn lars_first_k(x: &DMatrix<f64>, y: &DVector<f64>, k: usize, standardize: bool) -> Result<SelectionOutcome> {
    check_xy(x, y)?;
    check_k(k, x.nrows(), x.ncols())?;
    let xw = working_design(x, standardize);
    let mut warnings = Vec::new();
    let entries = if k == 0 { Vec::new() } else { first_entries(&lars_lasso_path(&xw, y, k)?) };
    if entries.len() < k {
        warnings.push(format!("LARS path ended after {} of {k} entries", entries.len()));
    }
    let selected: Vec<usize> = entries.iter().take(k).map(|e| e.0).collect();
    let signs: Vec<f64> = entries.iter().take(k).map(|e| e.1).collect();
    SelectionOutcome::finish(SelectionMethod::LarsK, x, y, selected, signs, None, warnings)
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Coordinate descent for `0.5 ||y - X b||^2 + lambda ||b||_1` on a centered
/// design and response, followed by an exact re-solve on the detected
/// support and sign pattern. Returns the coefficients and the largest KKT
/// violation.
pub fn lasso_cd(x: &DMatrix<f64>, yc: &DVector<f64>, lambda: f64) -> Result<(DVector<f64>, f64)> {
    let p = x.ncols();
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
    let mut beta = DVector::<f64>::zeros(p);
    let mut r = yc.clone();
    let scale = yc.amax().max(1e-300);
    for _sweep in 0..100_000 {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if norms[j] == 0.0 {
                continue;
            }
            let col = x.column(j);
            let old = beta[j];
            let z = col.dot(&r) + norms[j] * old;
            let new = soft_threshold(z, lambda) / norms[j];
            if new != old {
                r.axpy(old - new, &col, 1.0);
                beta[j] = new;
                max_delta = max_delta.max((new - old).abs() * norms[j].sqrt());
            }
        }
        if max_delta <= 1e-14 * scale {
            break;
        }
    }

    // Polish: solve the stationarity equations on the support exactly.
    let support: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
    if !support.is_empty() {
        let xs = select_columns(x, &support);
        let s = DVector::from_iterator(support.len(), support.iter().map(|&j| beta[j].signum()));
        let rhs = xs.transpose() * yc - lambda * &s;
        if let Some(sol) = (xs.transpose() * &xs).cholesky().map(|c| c.solve(&rhs)) {
            if sol.iter().zip(s.iter()).all(|(b, s)| b * s > 0.0) {
                for (k, &j) in support.iter().enumerate() {
                    beta[j] = sol[k];
                }
            }
        }
    }

    let grad = x.transpose() * (yc - x * &beta);
    let mut kkt = 0.0f64;
    for j in 0..p {
        let v = if beta[j] != 0.0 {
            (grad[j] - lambda * beta[j].signum()).abs()
        } else {
            (grad[j].abs() - lambda).max(0.0)
        };
        kkt = kkt.max(v);
    }
    Ok((beta, kkt / lambda.max(1.0)))
}

/// Lasso at a fixed penalty with its (support, sign) polyhedron.
pub fn lasso_fixed_lambda(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<SelectionOutcome> {
    check_xy(x, y)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    let n = x.nrows();
    let xs = standardize_columns(x);
    let yc = center(y);
    let (beta, kkt) = lasso_cd(&xs, &yc, lambda)?;
    if kkt > 1e-6 {
        return Err(Error::NoConvergence(format!("lasso KKT residual {kkt:.3e}")));
    }
    let selected: Vec<usize> = (0..x.ncols()).filter(|&j| beta[j] != 0.0).collect();
    let signs: Vec<f64> = selected.iter().map(|&j| beta[j].signum()).collect();
    let poly = lasso_polyhedron(&xs, &selected, &signs, lambda)?;
    debug_assert_eq!(poly.a.ncols(), n);
    SelectionOutcome::finish(SelectionMethod::LassoLambda, x, y, selected, signs, Some(poly), Vec::new())
}

/// `{y : lasso selects (S, s)}` for the centered design `xs`.
pub fn lasso_polyhedron(xs: &DMatrix<f64>, selected: &[usize], signs: &[f64], lambda: f64) -> Result<Polyhedron> {
    let (n, p) = xs.shape();
    let inactive: Vec<usize> = (0..p).filter(|j| !selected.contains(j)).collect();
    let x_out = select_columns(xs, &inactive);
    let mut blocks = Vec::new();
    let (resid_maker, q) = if selected.is_empty() {
        (x_out.transpose(), DVector::zeros(inactive.len()))
    } else {
        let x_in = select_columns(xs, selected);
        let ls = least_squares(&x_in, &DVector::zeros(n))?;
        let s = DVector::from_column_slice(signs);
        // Active block: -diag(s) (X_S'X_S)^{-1} X_S' y <= -lambda diag(s) (X_S'X_S)^{-1} s
        let ginv_s = &ls.gram_inv * &s;
        let mut a_act = ls.pinv.clone();
        let mut b_act = DVector::zeros(selected.len());
        for k in 0..selected.len() {
            a_act.row_mut(k).scale_mut(-signs[k]);
            b_act[k] = -lambda * signs[k] * ginv_s[k];
        }
        blocks.push((a_act, b_act));
        // X_{-S}' (I - P_S) = X_{-S}' - (X_{-S}' X_S) pinv
        let cross = x_out.transpose() * &x_in;
        let rm = x_out.transpose() - &cross * &ls.pinv;
        (rm, &cross * ginv_s)
    };
    let m = inactive.len();
    let upper = resid_maker.clone() / lambda;
    let lower = -resid_maker / lambda;
    blocks.push((upper, DVector::from_fn(m, |i, _| 1.0 - q[i])));
    blocks.push((lower, DVector::from_fn(m, |i, _| 1.0 + q[i])));
    Ok(Polyhedron::stack(blocks, n))
}

/// Path of forward stepwise selection.
#[derive(Debug, Clone)]
pub struct StepwisePath {
    pub order: Vec<usize>,
    pub signs: Vec<f64>,
    /// Steps at which the best and runner-up scores were within 1e-12.
    pub ties: Vec<usize>,
    pub polyhedron: Polyhedron,
}

/// Forward stepwise on a centered design: at each step pick the remaining
/// column maximising `|x_j' (I - P) y|`, where `P` projects onto the columns
/// chosen so far.
pub fn stepwise_path(xs: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<StepwisePath> {
    let (n, p) = xs.shape();
    let mut order: Vec<usize> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    let mut ties = Vec::new();
    let mut blocks = Vec::new();
    for step in 0..k {
        // Rows r_j' = ((I - P) x_j)' for every column.
        let resid_cols = if order.is_empty() {
            xs.clone()
        } else {
            let xa = select_columns(xs, &order);
            let ls = least_squares(&xa, &DVector::zeros(n))?;
            xs - &xa * (&ls.pinv * xs)
        };
        let scores = resid_cols.transpose() * y;
        let remaining: Vec<usize> = (0..p).filter(|j| !order.contains(j)).collect();
        let mut best = remaining[0];
        for &j in &remaining[1..] {
            if scores[j].abs() > scores[best].abs() + 1e-12 * scores[best].abs().max(1.0) {
                best = j;
            }
        }
        let top = scores[best].abs();
        if top == 0.0 || top <= 1e-14 * y.norm() * xs.amax() {
            return Err(Error::Degenerate(format!("stepwise step {}: response orthogonal to every remaining column", step + 1)));
        }
        if remaining.iter().any(|&j| j != best && (scores[j].abs() - top).abs() <= 1e-12 * top.max(1.0)) {
            ties.push(step);
        }
        let s = scores[best].signum();
        let winner = resid_cols.column(best).transpose();
        let comps: Vec<usize> = remaining.iter().copied().filter(|&j| j != best).collect();
        let mut a = DMatrix::zeros(2 * comps.len() + 1, n);
        for (c, &j) in comps.iter().enumerate() {
            let rj = resid_cols.column(j).transpose();
            a.row_mut(2 * c).copy_from(&(&rj - s * &winner));
            a.row_mut(2 * c + 1).copy_from(&(-&rj - s * &winner));
        }
        a.row_mut(2 * comps.len()).copy_from(&(-s * &winner));
        let m = a.nrows();
        blocks.push((a, DVector::zeros(m)));
        order.push(best);
        signs.push(s);
    }
    Ok(StepwisePath { order, signs, ties, polyhedron: Polyhedron::stack(blocks, n) })
}

/// Forward stepwise selection of `k` variables with its (order, sign)
/// polyhedron.
pub fn stepwise_first_k(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<SelectionOutcome> {
    check_xy(x, y)?;
    check_k(k, x.nrows(), x.ncols())?;
    let xs = standardize_columns(x);
    let path = stepwise_path(&xs, y, k)?;
    let warnings = path.ties.iter().map(|s| format!("tie at stepwise step {} resolved by feature index", s + 1)).collect();
    SelectionOutcome::finish(SelectionMethod::StepwiseK, x, y, path.order, path.signs, Some(path.polyhedron), warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_gaussian;

    fn orthonormal_design() -> DMatrix<f64> {
        // Centered orthogonal columns with unit population variance (n = 8).
        let h = [
            [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
            [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0],
            [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0],
        ];
        DMatrix::from_fn(8, 4, |i, j| h[j + 1][i])
    }

    #[test]
    fn refit_examples() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = DVector::from_vec(vec![2.0, 4.0, 6.0]);
        let r = refit_ols(&x, &y).unwrap();
        assert!((r.coef[0] - 2.0).abs() < 1e-12 && r.sigma2_hat.abs() < 1e-20);

        let ds = synth_gaussian(80, 4, &[1.0, 0.5, 0.0, -2.0], 1.0, 3).unwrap();
        let r = refit_ols(&ds.x, &ds.y).unwrap();
        let z = with_intercept(&ds.x);
        for (k, v) in r.contrasts.iter().enumerate() {
            assert!((v.dot(&ds.y) - r.coef[k]).abs() < 1e-10);
            let vz = z.transpose() * v;
            for c in 0..5 {
                let want = if c == k + 1 { 1.0 } else { 0.0 };
                assert!((vz[c] - want).abs() < 1e-10);
            }
        }
        // Independent route: normal equations through an explicit inverse.
        let sol = (z.transpose() * &z).try_inverse().unwrap() * z.transpose() * &ds.y;
        for k in 0..4 {
            assert!((sol[k + 1] - r.coef[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn refit_rank_deficient_names_column() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0, 5.0, 10.0]);
        match refit_ols(&x, &DVector::from_element(5, 1.0)) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec![1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lars_orthonormal_order_is_correlation_ranking() {
        let x = orthonormal_design();
        let y = DVector::from_fn(8, |i, _| 0.3 * x[(i, 0)] - 2.0 * x[(i, 1)] + 1.1 * x[(i, 2)] + 0.7 * x[(i, 3)]);
        let out = lars_first_k(&x, &y, 4, true).unwrap();
        assert_eq!(out.selected, vec![1, 2, 3, 0]);
        assert_eq!(out.signs, vec![-1.0, 1.0, 1.0, 1.0]);
        assert!(out.polyhedron.is_none());
    }

    #[test]
    fn lars_exact_single_feature() {
        let ds = synth_gaussian(40, 3, &[0.0; 3], 0.0, 2).unwrap();
        let y = ds.x.column(1) * 3.0;
        let out = lars_first_k(&ds.x, &y, 1, true).unwrap();
        assert_eq!(out.selected, vec![1]);
        assert!((out.refit.coef[0] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn lars_knots_decrease() {
        let ds = synth_gaussian(50, 7, &[1.0, -1.0, 0.5, 0.0, 0.2, 0.0, 0.1], 1.0, 12).unwrap();
        let xs = standardize_columns(&ds.x);
        let ev = lars_lasso_path(&xs, &ds.y, 7).unwrap();
        let lambdas: Vec<f64> = ev
            .iter()
            .map(|e| match e {
                PathEvent::Enter { lambda, .. } | PathEvent::Drop { lambda, .. } => *lambda,
            })
            .collect();
        assert!(lambdas.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        assert_eq!(first_entries(&ev).len(), 7);
    }

    #[test]
    fn lasso_null_model_above_max_correlation() {
        let ds = synth_gaussian(30, 4, &[1.0, 0.0, 0.0, 0.5], 1.0, 4).unwrap();
        let xs = standardize_columns(&ds.x);
        let lmax = (xs.transpose() * center(&ds.y)).amax();
        let out = lasso_fixed_lambda(&ds.x, &ds.y, lmax * 1.01).unwrap();
        assert!(out.selected.is_empty());
        assert_eq!(out.polyhedron.unwrap().n_constraints(), 8);
    }

    #[test]
    fn lasso_orthonormal_soft_threshold() {
        let x = orthonormal_design();
        let y = DVector::from_fn(8, |i, _| 0.3 * x[(i, 0)] - 2.0 * x[(i, 1)] + 1.1 * x[(i, 2)] + 0.7 * x[(i, 3)]);
        let xs = standardize_columns(&x);
        let (beta, _) = lasso_cd(&xs, &center(&y), 6.0).unwrap();
        // x_j'x_j = 8, so beta_j = S(x_j'y, lambda) / 8.
        let xty = xs.transpose() * &y;
        for j in 0..4 {
            assert!((beta[j] - soft_threshold(xty[j], 6.0) / 8.0).abs() < 1e-12);
        }
        let out = lasso_fixed_lambda(&x, &y, 6.0).unwrap();
        assert_eq!(out.selected, vec![1, 2]);
        assert!(out.polyhedron.unwrap().contains(&y));
    }

    #[test]
    fn stepwise_one_step_row_count() {
        let ds = synth_gaussian(40, 6, &[0.0, 2.0, 0.0, 0.0, 0.0, 0.0], 0.5, 8).unwrap();
        let out = stepwise_first_k(&ds.x, &ds.y, 1).unwrap();
        assert_eq!(out.selected, vec![1]);
        assert_eq!(out.polyhedron.as_ref().unwrap().n_constraints(), 2 * 5 + 1);
    }

    #[test]
    fn stepwise_zero_response_is_degenerate() {
        let ds = synth_gaussian(20, 3, &[0.0; 3], 0.0, 8).unwrap();
        assert!(matches!(stepwise_first_k(&ds.x, &ds.y, 2), Err(Error::Degenerate(_))));
    }

    #[test]
    fn stepwise_column_permutation_invariance() {
        let ds = synth_gaussian(60, 5, &[1.0, 0.0, -0.7, 0.4, 0.0], 1.0, 21).unwrap();
        let perm = [3, 0, 4, 2, 1];
        let xp = select_columns(&ds.x, &perm);
        let a = stepwise_first_k(&ds.x, &ds.y, 3).unwrap();
        let b = stepwise_first_k(&xp, &ds.y, 3).unwrap();
        let mapped: Vec<usize> = b.selected.iter().map(|&k| perm[k]).collect();
        assert_eq!(a.selected, mapped);
    }

    #[test]
    fn k_bounds_checked() {
        let ds = synth_gaussian(6, 5, &[1.0; 5], 1.0, 1).unwrap();
        assert!(stepwise_first_k(&ds.x, &ds.y, 5).is_err());
        assert!(lars_first_k(&ds.x, &ds.y, 5, true).is_err());
    }

    #[test]
    fn selector_parsing() {
        assert_eq!("lars".parse::<Selector>().unwrap(), Selector::Lars);
        assert_eq!("lasso:2.5".parse::<Selector>().unwrap(), Selector::Lasso(2.5));
        assert!("lasso:-1".parse::<Selector>().is_err());
        assert!("ridge".parse::<Selector>().is_err());
        assert_eq!(Selector::Lasso(2.5).to_string(), "lasso:2.5");
    }
}
