//! Interventional Shapley attributions and SHAP-based screening.
//!
//! The coalition value of `S` for a point `x` is the average of `f` over the
//! background rows with the coordinates in `S` replaced by those of `x`.
//! [`exact_shap`] enumerates all `2^p` coalitions; [`kernel_shap`] solves
//! the Shapley-kernel weighted least-squares problem with the efficiency
//! constraint eliminated exactly, over either all coalitions or a stratified,
//! complement-paired sample of them.

use crate::error::{invalid, Error, Result};
use crate::linalg::row;
use crate::predictors::Predictor;
use crate::rng::rng_from_seed;
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

/// Largest feature count accepted by [`exact_shap`].
pub const EXACT_MAX_FEATURES: usize = 20;
/// Default number of background rows.
pub const DEFAULT_BACKGROUND_SIZE: usize = 100;

#[derive(Debug, Clone)]
pub struct Background {
    pub rows: DMatrix<f64>,
    pub base_value: f64,
}

impl Background {
    pub fn new(f: &dyn Predictor, rows: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return invalid("background needs at least one row");
        }
        if rows.ncols() != f.n_features() {
            return Err(Error::DimensionMismatch { expected: f.n_features(), got: rows.ncols() });
        }
        let base_value = mean_prediction(f, &rows)?;
        if !base_value.is_finite() {
            return invalid("background base value is not finite");
        }
        Ok(Self { rows, base_value })
    }

    /// Uses `size` rows of `pool` drawn without replacement (kept in pool
    /// order), or the whole pool when it is not larger than `size`.
    pub fn sample(f: &dyn Predictor, pool: &DMatrix<f64>, size: usize, seed: u64) -> Result<Self> {
        let n = pool.nrows();
        let idx: Vec<usize> = if n <= size {
            (0..n).collect()
        } else {
            let mut v = sample(&mut rng_from_seed(seed), n, size).into_vec();
            v.sort_unstable();
            v
        };
        Self::new(f, crate::linalg::select_rows(pool, &idx))
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }
}

fn mean_prediction(f: &dyn Predictor, rows: &DMatrix<f64>) -> Result<f64> {
    let mut s = 0.0;
    for b in 0..rows.nrows() {
        s += f.predict(&row(rows, b))?;
    }
    Ok(s / rows.nrows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Exact,
    Kernel,
    /// Attributions read from a file rather than computed.
    Supplied,
}

#[derive(Debug, Clone)]
pub struct ShapMatrix {
    /// `phi[(i, j)]` is the attribution of feature `j` at evaluation row `i`.
    pub phi: DMatrix<f64>,
    pub base_value: f64,
    pub engine: EngineKind,
    pub global_scores: Vec<f64>,
}

impl ShapMatrix {
    pub fn new(phi: DMatrix<f64>, base_value: f64, engine: EngineKind) -> Self {
        let global_scores = global_scores(&phi);
        Self { phi, base_value, engine, global_scores }
    }

    pub fn n_rows(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.phi.ncols()
    }

    /// Largest `|sum_j phi_ij + base - f(x_i)|` over the rows of `x`.
    pub fn efficiency_gap(&self, f: &dyn Predictor, x: &DMatrix<f64>) -> Result<f64> {
        let mut worst = 0.0f64;
        for i in 0..x.nrows() {
            let fx = f.predict(&row(x, i))?;
            let total: f64 = self.phi.row(i).sum() + self.base_value;
            worst = worst.max((total - fx).abs());
        }
        Ok(worst)
    }

    /// Writes one row per evaluation sample with a final `base_value`
    /// column, preceded by `comments` as `#` lines.
    pub fn write_csv(&self, feature_names: &[String], comments: &[String], path: impl AsRef<Path>) -> Result<()> {
        if feature_names.len() != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), got: feature_names.len() });
        }
        let mut file = std::fs::File::create(path)?;
        for c in comments {
            writeln!(file, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(file);
        let mut header: Vec<&str> = feature_names.iter().map(String::as_str).collect();
        header.push("base_value");
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.phi.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.base_value.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a file written by [`ShapMatrix::write_csv`]; the header must
    /// match `feature_names`.
    pub fn read_csv(feature_names: &[String], path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let p = feature_names.len();
        if header.len() != p + 1 || header[..p] != *feature_names || header[p] != "base_value" {
            return Err(Error::Data("SHAP file header does not match the dataset features".into()));
        }
        let mut values = Vec::new();
        let mut base = None;
        let mut n = 0;
        for rec in rdr.records() {
            let rec = rec?;
            let parsed: Vec<f64> = rec
                .iter()
                .map(|c| c.trim().parse::<f64>().map_err(|_| Error::Data(format!("bad SHAP value {c:?}"))))
                .collect::<Result<_>>()?;
            values.extend_from_slice(&parsed[..p]);
            base.get_or_insert(parsed[p]);
            n += 1;
        }
        let base = base.ok_or_else(|| Error::Data("SHAP file has no rows".into()))?;
        Ok(Self::new(DMatrix::from_row_slice(n, p, &values), base, EngineKind::Supplied))
    }
}

/// `I_j = mean_i |phi_ij|`.
pub fn global_scores(phi: &DMatrix<f64>) -> Vec<f64> {
    let n = phi.nrows().max(1) as f64;
    phi.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / n).collect()
}

/// Indices of the `m` largest scores in descending order; equal scores are
/// ordered by ascending index.
pub fn top_m(scores: &[f64], m: usize) -> Result<Vec<usize>> {
    if m < 1 || m > scores.len() {
        return invalid(format!("M must lie in 1..={}, got {m}", scores.len()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(m);
    Ok(idx)
}

/// Coalition values `v(S)` for the masks in `masks` at the point `x`.
fn coalition_values(f: &dyn Predictor, x: &[f64], bg: &Background, masks: &[u64]) -> Result<Vec<f64>> {
    let p = x.len();
    let b_rows: Vec<Vec<f64>> = (0..bg.len()).map(|b| row(&bg.rows, b)).collect();
    let mut buf = vec![0.0; p];
    let mut out = Vec::with_capacity(masks.len());
    for &mask in masks {
        let mut s = 0.0;
        for br in &b_rows {
            for j in 0..p {
                buf[j] = if mask >> j & 1 == 1 { x[j] } else { br[j] };
            }
            s += f.predict(&buf)?;
        }
        out.push(s / b_rows.len() as f64);
    }
    Ok(out)
}

fn check_inputs(f: &dyn Predictor, x_eval: &DMatrix<f64>, bg: &Background) -> Result<usize> {
    let p = f.n_features();
    if x_eval.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, got: x_eval.ncols() });
    }
    if bg.rows.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, got: bg.rows.ncols() });
    }
    if p == 0 {
        return invalid("no features to attribute");
    }
    Ok(p)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn collect_rows(rows: Vec<Vec<f64>>, p: usize) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_row_iterator(n, p, rows.into_iter().flatten())
}

/// Exact Shapley values by enumerating every coalition (`p <= 20`).
pub fn exact_shap(f: &dyn Predictor, x_eval: &DMatrix<f64>, bg: &Background) -> Result<ShapMatrix> {
    let p = check_inputs(f, x_eval, bg)?;
    if p > EXACT_MAX_FEATURES {
        return invalid(format!("exact enumeration supports p <= {EXACT_MAX_FEATURES} (got {p}); use kernel_shap"));
    }
    let n_masks = 1u64 << p;
    let masks: Vec<u64> = (0..n_masks).collect();
    // w(s) = s! (p - s - 1)! / p! = 1 / (p * C(p - 1, s))
    let weights: Vec<f64> = (0..p).map(|s| 1.0 / (p as f64 * binomial(p - 1, s))).collect();
    let rows: Result<Vec<Vec<f64>>> = (0..x_eval.nrows())
        .into_par_iter()
        .map(|i| {
            let x = row(x_eval, i);
            let mut v = coalition_values(f, &x, bg, &masks)?;
            // v(empty) is the base value by definition; reuse it so that the
            // efficiency identity is exact up to the Shapley sum's rounding.
            v[0] = bg.base_value;
            let mut phi = vec![0.0; p];
            for mask in 0..n_masks {
                let size = mask.count_ones() as usize;
                for (j, pj) in phi.iter_mut().enumerate() {
                    if mask >> j & 1 == 0 {
                        *pj += weights[size] * (v[(mask | 1 << j) as usize] - v[mask as usize]);
                    }
                }
            }
            Ok(phi)
        })
        .collect();
    Ok(ShapMatrix::new(collect_rows(rows?, p), bg.base_value, EngineKind::Exact))
}

/// Coalition budget for [`kernel_shap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coalitions {
    /// Every non-trivial coalition (`2^p - 2`).
    All,
    Sampled(usize),
}

/// A weighted set of non-trivial coalitions.
#[derive(Debug, Clone)]
pub struct CoalitionDesign {
    pub masks: Vec<u64>,
    pub weights: Vec<f64>,
}

/// Total Shapley-kernel weight of all coalitions of size `s`:
/// `C(p, s) * (p - 1) / (C(p, s) s (p - s)) = (p - 1) / (s (p - s))`.
fn size_mass(p: usize, s: usize) -> f64 {
    (p - 1) as f64 / (s * (p - s)) as f64
}

fn kernel_weight(p: usize, s: usize) -> f64 {
    size_mass(p, s) / binomial(p, s)
}

fn all_coalitions(p: usize) -> CoalitionDesign {
    let full = (1u64 << p) - 1;
    let masks: Vec<u64> = (1..full).collect();
    let weights = masks.iter().map(|m| kernel_weight(p, m.count_ones() as usize)).collect();
    CoalitionDesign { masks, weights }
}

fn enumerate_size(p: usize, k: usize) -> Vec<u64> {
    let full = (1u64 << p) - 1;
    (1..full).filter(|m| m.count_ones() as usize == k).collect()
}

/// Stratified, complement-paired coalition sample.
///
/// Size classes `{k, p - k}` (k <= p/2) share the budget of `budget / 2`
/// pairs in proportion to their kernel mass. A class whose share covers all
/// of its pairs is enumerated with exact kernel weights (largest mass
/// first); the rest are sampled without replacement and each drawn coalition
/// gets an equal part of its size's mass.
pub fn sample_coalitions(p: usize, budget: usize, seed: u64) -> Result<CoalitionDesign> {
    if p < 2 {
        return invalid("coalition sampling needs p >= 2");
    }
    if p > 62 {
        return invalid("kernel_shap supports at most 62 features");
    }
    let total = (1u64 << p) - 2;
    if budget as u64 >= total {
        return Ok(all_coalitions(p));
    }
    if budget < p + 2 {
        return invalid(format!("n_coalitions must be at least p + 2 = {}", p + 2));
    }
    let full = (1u64 << p) - 1;
    let classes: Vec<usize> = (1..=p / 2).collect();
    let class_mass = |k: usize| if 2 * k == p { size_mass(p, k) } else { 2.0 * size_mass(p, k) };
    let class_pairs = |k: usize| if 2 * k == p { binomial(p, k) / 2.0 } else { binomial(p, k) };

    let mut design = CoalitionDesign { masks: Vec::new(), weights: Vec::new() };
    let mut pairs_left = (budget / 2) as f64;
    let mut open: Vec<usize> = classes.clone();
    loop {
        let mass: f64 = open.iter().map(|&k| class_mass(k)).sum();
        let Some(pos) = open.iter().position(|&k| pairs_left * class_mass(k) / mass >= class_pairs(k)) else {
            break;
        };
        let k = open.remove(pos);
        for m in enumerate_size(p, k) {
            design.masks.push(m);
            design.weights.push(kernel_weight(p, k));
            if 2 * k != p {
                design.masks.push(full ^ m);
                design.weights.push(kernel_weight(p, p - k));
            }
        }
        pairs_left -= class_pairs(k);
        if open.is_empty() {
            break;
        }
    }

    if !open.is_empty() && pairs_left >= 1.0 {
        let mass: f64 = open.iter().map(|&k| class_mass(k)).sum();
        let shares: Vec<f64> = open.iter().map(|&k| pairs_left * class_mass(k) / mass).collect();
        let mut alloc: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
        let mut rest = pairs_left as usize - alloc.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..open.len()).collect();
        order.sort_by(|&a, &b| (shares[b] - shares[b].floor()).total_cmp(&(shares[a] - shares[a].floor())));
        for &c in order.iter().cycle().take(open.len() * 2) {
            if rest == 0 {
                break;
            }
            if (alloc[c] as f64) < class_pairs(open[c]) {
                alloc[c] += 1;
                rest -= 1;
            }
        }
        let mut rng = rng_from_seed(seed);
        for (c, &k) in open.iter().enumerate() {
            if alloc[c] == 0 {
                continue;
            }
            let mut seen: HashSet<u64> = HashSet::new();
            let mut drawn: Vec<u64> = Vec::with_capacity(alloc[c]);
            while drawn.len() < alloc[c] {
                let mut m = 0u64;
                for j in sample(&mut rng, p, k) {
                    m |= 1 << j;
                }
                // Middle-size pairs are unordered; flip a coin so both halves
                // of the pair are equally likely to be listed first.
                if 2 * k == p && rng.random::<bool>() {
                    m ^= full;
                }
                if seen.contains(&m) || seen.contains(&(full ^ m)) {
                    continue;
                }
                seen.insert(m);
                drawn.push(m);
            }
            let per = if 2 * k == p {
                size_mass(p, k) / (2 * drawn.len()) as f64
            } else {
                size_mass(p, k) / drawn.len() as f64
            };
            let per_comp = if 2 * k == p { per } else { size_mass(p, p - k) / drawn.len() as f64 };
            for m in drawn {
                design.masks.push(m);
                design.weights.push(per);
                design.masks.push(full ^ m);
                design.weights.push(per_comp);
            }
        }
    }

    let sizes: HashSet<u32> = design.masks.iter().map(|m| m.count_ones()).collect();
    if sizes.len() < 2 {
        return Err(Error::Degenerate("coalition sample has a single coalition size".into()));
    }
    Ok(design)
}

/// KernelSHAP with the efficiency constraint eliminated exactly.
///
/// With `Coalitions::All` the weighted least-squares solution coincides with
/// the exact Shapley values. `ridge_eps` is added to the diagonal of the
/// reduced normal matrix.
pub fn kernel_shap(
    f: &dyn Predictor,
    x_eval: &DMatrix<f64>,
    bg: &Background,
    coalitions: Coalitions,
    ridge_eps: f64,
    seed: u64,
) -> Result<ShapMatrix> {
    let p = check_inputs(f, x_eval, bg)?;
    if !(ridge_eps >= 0.0) {
        return invalid(format!("ridge_eps must be non-negative, got {ridge_eps}"));
    }
    let full = (1u64 << p.min(63)) - 1;
    if p == 1 {
        let rows: Result<Vec<Vec<f64>>> =
            (0..x_eval.nrows()).map(|i| Ok(vec![f.predict(&row(x_eval, i))? - bg.base_value])).collect();
        return Ok(ShapMatrix::new(collect_rows(rows?, 1), bg.base_value, EngineKind::Kernel));
    }
    let design = match coalitions {
        Coalitions::All => {
            if p > 30 {
                return invalid("enumerating all coalitions is limited to p <= 30");
            }
            all_coalitions(p)
        }
        Coalitions::Sampled(m) => sample_coalitions(p, m, seed)?,
    };

    // Reduced design: phi_last = delta - sum_{j < last} phi_j, so
    // v(z) - v0 - z_last * delta = sum_{j < last} (z_j - z_last) phi_j.
    let q = p - 1;
    let last = q;
    let d = DMatrix::from_fn(design.masks.len(), q, |r, j| {
        let m = design.masks[r];
        (m >> j & 1) as f64 - (m >> last & 1) as f64
    });
    let mut normal = DMatrix::<f64>::zeros(q, q);
    for (r, &w) in design.weights.iter().enumerate() {
        let dr = d.row(r);
        normal += w * dr.transpose() * dr;
    }
    for j in 0..q {
        normal[(j, j)] += ridge_eps;
    }
    let lu = normal.clone().lu();
    if !lu.is_invertible() {
        return Err(Error::Singular("kernel normal matrix is singular; increase n_coalitions or ridge_eps".into()));
    }

    let rows: Result<Vec<Vec<f64>>> = (0..x_eval.nrows())
        .into_par_iter()
        .map(|i| {
            let x = row(x_eval, i);
            let v = coalition_values(f, &x, bg, &design.masks)?;
            let fx = coalition_values(f, &x, bg, &[full])?[0];
            let delta = fx - bg.base_value;
            let mut rhs = DVector::<f64>::zeros(q);
            for (r, &w) in design.weights.iter().enumerate() {
                let zl = (design.masks[r] >> last & 1) as f64;
                let t = v[r] - bg.base_value - zl * delta;
                rhs += w * t * d.row(r).transpose();
            }
            let sol = lu.solve(&rhs).ok_or_else(|| Error::Singular("kernel solve failed".into()))?;
            let mut phi: Vec<f64> = sol.iter().copied().collect();
            phi.push(delta - phi.iter().sum::<f64>());
            Ok(phi)
        })
        .collect();
    Ok(ShapMatrix::new(collect_rows(rows?, p), bg.base_value, EngineKind::Kernel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_gaussian;
    use crate::predictors::{fit_gbt, FnPredictor, GbtConfig, LinearModel};

    fn permutation_oracle(f: &dyn Predictor, x: &[f64], bg: &Background) -> Vec<f64> {
        // Average marginal contribution over all p! orderings.
        fn perms(items: Vec<usize>) -> Vec<Vec<usize>> {
            if items.len() <= 1 {
                return vec![items];
            }
            let mut out = Vec::new();
            for i in 0..items.len() {
                let mut rest = items.clone();
                let head = rest.remove(i);
                for mut tail in perms(rest) {
                    tail.insert(0, head);
                    out.push(tail);
                }
            }
            out
        }
        let p = x.len();
        let value = |mask: u64| -> f64 {
            let mut s = 0.0;
            for b in 0..bg.len() {
                let z: Vec<f64> = (0..p).map(|j| if mask >> j & 1 == 1 { x[j] } else { bg.rows[(b, j)] }).collect();
                s += f.predict(&z).unwrap();
            }
            s / bg.len() as f64
        };
        let all = perms((0..p).collect());
        let mut phi = vec![0.0; p];
        for order in &all {
            let mut mask = 0u64;
            for &j in order {
                let before = value(mask);
                mask |= 1 << j;
                phi[j] += value(mask) - before;
            }
        }
        phi.iter().map(|v| v / all.len() as f64).collect()
    }

    #[test]
    fn linear_closed_form() {
        let ds = synth_gaussian(30, 4, &[1.0, -2.0, 0.5, 3.0], 0.1, 1).unwrap();
        let f = LinearModel { intercept: 0.7, coef: vec![1.0, -2.0, 0.5, 3.0] };
        let bg = Background::sample(&f, &ds.x, 10, 2).unwrap();
        let s = exact_shap(&f, &ds.x, &bg).unwrap();
        for j in 0..4 {
            let bmean = bg.rows.column(j).mean();
            for i in 0..30 {
                assert!((s.phi[(i, j)] - f.coef[j] * (ds.x[(i, j)] - bmean)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn constant_model_has_zero_attributions() {
        let ds = synth_gaussian(10, 3, &[0.0; 3], 1.0, 1).unwrap();
        let f = FnPredictor::new(3, |_| 2.5);
        let bg = Background::new(&f, ds.x.clone()).unwrap();
        let s = exact_shap(&f, &ds.x, &bg).unwrap();
        assert!(s.phi.iter().all(|v| *v == 0.0));
        assert_eq!(s.base_value, 2.5);
    }

    #[test]
    fn exact_matches_permutation_oracle_on_gbt() {
        let ds = synth_gaussian(120, 3, &[1.0, -1.0, 0.5], 0.2, 8).unwrap();
        let y = ds.y.map(|v| v * v.abs());
        let f = fit_gbt(&ds.x, &y, &GbtConfig { n_trees: 30, ..Default::default() }).unwrap();
        let bg = Background::sample(&f, &ds.x, 15, 3).unwrap();
        let x_eval = crate::linalg::select_rows(&ds.x, &[0, 1, 2, 3, 4]);
        let s = exact_shap(&f, &x_eval, &bg).unwrap();
        for i in 0..5 {
            let oracle = permutation_oracle(&f, &row(&x_eval, i), &bg);
            for (j, want) in oracle.iter().enumerate() {
                assert!((s.phi[(i, j)] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn too_many_features_for_exact() {
        let f = FnPredictor::new(21, |_| 0.0);
        let x = DMatrix::zeros(1, 21);
        let bg = Background::new(&f, x.clone()).unwrap();
        assert!(exact_shap(&f, &x, &bg).unwrap_err().to_string().contains("kernel_shap"));
    }

    #[test]
    fn kernel_all_coalitions_equals_exact_on_linear() {
        let ds = synth_gaussian(20, 4, &[1.0, 0.0, -1.0, 2.0], 0.1, 4).unwrap();
        let f = LinearModel { intercept: 0.0, coef: vec![1.0, 0.0, -1.0, 2.0] };
        let bg = Background::sample(&f, &ds.x, 8, 1).unwrap();
        let e = exact_shap(&f, &ds.x, &bg).unwrap();
        let k = kernel_shap(&f, &ds.x, &bg, Coalitions::All, 0.0, 0).unwrap();
        assert!((e.phi - k.phi).amax() < 1e-6);
    }

    #[test]
    fn kernel_single_feature() {
        let f = FnPredictor::new(1, |x| x[0] * x[0]);
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, -3.0]);
        let bg = Background::new(&f, DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        let k = kernel_shap(&f, &x, &bg, Coalitions::Sampled(3), 0.0, 0).unwrap();
        for i in 0..3 {
            assert_eq!(k.phi[(i, 0)], x[(i, 0)] * x[(i, 0)] - 0.5);
        }
    }

    #[test]
    fn kernel_sampled_keeps_efficiency() {
        let ds = synth_gaussian(15, 8, &[1.0; 8], 0.1, 6).unwrap();
        let f = FnPredictor::new(8, |x| x[0] * x[1] * x[2] + x[3].sin() * x[4] * x[5] - 0.5 * x[7] * x[7]);
        let bg = Background::sample(&f, &ds.x, 10, 1).unwrap();
        let a = kernel_shap(&f, &ds.x, &bg, Coalitions::Sampled(40), 0.0, 1).unwrap();
        let b = kernel_shap(&f, &ds.x, &bg, Coalitions::Sampled(40), 0.0, 2).unwrap();
        assert!((a.phi.clone() - b.phi.clone()).amax() > 1e-6);
        assert!(a.efficiency_gap(&f, &ds.x).unwrap() < 1e-8);
        assert!(b.efficiency_gap(&f, &ds.x).unwrap() < 1e-8);
    }

    #[test]
    fn kernel_argument_errors() {
        let f = FnPredictor::new(4, |x| x.iter().sum());
        let x = DMatrix::zeros(1, 4);
        let bg = Background::new(&f, x.clone()).unwrap();
        assert!(kernel_shap(&f, &x, &bg, Coalitions::All, -1.0, 0).is_err());
        assert!(kernel_shap(&f, &x, &bg, Coalitions::Sampled(3), 0.0, 0).is_err());
    }

    #[test]
    fn sampled_design_pairs_complements() {
        let d = sample_coalitions(10, 200, 5).unwrap();
        let set: HashSet<u64> = d.masks.iter().copied().collect();
        assert_eq!(set.len(), d.masks.len());
        let full = (1u64 << 10) - 1;
        assert!(d.masks.iter().all(|m| set.contains(&(full ^ m))));
        // Size-1 and size-9 classes have the largest mass and are enumerated.
        assert_eq!(d.masks.iter().filter(|m| m.count_ones() == 1).count(), 10);
        let mass: f64 = d.weights.iter().sum();
        let expected: f64 = (1..10).map(|s| size_mass(10, s)).sum();
        assert!((mass - expected).abs() < 1e-9);
    }

    #[test]
    fn global_scores_and_top_m() {
        let phi = DMatrix::from_column_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]);
        assert_eq!(global_scores(&phi), vec![1.0, 0.0]);
        assert_eq!(top_m(&[3.0, 1.0, 2.0], 2).unwrap(), vec![0, 2]);
        assert_eq!(top_m(&[3.0, 1.0, 2.0], 3).unwrap().len(), 3);
        assert_eq!(top_m(&[2.0, 2.0, 1.0], 1).unwrap(), vec![0]);
        assert!(top_m(&[1.0], 0).is_err());
        assert!(top_m(&[1.0], 2).is_err());
        let col = DMatrix::from_column_slice(4, 1, &[0.4487, -0.4487, 0.2, -0.6974]);
        assert!((global_scores(&col)[0] - 0.4487).abs() < 1e-12);
    }
}
