//! Black-box predictors.
//!
//! Everything downstream only needs [`Predictor::predict`]; built-in
//! backbones are a ridge/OLS linear model and a small exact-greedy gradient
//! boosted tree ensemble. [`ExternalPredictions`] wraps predictions computed
//! elsewhere and is bound to the rows of one dataset.

use crate::error::{invalid, Error, Result};
use crate::linalg::row;
use crate::rng::rng_from_seed;
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub trait Predictor: Send + Sync {
    fn n_features(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<f64>;
}

/// Applies `f` to every row of `x`. Rows are evaluated in parallel; each
/// output only depends on its own row.
pub fn predict_batch(f: &dyn Predictor, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.nrows() > 0 && x.ncols() != f.n_features() {
        return Err(Error::DimensionMismatch { expected: f.n_features(), got: x.ncols() });
    }
    let out: Result<Vec<f64>> = (0..x.nrows()).into_par_iter().map(|i| f.predict(&row(x, i))).collect();
    Ok(DVector::from_vec(out?))
}

fn check_len(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.len() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl Predictor for LinearModel {
    fn n_features(&self) -> usize {
        self.coef.len()
    }
    fn predict(&self, x: &[f64]) -> Result<f64> {
        check_len(self.coef.len(), x)?;
        Ok(self.intercept + self.coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }
}

/// Minimises `||y - b0 - X b||^2 + ridge * ||b||^2` with the intercept
/// unpenalised (solved on centered data).
pub fn fit_linear(x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<LinearModel> {
    let (n, p) = x.shape();
    if n == 0 {
        return invalid("fit_linear needs at least one row");
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if !(ridge >= 0.0) {
        return invalid(format!("ridge must be non-negative, got {ridge}"));
    }
    let col_means: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let y_mean = y.mean();
    let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - col_means[j]);
    let yc = y.map(|v| v - y_mean);
    let mut gram = xc.transpose() * &xc;
    for j in 0..p {
        gram[(j, j)] += ridge;
    }
    let rhs = xc.transpose() * yc;
    let singular = || Error::Singular("normal equations are singular; use ridge > 0".into());
    let chol = gram.clone().cholesky().ok_or_else(singular)?;
    // Cholesky can succeed on numerically singular Gram matrices; reject those too.
    let diag_max = (0..p).map(|j| gram[(j, j)]).fold(0.0f64, f64::max);
    let pivot_min = chol.l().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if p > 0 && pivot_min * pivot_min <= 1e-13 * diag_max {
        return Err(singular());
    }
    let coef = chol.solve(&rhs);
    let intercept = y_mean - coef.iter().zip(&col_means).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel { intercept, coef: coef.iter().copied().collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    /// Fraction of features considered per tree (1.0 = all).
    pub colsample: f64,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 3, learning_rate: 0.1, min_leaf: 5, colsample: 1.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// Regression tree stored as a flat node arena; node 0 is the root.
/// Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, at: usize) -> usize {
            match t.nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub n_features: usize,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    pub config: GbtConfig,
    /// Training MSE after each boosting round (index 0 = base score only).
    pub train_loss: Vec<f64>,
}

impl Predictor for GbtModel {
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn predict(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n_features, x)?;
        Ok(self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>())
    }
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best variance-reduction split of `rows` over `features`, scanning the
/// midpoints between consecutive sorted unique values. Earlier features and
/// smaller thresholds win exact ties.
fn best_split(
    x: &DMatrix<f64>,
    r: &[f64],
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let total: f64 = rows.iter().map(|&i| r[i]).sum();
    let parent = total * total / n as f64;
    let mut best: Option<SplitChoice> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += r[order[k]];
            let nl = k + 1;
            let nr = n - nl;
            let (lo, hi) = (x[(order[k], f)], x[(order[k + 1], f)]);
            if lo == hi || nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - parent;
            if gain > 1e-12 * (1.0 + parent.abs()) && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice { feature: f, threshold: 0.5 * (lo + hi), gain });
            }
        }
    }
    best
}

fn grow(
    x: &DMatrix<f64>,
    r: &[f64],
    rows: Vec<usize>,
    features: &[usize],
    depth_left: usize,
    min_leaf: usize,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let id = nodes.len();
    let leaf_value = rows.iter().map(|&i| r[i]).sum::<f64>() / rows.len().max(1) as f64;
    nodes.push(TreeNode::Leaf { value: leaf_value });
    if depth_left == 0 {
        return id;
    }
    if let Some(s) = best_split(x, r, &rows, features, min_leaf) {
        let (l, rr): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[(i, s.feature)] <= s.threshold);
        let left = grow(x, r, l, features, depth_left - 1, min_leaf, nodes);
        let right = grow(x, r, rr, features, depth_left - 1, min_leaf, nodes);
        nodes[id] = TreeNode::Split { feature: s.feature, threshold: s.threshold, left, right };
    }
    id
}

/// Least-squares gradient boosting: each tree is fitted to the current
/// residuals and its leaves hold residual means over all rows in the leaf,
/// so the training loss cannot increase for `learning_rate` in (0, 2).
pub fn fit_gbt(x: &DMatrix<f64>, y: &DVector<f64>, config: &GbtConfig) -> Result<GbtModel> {
    let (n, p) = x.shape();
    if config.n_trees < 1 || config.max_depth < 1 {
        return invalid("n_trees and max_depth must both be at least 1");
    }
    if !(config.learning_rate > 0.0) {
        return invalid("learning_rate must be positive");
    }
    if !(config.colsample > 0.0 && config.colsample <= 1.0) {
        return invalid("colsample must lie in (0, 1]");
    }
    if config.min_leaf < 1 || n < 2 * config.min_leaf {
        return invalid(format!("need n >= 2 * min_leaf (n = {n}, min_leaf = {})", config.min_leaf));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    let base_score = y.mean();
    let mut pred = vec![base_score; n];
    let mse = |pred: &[f64]| y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
    let mut train_loss = vec![mse(&pred)];
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut rng = rng_from_seed(config.seed);
    let n_cols = ((config.colsample * p as f64).ceil() as usize).clamp(1, p);
    for _ in 0..config.n_trees {
        let features: Vec<usize> = if n_cols == p {
            (0..p).collect()
        } else {
            let mut f = sample(&mut rng, p, n_cols).into_vec();
            f.sort_unstable();
            f
        };
        let residual: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let mut nodes = Vec::new();
        grow(x, &residual, (0..n).collect(), &features, config.max_depth, config.min_leaf, &mut nodes);
        let tree = RegressionTree { nodes };
        for (i, pi) in pred.iter_mut().enumerate() {
            *pi += config.learning_rate * tree.predict(&row(x, i));
        }
        train_loss.push(mse(&pred));
        trees.push(tree);
    }
    Ok(GbtModel { n_features: p, base_score, learning_rate: config.learning_rate, trees, config: config.clone(), train_loss })
}

/// Serializable built-in model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Backbone {
    Linear(LinearModel),
    Gbt(GbtModel),
}

/// Version tag written by [`Backbone::save_json`].
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: Backbone,
}

impl Backbone {
    /// Writes `{"format": "phitest-model", "version": 1, "model": {...}}`.
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = ModelFile { format: "phitest-model".into(), version: MODEL_FORMAT_VERSION, model: self.clone() };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.format != "phitest-model" || file.version != MODEL_FORMAT_VERSION {
            return invalid(format!("unsupported model file {} v{}", file.format, file.version));
        }
        Ok(file.model)
    }
}

impl Predictor for Backbone {
    fn n_features(&self) -> usize {
        match self {
            Backbone::Linear(m) => m.n_features(),
            Backbone::Gbt(m) => m.n_features(),
        }
    }
    fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            Backbone::Linear(m) => m.predict(x),
            Backbone::Gbt(m) => m.predict(x),
        }
    }
}

/// How to obtain a backbone: train a built-in model or read external
/// predictions.
///
/// Text form: `linear`, `gbt`, `gbt:trees=100,depth=3,lr=0.1,min_leaf=5,colsample=1`
/// (any subset of keys) or `external:<path>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackboneSpec {
    Linear,
    Gbt(GbtConfig),
    External { path: PathBuf },
}

impl BackboneSpec {
    pub fn is_external(&self) -> bool {
        matches!(self, BackboneSpec::External { .. })
    }

    /// Trains the backbone on `(x, y)`; `seed` drives any randomness of the
    /// fit.
    pub fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>, seed: u64) -> Result<Backbone> {
        match self {
            BackboneSpec::Linear => Ok(Backbone::Linear(fit_linear(x, y, 0.0)?)),
            BackboneSpec::Gbt(cfg) => Ok(Backbone::Gbt(fit_gbt(x, y, &GbtConfig { seed, ..cfg.clone() })?)),
            BackboneSpec::External { .. } => invalid("external predictions cannot be trained"),
        }
    }
}

impl fmt::Display for BackboneSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackboneSpec::Linear => f.write_str("linear"),
            BackboneSpec::Gbt(c) if *c == GbtConfig { seed: c.seed, ..GbtConfig::default() } => f.write_str("gbt"),
            BackboneSpec::Gbt(c) => write!(
                f,
                "gbt:trees={},depth={},lr={},min_leaf={},colsample={}",
                c.n_trees, c.max_depth, c.learning_rate, c.min_leaf, c.colsample
            ),
            BackboneSpec::External { path } => write!(f, "external:{}", path.display()),
        }
    }
}

impl FromStr for BackboneSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "linear" {
            return Ok(BackboneSpec::Linear);
        }
        if s == "gbt" {
            return Ok(BackboneSpec::Gbt(GbtConfig::default()));
        }
        if let Some(path) = s.strip_prefix("external:") {
            if path.is_empty() {
                return invalid("external backbone needs a path");
            }
            return Ok(BackboneSpec::External { path: PathBuf::from(path) });
        }
        let Some(opts) = s.strip_prefix("gbt:") else {
            return invalid(format!("unknown backbone {s:?} (expected linear|gbt|gbt:<options>|external:<path>)"));
        };
        let mut cfg = GbtConfig::default();
        for kv in opts.split(',').filter(|t| !t.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("gbt option {kv:?} is not key=value")))?;
            let bad = || Error::InvalidInput(format!("bad value for gbt option {k}: {v:?}"));
            match k.trim() {
                "trees" => cfg.n_trees = v.trim().parse().map_err(|_| bad())?,
                "depth" => cfg.max_depth = v.trim().parse().map_err(|_| bad())?,
                "lr" => cfg.learning_rate = v.trim().parse().map_err(|_| bad())?,
                "min_leaf" => cfg.min_leaf = v.trim().parse().map_err(|_| bad())?,
                "colsample" => cfg.colsample = v.trim().parse().map_err(|_| bad())?,
                other => return invalid(format!("unknown gbt option {other:?}")),
            }
        }
        Ok(BackboneSpec::Gbt(cfg))
    }
}

/// Predictions read from a `row_index,prediction` CSV.
///
/// Only usable by row index until [`ExternalPredictions::bind`] attaches the
/// dataset rows; after that, `predict` answers for exact dataset rows and
/// fails for any other vector.
#[derive(Debug, Clone, Default)]
pub struct ExternalPredictions {
    values: BTreeMap<usize, f64>,
    n_features: usize,
    lookup: HashMap<Vec<u64>, usize>,
}

fn row_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }).collect()
}

impl ExternalPredictions {
    pub fn from_map(values: BTreeMap<usize, f64>) -> Self {
        Self { values, ..Default::default() }
    }

    pub fn value_at(&self, row: usize) -> Result<f64> {
        self.values.get(&row).copied().ok_or(Error::MissingPrediction(row))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Attaches the rows of `x` so that vector queries can be mapped back to
    /// row indices (first occurrence wins for duplicated rows).
    pub fn bind(mut self, x: &DMatrix<f64>) -> Self {
        self.n_features = x.ncols();
        self.lookup.clear();
        for i in (0..x.nrows()).rev() {
            self.lookup.insert(row_key(&row(x, i)), i);
        }
        self
    }
}

impl Predictor for ExternalPredictions {
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn predict(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n_features, x)?;
        let i = *self.lookup.get(&row_key(x)).ok_or(Error::UnboundQuery)?;
        self.value_at(i)
    }
}

pub fn external_predictor(path: impl AsRef<Path>) -> Result<ExternalPredictions> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut values = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return invalid("external predictions need exactly two columns: row_index,prediction");
        }
        let idx: usize = rec[0].trim().parse().map_err(|_| Error::Data(format!("bad row index {:?}", &rec[0])))?;
        let v: f64 = rec[1].trim().parse().map_err(|_| Error::Data(format!("bad prediction {:?}", &rec[1])))?;
        if !v.is_finite() {
            return Err(Error::Data(format!("non-finite prediction for row {idx}")));
        }
        values.insert(idx, v);
    }
    Ok(ExternalPredictions::from_map(values))
}

/// Writes `row_index,prediction` for every row of `x`.
pub fn export_predictions(f: &dyn Predictor, x: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let preds = predict_batch(f, x)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row_index", "prediction"])?;
    for (i, v) in preds.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Adapter turning a closure into a predictor.
pub struct FnPredictor<F> {
    n_features: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnPredictor<F> {
    pub fn new(n_features: usize, f: F) -> Self {
        Self { n_features, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Predictor for FnPredictor<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn predict(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n_features, x)?;
        Ok((self.f)(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_gaussian;

    #[test]
    fn linear_exact_line() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let m = fit_linear(&x, &DVector::from_vec(vec![2.0, 4.0, 6.0]), 0.0).unwrap();
        assert!(m.intercept.abs() < 1e-10 && (m.coef[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn linear_constant_target() {
        let ds = synth_gaussian(20, 3, &[0.0; 3], 0.0, 1).unwrap();
        let m = fit_linear(&ds.x, &DVector::from_element(20, 4.5), 0.0).unwrap();
        assert!(m.coef.iter().all(|b| b.abs() < 1e-12));
        assert!((m.intercept - 4.5).abs() < 1e-12);
    }

    #[test]
    fn linear_residuals_orthogonal() {
        let ds = synth_gaussian(100, 3, &[1.0, -2.0, 0.5], 1.0, 5).unwrap();
        let m = fit_linear(&ds.x, &ds.y, 0.0).unwrap();
        let pred = predict_batch(&m, &ds.x).unwrap();
        let res = &ds.y - pred;
        assert!(res.sum().abs() < 1e-8);
        for c in ds.x.column_iter() {
            assert!(c.dot(&res).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_singular_needs_ridge() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let err = fit_linear(&x, &y, 0.0).unwrap_err();
        assert!(err.to_string().contains("ridge"));
        assert!(fit_linear(&x, &y, 0.1).is_ok());
    }

    #[test]
    fn predict_batch_examples() {
        let m = LinearModel { intercept: 0.5, coef: vec![1.0, 1.0] };
        let out = predict_batch(&m, &DMatrix::from_row_slice(1, 2, &[1.0, 2.0])).unwrap();
        assert_eq!(out[0], 3.5);
        assert_eq!(predict_batch(&m, &DMatrix::zeros(0, 2)).unwrap().len(), 0);
        assert!(predict_batch(&m, &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn gbt_constant_target() {
        let ds = synth_gaussian(40, 2, &[0.0, 0.0], 0.0, 2).unwrap();
        let y = DVector::from_element(40, 3.0);
        let m = fit_gbt(&ds.x, &y, &GbtConfig::default()).unwrap();
        for i in 0..40 {
            assert!((m.predict(&row(&ds.x, i)).unwrap() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gbt_step_split_threshold_in_gap() {
        let xs: Vec<f64> = (0..100).map(|i| if i < 50 { -1.0 - i as f64 * 0.01 } else { 0.5 + i as f64 * 0.01 }).collect();
        let y: Vec<f64> = xs.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        let cfg = GbtConfig { n_trees: 1, max_depth: 1, learning_rate: 1.0, min_leaf: 5, ..Default::default() };
        let m = fit_gbt(&DMatrix::from_column_slice(100, 1, &xs), &DVector::from_vec(y), &cfg).unwrap();
        // Candidate thresholds are midpoints of consecutive unique values;
        // the only zero-error one lies between -1.0 and 1.0.
        match m.trees[0].nodes[0] {
            TreeNode::Split { threshold, .. } => assert!(threshold > -1.0 && threshold < 1.0, "{threshold}"),
            _ => panic!("expected a split"),
        }
        assert!(*m.train_loss.last().unwrap() < 1e-20);
    }

    #[test]
    fn gbt_loss_monotone() {
        let ds = synth_gaussian(200, 4, &[1.0, -1.0, 0.5, 0.0], 0.3, 9).unwrap();
        let y = ds.y.map(|v| v + (2.0 * v).sin());
        let m = fit_gbt(&ds.x, &y, &GbtConfig { n_trees: 50, colsample: 0.5, seed: 3, ..Default::default() }).unwrap();
        for w in m.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(m.train_loss[50] <= m.train_loss[1]);
        assert!(m.trees.iter().all(|t| t.depth() <= 3));
    }

    #[test]
    fn gbt_config_errors() {
        let ds = synth_gaussian(20, 2, &[1.0, 0.0], 0.1, 2).unwrap();
        for cfg in [
            GbtConfig { n_trees: 0, ..Default::default() },
            GbtConfig { max_depth: 0, ..Default::default() },
            GbtConfig { min_leaf: 11, ..Default::default() },
        ] {
            assert!(fit_gbt(&ds.x, &ds.y, &cfg).is_err());
        }
    }

    #[test]
    fn gbt_batch_matches_rows_and_roundtrips() {
        let ds = synth_gaussian(80, 3, &[1.0, 2.0, 0.0], 0.5, 4).unwrap();
        let m = Backbone::Gbt(fit_gbt(&ds.x, &ds.y, &GbtConfig { n_trees: 20, ..Default::default() }).unwrap());
        let batch = predict_batch(&m, &ds.x).unwrap();
        for i in 0..80 {
            assert_eq!(batch[i], m.predict(&row(&ds.x, i)).unwrap());
        }
        assert_eq!(batch, predict_batch(&m, &ds.x).unwrap());
        let f = tempfile::NamedTempFile::new().unwrap();
        m.save_json(f.path()).unwrap();
        assert_eq!(Backbone::load_json(f.path()).unwrap(), m);
    }

    #[test]
    fn external_lookup() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        use std::io::Write;
        writeln!(f, "row_index,prediction\n0,1.5\n1,2.5").unwrap();
        let ext = external_predictor(f.path()).unwrap();
        assert_eq!(ext.value_at(1).unwrap(), 2.5);
        assert!(matches!(ext.value_at(2), Err(Error::MissingPrediction(2))));
        let x = DMatrix::from_row_slice(2, 1, &[10.0, 20.0]);
        let bound = ext.bind(&x);
        assert_eq!(bound.predict(&[20.0]).unwrap(), 2.5);
        assert!(matches!(bound.predict(&[15.0]), Err(Error::UnboundQuery)));
    }

    #[test]
    fn backbone_spec_parsing() {
        assert_eq!("linear".parse::<BackboneSpec>().unwrap(), BackboneSpec::Linear);
        assert_eq!("gbt".parse::<BackboneSpec>().unwrap(), BackboneSpec::Gbt(GbtConfig::default()));
        let s: BackboneSpec = "gbt:depth=2,colsample=0.8".parse().unwrap();
        let BackboneSpec::Gbt(c) = &s else { panic!() };
        assert_eq!((c.max_depth, c.colsample, c.n_trees), (2, 0.8, 100));
        assert_eq!(s.to_string().parse::<BackboneSpec>().unwrap(), s);
        assert!("external:".parse::<BackboneSpec>().is_err());
        assert!("gbt:depth".parse::<BackboneSpec>().is_err());
        assert!("mlp".parse::<BackboneSpec>().is_err());
        let e: BackboneSpec = "external:preds.csv".parse().unwrap();
        assert!(e.is_external());
        assert_eq!(e.to_string(), "external:preds.csv");
    }
}
