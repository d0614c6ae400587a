//! The three-stage procedure, the Shapley-based baselines and the metrics
//! used to compare feature selections.
//!
//! [`phi_test`] screens features by global SHAP score, selects a linear
//! surrogate for the black-box predictions among the screened features and
//! attaches inference to the selected coefficients. The baselines consume
//! the same attribution matrix. [`evaluate_methods`] reruns everything over
//! replicated train/test splits to compute fidelity, sparsity, stability and
//! robustness.

use crate::data::{make_split, Dataset, SplitPlan};
use crate::error::{invalid, Error, Result};
use crate::linalg::{r_squared, select_columns, select_entries, select_rows, standardize_columns};
use crate::predictors::{fit_linear, predict_batch, Backbone, BackboneSpec, GbtConfig, Predictor};
use crate::rng::{derive_seed, rng_from_seed, STREAM_BACKBONE, STREAM_BACKGROUND, STREAM_BOOTSTRAP, STREAM_KERNEL, STREAM_REPLICATE};
use crate::selection::{
    first_entries, lars_first_k, lars_lasso_path, lasso_fixed_lambda, stepwise_first_k, SelectionOutcome, Selector,
};
use crate::selinf::{naive_inference, ndtr, split_t_inference, truncated_inference, SelectiveSummary};
use crate::shap::{exact_shap, kernel_shap, top_m, Background, Coalitions, EngineKind, ShapMatrix, EXACT_MAX_FEATURES};
use crate::TOOL_VERSION;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use std::fmt;
use std::str::FromStr;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_SHAP_ROWS: usize = 200;
pub const DEFAULT_KERNEL_COALITIONS: usize = 2048;

/// Screening size used when none is given: 7 for up to nine features, 10
/// otherwise (never more than `p`).
pub fn default_m(p: usize) -> usize {
    (if p <= 9 { 7 } else { 10 }).min(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Selection and truncated-normal inference on the whole training split.
    Full,
    /// Selection on one half of the training split, t inference on the other.
    Split,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(Mode::Full),
            "split" => Ok(Mode::Split),
            other => invalid(format!("unknown mode {other:?} (expected full|split)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::Split => "split",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    Exact,
    Kernel,
}

impl FromStr for EngineChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(EngineChoice::Exact),
            "kernel" => Ok(EngineChoice::Kernel),
            other => invalid(format!("unknown engine {other:?} (expected exact|kernel)")),
        }
    }
}

impl fmt::Display for EngineChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineChoice::Exact => "exact",
            EngineChoice::Kernel => "kernel",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiTestConfig {
    /// Number of features kept by screening.
    pub m: usize,
    /// Number of features selected by LARS or stepwise (ignored by the
    /// fixed-penalty lasso).
    pub k: usize,
    pub selector: Selector,
    pub engine: EngineChoice,
    pub alpha: f64,
    pub mode: Mode,
    pub background_size: usize,
    /// Cap on the number of rows whose attributions are computed.
    pub shap_rows: Option<usize>,
    pub kernel_coalitions: usize,
    pub seed: u64,
}

impl PhiTestConfig {
    /// Defaults for a dataset with `p` features: split-sample LARS with
    /// `K = 5` and the default screening size.
    pub fn for_features(p: usize) -> Self {
        let m = default_m(p);
        Self {
            m,
            k: DEFAULT_K.min(m),
            selector: Selector::Lars,
            engine: if p <= 12 { EngineChoice::Exact } else { EngineChoice::Kernel },
            alpha: DEFAULT_ALPHA,
            mode: Mode::Split,
            background_size: crate::shap::DEFAULT_BACKGROUND_SIZE,
            shap_rows: Some(DEFAULT_SHAP_ROWS),
            kernel_coalitions: DEFAULT_KERNEL_COALITIONS,
            seed: 0,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.m < 1 || self.m > p {
            return invalid(format!("M must lie in 1..={p}, got {}", self.m));
        }
        if self.k > self.m {
            return invalid(format!("K = {} exceeds M = {}", self.k, self.m));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return invalid(format!("alpha must lie in (0, 0.5], got {}", self.alpha));
        }
        if self.background_size == 0 {
            return invalid("background size must be positive");
        }
        if self.shap_rows == Some(0) {
            return invalid("shap_rows must be positive");
        }
        if self.mode == Mode::Full && !self.selector.has_polyhedron() {
            return invalid(
                "selector lars has no polyhedral selection event, so full-sample inference is unavailable; \
                 use mode split or a stepwise/lasso selector",
            );
        }
        if self.engine == EngineChoice::Exact && p > EXACT_MAX_FEATURES {
            return invalid(format!("exact SHAP supports at most {EXACT_MAX_FEATURES} features; use the kernel engine"));
        }
        Ok(())
    }
}

/// Attributions for the rows of `x` (capped and subsampled per `cfg`).
pub fn compute_shap(f: &dyn Predictor, x: &DMatrix<f64>, cfg: &PhiTestConfig) -> Result<ShapMatrix> {
    let n = x.nrows();
    let eval = match cfg.shap_rows {
        Some(cap) if n > cap => {
            let mut idx = rand::seq::index::sample(&mut rng_from_seed(derive_seed(cfg.seed, STREAM_BACKGROUND, 1)), n, cap)
                .into_vec();
            idx.sort_unstable();
            select_rows(x, &idx)
        }
        _ => x.clone(),
    };
    let bg = Background::sample(f, x, cfg.background_size, derive_seed(cfg.seed, STREAM_BACKGROUND, 0))?;
    match cfg.engine {
        EngineChoice::Exact => exact_shap(f, &eval, &bg),
        EngineChoice::Kernel => kernel_shap(
            f,
            &eval,
            &bg,
            Coalitions::Sampled(cfg.kernel_coalitions),
            0.0,
            derive_seed(cfg.seed, STREAM_KERNEL, 0),
        ),
    }
}

/// Top-`m` features by score, returned as an ascending index set.
pub fn screen(scores: &[f64], m: usize) -> Result<Vec<usize>> {
    let mut s = top_m(scores, m)?;
    s.sort_unstable();
    Ok(s)
}

/// Surrogate selection restricted to the screened columns.
#[derive(Debug, Clone)]
pub struct SurrogateFit {
    pub screened: Vec<usize>,
    pub outcome: SelectionOutcome,
    /// Selected features as indices into the full feature list, in the
    /// selection procedure's order.
    pub selected: Vec<usize>,
}

pub fn surrogate_select(
    x: &DMatrix<f64>,
    y_sur: &DVector<f64>,
    screened: &[usize],
    selector: Selector,
    k: usize,
) -> Result<SurrogateFit> {
    let xs = select_columns(x, screened);
    let outcome = match selector {
        Selector::Lars => lars_first_k(&xs, y_sur, k, true)?,
        Selector::Stepwise => stepwise_first_k(&xs, y_sur, k)?,
        Selector::Lasso(lambda) => lasso_fixed_lambda(&xs, y_sur, lambda)?,
    };
    let selected = outcome.selected.iter().map(|&c| screened[c]).collect();
    Ok(SurrogateFit { screened: screened.to_vec(), outcome, selected })
}

fn selection_rows(split: &SplitPlan, mode: Mode) -> Result<&[usize]> {
    match mode {
        Mode::Split if !split.is_split_sample() => invalid("split mode needs a split plan with selection and inference halves"),
        Mode::Split => Ok(&split.selection_idx),
        Mode::Full => Ok(&split.train_idx),
    }
}

/// Stages 1 and 2: attributions on the selection rows (or the supplied
/// matrix), screening, and surrogate selection.
pub fn phi_selection(
    f: &dyn Predictor,
    data: &Dataset,
    split: &SplitPlan,
    cfg: &PhiTestConfig,
    shap: &ShapMatrix,
) -> Result<SurrogateFit> {
    let p = data.n_features();
    if shap.n_features() != p {
        return Err(Error::DimensionMismatch { expected: p, got: shap.n_features() });
    }
    let rows = selection_rows(split, cfg.mode)?;
    let x_sel = select_rows(&data.x, rows);
    let y_sur = predict_batch(f, &x_sel)?;
    let screened = screen(&shap.global_scores, cfg.m)?;
    surrogate_select(&x_sel, &y_sur, &screened, cfg.selector, cfg.k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub index: usize,
    pub name: String,
    /// Global SHAP score `mean_i |phi_ij|`.
    pub shap: f64,
    pub screened: bool,
    pub selected: bool,
    pub inference: Option<SelectiveSummary>,
    /// Same-data t inference, attached in split mode for comparison.
    pub naive: Option<SelectiveSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: u64,
    pub selector: Selector,
    pub m: usize,
    pub k: usize,
    pub engine: EngineKind,
    pub shap_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub dataset: String,
    pub target: String,
    /// One row per feature, in dataset column order.
    pub rows: Vec<FeatureRow>,
    /// Selected features in selection order.
    pub selected: Vec<usize>,
    pub screened: Vec<usize>,
    /// Total SHAP score of the unselected features.
    pub residual_shap: f64,
    pub mode: Mode,
    pub alpha: f64,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

impl FeatureTable {
    /// Selected features in ascending index order.
    pub fn selected_set(&self) -> Vec<usize> {
        let mut s = self.selected.clone();
        s.sort_unstable();
        s
    }

    /// Row indices for display: selected features by descending SHAP score,
    /// then the rest by descending SHAP score (ties by index).
    pub fn display_order(&self) -> (Vec<usize>, Vec<usize>) {
        let by_score = |a: &usize, b: &usize| self.rows[*b].shap.total_cmp(&self.rows[*a].shap).then(a.cmp(b));
        let mut sel: Vec<usize> = (0..self.rows.len()).filter(|&j| self.rows[j].selected).collect();
        let mut rest: Vec<usize> = (0..self.rows.len()).filter(|&j| !self.rows[j].selected).collect();
        sel.sort_by(by_score);
        rest.sort_by(by_score);
        (sel, rest)
    }
}

/// Runs the whole procedure. `supplied_shap` replaces the attribution step
/// (needed for predictors that cannot be evaluated off the dataset rows).
pub fn phi_test(
    f: &dyn Predictor,
    data: &Dataset,
    split: &SplitPlan,
    cfg: &PhiTestConfig,
    supplied_shap: Option<&ShapMatrix>,
) -> Result<FeatureTable> {
    let p = data.n_features();
    cfg.validate(p)?;
    if f.n_features() != p {
        return Err(Error::DimensionMismatch { expected: p, got: f.n_features() });
    }
    let rows = selection_rows(split, cfg.mode)?;
    let computed;
    let shap = match supplied_shap {
        Some(s) => s,
        None => {
            computed = compute_shap(f, &select_rows(&data.x, rows), cfg)?;
            &computed
        }
    };
    let fit = phi_selection(f, data, split, cfg, shap)?;
    let selected = fit.selected.clone();

    let mut inference: Vec<SelectiveSummary> = Vec::new();
    let mut naive: Vec<SelectiveSummary> = Vec::new();
    if !selected.is_empty() {
        match cfg.mode {
            Mode::Full => {
                let y_sur = predict_batch(f, &select_rows(&data.x, rows))?;
                inference = truncated_inference(&fit.outcome, &y_sur, cfg.alpha)?;
            }
            Mode::Split => {
                let x_inf = select_rows(&data.x, &split.inference_idx);
                let y_inf = predict_batch(f, &x_inf)?;
                inference = split_t_inference(&select_columns(&x_inf, &selected), &y_inf, cfg.alpha)?;
                let x_tr = select_rows(&data.x, &split.train_idx);
                let y_tr = predict_batch(f, &x_tr)?;
                naive = naive_inference(&select_columns(&x_tr, &selected), &y_tr, cfg.alpha)?;
            }
        }
    }

    let scores = &shap.global_scores;
    let mut table_rows: Vec<FeatureRow> = (0..p)
        .map(|j| FeatureRow {
            index: j,
            name: data.feature_names[j].clone(),
            shap: scores[j],
            screened: fit.screened.contains(&j),
            selected: false,
            inference: None,
            naive: None,
        })
        .collect();
    for (pos, &j) in selected.iter().enumerate() {
        let row = &mut table_rows[j];
        row.selected = true;
        row.inference = inference.get(pos).cloned();
        row.naive = naive.get(pos).cloned();
    }
    let residual_shap = (0..p).filter(|j| !selected.contains(j)).map(|j| scores[j]).sum();

    Ok(FeatureTable {
        dataset: data.name.clone(),
        target: data.target_name.clone(),
        rows: table_rows,
        selected,
        screened: fit.screened,
        residual_shap,
        mode: cfg.mode,
        alpha: cfg.alpha,
        provenance: Provenance {
            tool_version: TOOL_VERSION.to_string(),
            seed: cfg.seed,
            selector: cfg.selector,
            m: cfg.m,
            k: cfg.k,
            engine: shap.engine,
            shap_rows: shap.n_rows(),
        },
        warnings: fit.outcome.warnings,
    })
}

/// The `k` features with the largest global scores.
pub fn baseline_topk(shap: &ShapMatrix, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    screen(&shap.global_scores, k)
}

fn abs_matrix(shap: &ShapMatrix) -> DMatrix<f64> {
    shap.phi.map(f64::abs)
}

/// Global scores of a bootstrap resample of the rows.
fn resampled_scores(abs: &DMatrix<f64>, seed: u64) -> Vec<f64> {
    let (n, p) = abs.shape();
    let mut rng = rng_from_seed(seed);
    let mut sums = vec![0.0; p];
    for _ in 0..n {
        let i = rng.random_range(0..n);
        for (j, s) in sums.iter_mut().enumerate() {
            *s += abs[(i, j)];
        }
    }
    sums.iter().map(|s| s / n as f64).collect()
}

/// Bootstrap significance of the global scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapImportance {
    pub scores: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// One-sided normal-approximation p-values of `score / std_error`.
    pub p_values: Vec<f64>,
    pub selected: Vec<usize>,
}

/// Features whose bootstrap interval for `I_j` excludes zero: rows of the
/// attribution matrix are resampled `b` times and `I_j / SE_j` is referred to
/// the standard normal.
pub fn spvim_boot(shap: &ShapMatrix, b: usize, level: f64, seed: u64) -> Result<BootstrapImportance> {
    if b < 100 {
        return invalid(format!("SPVIM bootstrap needs B >= 100, got {b}"));
    }
    if !(level > 0.0 && level < 1.0) {
        return invalid(format!("level must lie in (0, 1), got {level}"));
    }
    if shap.n_rows() == 0 {
        return invalid("attribution matrix has no rows");
    }
    let abs = abs_matrix(shap);
    let sub = derive_seed(seed, STREAM_BOOTSTRAP, 0);
    let draws: Vec<Vec<f64>> =
        (0..b).into_par_iter().map(|r| resampled_scores(&abs, derive_seed(sub, STREAM_REPLICATE, r as u64))).collect();
    let p = shap.n_features();
    let scores = shap.global_scores.clone();
    let mut std_errors = vec![0.0; p];
    let mut p_values = vec![1.0; p];
    for j in 0..p {
        let mean = draws.iter().map(|d| d[j]).sum::<f64>() / b as f64;
        let var = draws.iter().map(|d| (d[j] - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
        std_errors[j] = var.sqrt();
        p_values[j] = if std_errors[j] > 0.0 {
            ndtr(-scores[j] / std_errors[j])
        } else if scores[j] > 0.0 {
            0.0
        } else {
            1.0
        };
    }
    let selected = (0..p).filter(|&j| p_values[j] < level).collect();
    Ok(BootstrapImportance { scores, std_errors, p_values, selected })
}

pub fn baseline_spvim_boot(shap: &ShapMatrix, b: usize, level: f64, seed: u64) -> Result<Vec<usize>> {
    Ok(spvim_boot(shap, b, level, seed)?.selected)
}

/// Two-sided one-sample t-test p-values of `mean_i phi_ij = 0`.
pub fn shap_ht_p_values(shap: &ShapMatrix) -> Result<Vec<f64>> {
    let n = shap.n_rows();
    if n < 3 {
        return invalid(format!("SHAP-HT needs at least 3 rows, got {n}"));
    }
    let df = (n - 1) as f64;
    Ok(shap
        .phi
        .column_iter()
        .map(|col| {
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / df;
            if var <= 0.0 {
                return if mean != 0.0 { 0.0 } else { 1.0 };
            }
            let t = mean / (var / n as f64).sqrt();
            beta_reg(0.5 * df, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
        })
        .collect())
}

/// Features whose signed mean attribution differs from zero after a
/// Bonferroni correction over all features.
pub fn baseline_shap_ht(shap: &ShapMatrix, level: f64) -> Result<Vec<usize>> {
    if !(level > 0.0 && level < 1.0) {
        return invalid(format!("level must lie in (0, 1), got {level}"));
    }
    let p = shap.n_features();
    let ps = shap_ht_p_values(shap)?;
    Ok((0..p).filter(|&j| ps[j] < level / p as f64).collect())
}

/// Appearance frequency of each feature in the top-`k` sets of `b`
/// bootstrap resamples of the attribution rows.
pub fn stable_shap_frequencies(shap: &ShapMatrix, k: usize, b: usize, seed: u64) -> Result<Vec<f64>> {
    if b == 0 {
        return invalid("StableSHAP needs at least one resample");
    }
    if k > shap.n_features() {
        return invalid(format!("K = {k} exceeds the {} features", shap.n_features()));
    }
    if shap.n_rows() == 0 {
        return invalid("attribution matrix has no rows");
    }
    let p = shap.n_features();
    if k == 0 {
        return Ok(vec![0.0; p]);
    }
    let abs = abs_matrix(shap);
    let sub = derive_seed(seed, STREAM_BOOTSTRAP, 1);
    let sets: Vec<Vec<usize>> = (0..b)
        .into_par_iter()
        .map(|r| top_m(&resampled_scores(&abs, derive_seed(sub, STREAM_REPLICATE, r as u64)), k))
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; p];
    for s in &sets {
        for &j in s {
            counts[j] += 1;
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / b as f64).collect())
}

pub fn baseline_stable_shap(shap: &ShapMatrix, k: usize, b: usize, threshold: f64, seed: u64) -> Result<Vec<usize>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return invalid(format!("frequency threshold must lie in (0, 1], got {threshold}"));
    }
    let freq = stable_shap_frequencies(shap, k, b, seed)?;
    Ok((0..freq.len()).filter(|&j| freq[j] >= threshold).collect())
}

/// Intersection and union sizes, with two empty sets counted as `(1, 1)`.
fn jaccard_ratio(a: &[usize], b: &[usize]) -> (u128, u128) {
    let inter = a.iter().filter(|j| b.contains(j)).count();
    let union = a.len() + b.iter().filter(|j| !a.contains(j)).count();
    if union == 0 {
        (1, 1)
    } else {
        (inter as u128, union as u128)
    }
}

/// `|a & b| / |a | b|`, with two empty sets counting as identical.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let (num, den) = jaccard_ratio(a, b);
    num as f64 / den as f64
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact sum of fractions, or `None` on overflow.
fn rational_sum(terms: &[(u128, u128)]) -> Option<(u128, u128)> {
    terms.iter().try_fold((0u128, 1u128), |(n, d), &(tn, td)| {
        let g = gcd(d, td);
        let den = (d / g).checked_mul(td)?;
        let num = n.checked_mul(td / g)?.checked_add(tn.checked_mul(d / g)?)?;
        let r = gcd(num, den).max(1);
        Some((num / r, den / r))
    })
}

/// Average pairwise Jaccard similarity of `R >= 2` selections, correctly
/// rounded whenever the exact sum fits in 128-bit integers.
pub fn stability(sets: &[Vec<usize>]) -> Result<f64> {
    let r = sets.len();
    if r < 2 {
        return invalid(format!("stability needs at least two selections, got {r}"));
    }
    let mut terms = Vec::with_capacity(r * (r - 1) / 2);
    for a in 0..r {
        for b in a + 1..r {
            terms.push(jaccard_ratio(&sets[a], &sets[b]));
        }
    }
    let pairs = terms.len() as u128;
    if let Some((num, den)) = rational_sum(&terms) {
        if let Some(den) = den.checked_mul(pairs) {
            let g = gcd(num, den).max(1);
            let (num, den) = (num / g, den / g);
            if num < (1 << 53) && den < (1 << 53) {
                return Ok(num as f64 / den as f64);
            }
        }
    }
    Ok(terms.iter().map(|&(n, d)| n as f64 / d as f64).sum::<f64>() / pairs as f64)
}

/// Stability of a seeded selection procedure over the given seeds.
pub fn stability_of(run: impl Fn(u64) -> Result<Vec<usize>> + Sync, seeds: &[u64]) -> Result<f64> {
    let sets: Vec<Vec<usize>> = seeds.par_iter().map(|&s| run(s)).collect::<Result<_>>()?;
    stability(&sets)
}

/// Jaccard similarity of the selections made with two backbones.
pub fn robustness(a: &[usize], b: &[usize]) -> f64 {
    jaccard(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    /// `100 * r2_selected / r2_full`; NaN when `r2_full <= 0`.
    #[serde(with = "crate::serde_ext")]
    pub fidelity_pct: f64,
    pub defined: bool,
    #[serde(with = "crate::serde_ext")]
    pub r2_full: f64,
    #[serde(with = "crate::serde_ext")]
    pub r2_selected: f64,
}

/// Test-set R^2 of an OLS model on the selected columns relative to the
/// test-set R^2 of the black box.
pub fn fidelity(f: &dyn Predictor, data: &Dataset, split: &SplitPlan, selected: &[usize]) -> Result<Fidelity> {
    if split.test_idx.is_empty() {
        return invalid("fidelity needs a non-empty test split");
    }
    let x_test = select_rows(&data.x, &split.test_idx);
    let y_test: Vec<f64> = split.test_idx.iter().map(|&i| data.y[i]).collect();
    let r2_full = r_squared(&y_test, predict_batch(f, &x_test)?.as_slice());
    let r2_selected = if selected.is_empty() {
        0.0
    } else {
        let x_train = select_columns(&select_rows(&data.x, &split.train_idx), selected);
        let y_train = select_entries(&data.y, &split.train_idx);
        let ols = fit_linear(&x_train, &y_train, 0.0)?;
        r_squared(&y_test, predict_batch(&ols, &select_columns(&x_test, selected))?.as_slice())
    };
    let defined = r2_full > 0.0;
    let fidelity_pct = if defined { 100.0 * r2_selected / r2_full } else { f64::NAN };
    Ok(Fidelity { fidelity_pct, defined, r2_full, r2_selected })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    PhiTest,
    ShapTopK,
    SpvimBoot,
    ShapHt,
    StableShap,
    ShapLasso,
    LassoOnly,
    ShapStepwise,
    LassoStrong,
}

pub const BENCHMARK_METHODS: [Method; 5] =
    [Method::PhiTest, Method::ShapTopK, Method::SpvimBoot, Method::ShapHt, Method::StableShap];
pub const ABLATION_METHODS: [Method; 4] =
    [Method::ShapLasso, Method::LassoOnly, Method::ShapStepwise, Method::LassoStrong];

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::PhiTest => "phi-test",
            Method::ShapTopK => "SHAP-TopK",
            Method::SpvimBoot => "SPVIM-Boot",
            Method::ShapHt => "SHAP-HT",
            Method::StableShap => "StableSHAP",
            Method::ShapLasso => "SHAP+Lasso",
            Method::LassoOnly => "Lasso-only",
            Method::ShapStepwise => "SHAP+Stepwise",
            Method::LassoStrong => "Lasso-strong",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub phi: PhiTestConfig,
    pub backbone: BackboneSpec,
    /// Second backbone for the robustness metric.
    pub backbone_b: BackboneSpec,
    pub replicates: usize,
    pub train_fraction: f64,
    pub spvim_boot: usize,
    pub spvim_level: f64,
    pub ht_level: f64,
    pub stable_boot: usize,
    pub stable_threshold: f64,
    /// Lasso-strong uses this multiple of the penalty at which the K-th
    /// variable enters the LARS path.
    pub strong_factor: f64,
}

impl BenchmarkConfig {
    pub fn new(phi: PhiTestConfig, backbone: BackboneSpec) -> Self {
        Self {
            phi,
            backbone,
            backbone_b: default_second_backbone(),
            replicates: 5,
            train_fraction: 0.8,
            spvim_boot: 200,
            spvim_level: 0.05,
            ht_level: 0.05,
            stable_boot: 200,
            stable_threshold: 0.7,
            strong_factor: 1.5,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        self.phi.validate(p)?;
        if self.replicates < 2 {
            return invalid(format!("stability needs at least 2 replicates, got {}", self.replicates));
        }
        if self.backbone.is_external() || self.backbone_b.is_external() {
            return invalid("replicated runs retrain the backbone; external predictions are not supported here");
        }
        if !(self.strong_factor > 1.0) {
            return invalid("the Lasso-strong factor must exceed 1");
        }
        Ok(())
    }
}

/// Shallower trees with column subsampling.
pub fn default_second_backbone() -> BackboneSpec {
    BackboneSpec::Gbt(GbtConfig { max_depth: 2, colsample: 0.8, ..GbtConfig::default() })
}

/// One trained backbone with its split and attributions.
pub struct Replicate {
    pub index: usize,
    pub split: SplitPlan,
    pub backbone: Backbone,
    pub shap: ShapMatrix,
}

/// Split, backbone and attributions for replicate `r`; `variant` 0 uses the
/// primary backbone and 1 the second one (on the same split).
pub fn prepare_replicate(data: &Dataset, cfg: &BenchmarkConfig, r: usize, variant: u64) -> Result<Replicate> {
    let split_seed = derive_seed(cfg.phi.seed, STREAM_REPLICATE, r as u64);
    let split = make_split(data.n_rows(), split_seed, cfg.train_fraction, cfg.phi.mode == Mode::Split)?;
    let spec = if variant == 0 { &cfg.backbone } else { &cfg.backbone_b };
    let x_tr = select_rows(&data.x, &split.train_idx);
    let y_tr = select_entries(&data.y, &split.train_idx);
    let backbone = spec.fit(&x_tr, &y_tr, derive_seed(cfg.phi.seed, STREAM_BACKBONE, 2 * r as u64 + variant))?;
    let rows = selection_rows(&split, cfg.phi.mode)?;
    let shap_cfg = PhiTestConfig { seed: split_seed, ..cfg.phi.clone() };
    let shap = compute_shap(&backbone, &select_rows(&data.x, rows), &shap_cfg)?;
    Ok(Replicate { index: r, split, backbone, shap })
}

/// Penalty at which the `k`-th distinct variable enters the LARS path on the
/// standardized columns (the last entry if fewer than `k` enter).
pub fn lars_entry_penalty(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<Option<f64>> {
    if k == 0 {
        return Ok(None);
    }
    let entries = first_entries(&lars_lasso_path(&standardize_columns(x), y, k)?);
    Ok(entries.get(k.min(entries.len()).wrapping_sub(1)).map(|e| e.2))
}

/// Selected set (ascending) of `method` on one replicate.
pub fn select_with(method: Method, data: &Dataset, rep: &Replicate, cfg: &BenchmarkConfig) -> Result<Vec<usize>> {
    let phi = &cfg.phi;
    let seed = derive_seed(phi.seed, STREAM_REPLICATE, rep.index as u64);
    let f = &rep.backbone;
    let via = |c: PhiTestConfig| -> Result<Vec<usize>> {
        let mut s = phi_selection(f, data, &rep.split, &c, &rep.shap)?.selected;
        s.sort_unstable();
        Ok(s)
    };
    match method {
        Method::PhiTest => via(phi.clone()),
        Method::ShapTopK => baseline_topk(&rep.shap, phi.k),
        Method::SpvimBoot => baseline_spvim_boot(&rep.shap, cfg.spvim_boot, cfg.spvim_level, seed),
        Method::ShapHt => baseline_shap_ht(&rep.shap, cfg.ht_level),
        Method::StableShap => baseline_stable_shap(&rep.shap, phi.k, cfg.stable_boot, cfg.stable_threshold, seed),
        Method::ShapLasso => via(PhiTestConfig { selector: Selector::Lars, ..phi.clone() }),
        Method::LassoOnly => {
            let p = data.n_features();
            via(PhiTestConfig { selector: Selector::Lars, m: p, ..phi.clone() })
        }
        Method::ShapStepwise => via(PhiTestConfig { selector: Selector::Stepwise, ..phi.clone() }),
        Method::LassoStrong => {
            let rows = selection_rows(&rep.split, phi.mode)?;
            let x_sel = select_rows(&data.x, rows);
            let y_sur = predict_batch(f, &x_sel)?;
            let screened = screen(&rep.shap.global_scores, phi.m)?;
            let Some(lambda_k) = lars_entry_penalty(&select_columns(&x_sel, &screened), &y_sur, phi.k)? else {
                return Ok(Vec::new());
            };
            let fit = surrogate_select(&x_sel, &y_sur, &screened, Selector::Lasso(cfg.strong_factor * lambda_k), phi.k)?;
            let mut s = fit.selected;
            s.sort_unstable();
            Ok(s)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    #[serde(with = "crate::serde_ext")]
    pub fidelity_pct: f64,
    pub fidelity_defined: bool,
    pub sparsity: usize,
    pub stability: f64,
    pub robustness: f64,
    #[serde(with = "crate::serde_ext")]
    pub r2_full: f64,
    #[serde(with = "crate::serde_ext")]
    pub r2_selected: f64,
    pub replicates: usize,
    /// Selection on the primary replicate with the primary backbone.
    pub selected: Vec<usize>,
    /// Selection on the primary replicate with the second backbone.
    pub selected_second: Vec<usize>,
    /// Selections on every replicate (the raw sets behind the stability).
    pub replicate_sets: Vec<Vec<usize>>,
}

/// Runs `methods` over `cfg.replicates` replicated splits.
///
/// Fidelity, sparsity and robustness refer to replicate 0; stability is the
/// average pairwise Jaccard similarity over all replicates.
pub fn evaluate_methods(data: &Dataset, cfg: &BenchmarkConfig, methods: &[Method]) -> Result<Vec<MetricsReport>> {
    cfg.validate(data.n_features())?;
    let reps: Vec<Replicate> =
        (0..cfg.replicates).into_par_iter().map(|r| prepare_replicate(data, cfg, r, 0)).collect::<Result<_>>()?;
    let second = prepare_replicate(data, cfg, 0, 1)?;
    methods
        .iter()
        .map(|&m| {
            let sets: Vec<Vec<usize>> =
                reps.par_iter().map(|rep| select_with(m, data, rep, cfg)).collect::<Result<_>>()?;
            let primary = sets[0].clone();
            let fid = fidelity(&reps[0].backbone, data, &reps[0].split, &primary)?;
            let selected_second = select_with(m, data, &second, cfg)?;
            Ok(MetricsReport {
                method: m.name().to_string(),
                fidelity_pct: fid.fidelity_pct,
                fidelity_defined: fid.defined,
                sparsity: primary.len(),
                stability: stability(&sets)?,
                robustness: robustness(&primary, &selected_second),
                r2_full: fid.r2_full,
                r2_selected: fid.r2_selected,
                replicates: cfg.replicates,
                selected: primary,
                selected_second,
                replicate_sets: sets,
            })
        })
        .collect()
}

/// The four benchmark baselines plus the procedure itself.
pub fn benchmark(data: &Dataset, cfg: &BenchmarkConfig) -> Result<Vec<MetricsReport>> {
    evaluate_methods(data, cfg, &BENCHMARK_METHODS)
}

/// Variants of the selection step under the same metrics.
pub fn ablation_suite(data: &Dataset, cfg: &BenchmarkConfig) -> Result<Vec<MetricsReport>> {
    evaluate_methods(data, cfg, &ABLATION_METHODS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_gaussian;
    use crate::predictors::{FnPredictor, LinearModel};

    fn shap_of(cols: &[&[f64]]) -> ShapMatrix {
        let n = cols[0].len();
        let flat: Vec<f64> = cols.iter().flat_map(|c| c.iter().copied()).collect();
        ShapMatrix::new(DMatrix::from_column_slice(n, cols.len(), &flat), 0.0, EngineKind::Supplied)
    }

    #[test]
    fn jaccard_and_stability_arithmetic() {
        assert_eq!(stability(&[vec![1, 2], vec![1, 2], vec![1, 3]]).unwrap(), 5.0 / 9.0);
        assert_eq!(robustness(&[1, 2, 3, 4, 5], &[1, 2, 3, 4, 6]), 2.0 / 3.0);
        assert_eq!(robustness(&[], &[]), 1.0);
        assert_eq!(robustness(&[1], &[]), 0.0);
        assert_eq!(stability(&[vec![1], vec![2]]).unwrap(), 0.0);
        assert_eq!(stability(&[vec![4, 1], vec![1, 4], vec![4, 1]]).unwrap(), 1.0);
        assert!(stability(&[vec![1]]).is_err());
        let s = stability_of(|seed| Ok(vec![(seed % 2) as usize]), &[0, 2, 4]).unwrap();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn default_screening_size() {
        assert_eq!(default_m(8), 7);
        assert_eq!(default_m(9), 7);
        assert_eq!(default_m(12), 10);
        assert_eq!(default_m(5), 5);
    }

    #[test]
    fn spvim_zero_and_constant_columns() {
        let s = shap_of(&[&[0.0; 20], &[1.0; 20]]);
        let b = spvim_boot(&s, 100, 0.05, 1).unwrap();
        assert_eq!(b.selected, vec![1]);
        assert_eq!(b.p_values[1], 0.0);
        assert_eq!(b.p_values[0], 1.0);
        assert!(baseline_spvim_boot(&s, 99, 0.05, 1).is_err());
    }

    #[test]
    fn shap_ht_signed_mean() {
        let balanced: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 5.0 } else { -5.0 }).collect();
        let s = shap_of(&[&balanced, &[2.0; 20], &[0.0; 20]]);
        assert_eq!(baseline_shap_ht(&s, 0.05).unwrap(), vec![1]);
        assert!(baseline_shap_ht(&shap_of(&[&[1.0, 2.0]]), 0.05).is_err());
    }

    #[test]
    fn stable_shap_cases() {
        let dominant: Vec<f64> = (0..30).map(|i| 10.0 + i as f64 * 0.01).collect();
        let small: Vec<f64> = (0..30).map(|i| (i % 3) as f64 * 0.1).collect();
        let s = shap_of(&[&small, &dominant, &small]);
        let freq = stable_shap_frequencies(&s, 1, 50, 3).unwrap();
        assert_eq!(freq[1], 1.0);
        assert_eq!(baseline_stable_shap(&s, 1, 50, 0.7, 3).unwrap(), vec![1]);
        // A single resample reduces to the top-K set of that resample.
        let abs = abs_matrix(&s);
        let sub = derive_seed(9, STREAM_BOOTSTRAP, 1);
        let mut want = top_m(&resampled_scores(&abs, derive_seed(sub, STREAM_REPLICATE, 0)), 2).unwrap();
        want.sort_unstable();
        assert_eq!(baseline_stable_shap(&s, 2, 1, 0.7, 9).unwrap(), want);
        assert!(baseline_stable_shap(&s, 1, 10, 0.0, 3).is_err());
    }

    #[test]
    fn stable_shap_near_tie_falls_below_threshold() {
        // Two features tied in distribution at rank K = 2 split the slot.
        let n = 200;
        let top: Vec<f64> = vec![5.0; n];
        let a: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 2.0 } else { 0.0 }).collect();
        let b: Vec<f64> = (0..n).map(|i| if i % 2 == 1 { 2.0 } else { 0.0 }).collect();
        let s = shap_of(&[&top, &a, &b]);
        let sel = baseline_stable_shap(&s, 2, 200, 0.7, 5).unwrap();
        assert_eq!(sel, vec![0]);
    }

    #[test]
    fn fidelity_cases() {
        let ds = synth_gaussian(100, 3, &[1.0, -1.0, 0.5], 0.3, 2).unwrap();
        let split = make_split(100, 1, 0.8, false).unwrap();
        let x_tr = select_rows(&ds.x, &split.train_idx);
        let y_tr = select_entries(&ds.y, &split.train_idx);
        let f = fit_linear(&x_tr, &y_tr, 0.0).unwrap();
        let all = fidelity(&f, &ds, &split, &[0, 1, 2]).unwrap();
        assert!((all.fidelity_pct - 100.0).abs() < 1e-9);
        let none = fidelity(&f, &ds, &split, &[]).unwrap();
        assert_eq!((none.fidelity_pct, none.r2_selected), (0.0, 0.0));
        let bad = FnPredictor::new(3, |_| 1e3);
        let undefined = fidelity(&bad, &ds, &split, &[0]).unwrap();
        assert!(!undefined.defined && undefined.fidelity_pct.is_nan());
    }

    #[test]
    fn phi_test_planted_linear_split() {
        let ds = synth_gaussian(500, 5, &[0.0, 1.0, -1.0, 0.0, 0.0], 0.1, 7).unwrap();
        let f = LinearModel { intercept: 0.0, coef: vec![0.0, 1.0, -1.0, 0.0, 0.0] };
        // A small nonlinearity keeps the surrogate from fitting exactly.
        let g = FnPredictor::new(5, move |x| f.predict(x).unwrap() + 0.1 * (3.0 * x[0]).sin());
        let split = make_split(500, 3, 0.8, true).unwrap();
        let cfg = PhiTestConfig { m: 5, k: 2, ..PhiTestConfig::for_features(5) };
        let t = phi_test(&g, &ds, &split, &cfg, None).unwrap();
        assert_eq!(t.selected_set(), vec![1, 2]);
        for &j in &t.selected {
            assert!(t.rows[j].inference.as_ref().unwrap().p_value < 0.01);
            assert!(t.rows[j].naive.is_some());
        }
        let total: f64 = t.rows.iter().map(|r| r.shap).sum();
        let sel: f64 = t.selected.iter().map(|&j| t.rows[j].shap).sum();
        assert!((sel + t.residual_shap - total).abs() < 1e-12);
    }

    #[test]
    fn phi_test_k_zero_and_mode_errors() {
        let ds = synth_gaussian(80, 4, &[1.0, 0.5, 0.0, 0.0], 0.5, 1).unwrap();
        let f = LinearModel { intercept: 0.0, coef: vec![1.0, 0.5, 0.0, 0.0] };
        let split = make_split(80, 1, 0.8, true).unwrap();
        let cfg = PhiTestConfig { m: 4, k: 0, ..PhiTestConfig::for_features(4) };
        let t = phi_test(&f, &ds, &split, &cfg, None).unwrap();
        assert!(t.selected.is_empty());
        let total: f64 = t.rows.iter().map(|r| r.shap).sum();
        assert!((t.residual_shap - total).abs() < 1e-12);

        let full = PhiTestConfig { mode: Mode::Full, ..cfg.clone() };
        let err = phi_test(&f, &ds, &split, &full, None).unwrap_err().to_string();
        assert!(err.contains("polyhedral"));
        let no_halves = make_split(80, 1, 0.8, false).unwrap();
        assert!(phi_test(&f, &ds, &no_halves, &cfg, None).is_err());
        let big_k = PhiTestConfig { m: 2, k: 3, ..cfg };
        assert!(phi_test(&f, &ds, &split, &big_k, None).is_err());
    }

    #[test]
    fn full_mode_stepwise_table() {
        let ds = synth_gaussian(200, 6, &[1.0, 0.0, 0.5, 0.0, 0.0, 0.0], 1.0, 11).unwrap();
        let g = FnPredictor::new(6, |x| x[0] + 0.5 * x[2] + 0.2 * x[1] * x[3]);
        let split = make_split(200, 2, 0.8, false).unwrap();
        let cfg = PhiTestConfig {
            m: 4,
            k: 2,
            selector: Selector::Stepwise,
            mode: Mode::Full,
            ..PhiTestConfig::for_features(6)
        };
        let t = phi_test(&g, &ds, &split, &cfg, None).unwrap();
        assert_eq!(t.selected.len(), 2);
        for &j in &t.selected {
            let s = t.rows[j].inference.as_ref().unwrap();
            assert!(s.truncation.is_some());
            assert!(t.rows[j].naive.is_none());
        }
        let (sel, rest) = t.display_order();
        assert_eq!(sel.len(), 2);
        assert_eq!(rest.len(), 4);
        assert!(t.rows[sel[0]].shap >= t.rows[sel[1]].shap);
    }

    #[test]
    fn lasso_strong_never_exceeds_lars() {
        let ds = synth_gaussian(120, 6, &[1.0, 0.8, 0.6, 0.4, 0.2, 0.0], 1.0, 4).unwrap();
        let y = ds.y.clone();
        let lam = lars_entry_penalty(&ds.x, &y, 4).unwrap().unwrap();
        let lars = lars_first_k(&ds.x, &y, 4, true).unwrap();
        let strong = lasso_fixed_lambda(&ds.x, &y, 1.5 * lam).unwrap();
        assert!(strong.selected.len() <= lars.selected.len());
        assert!(strong.selected.iter().all(|j| lars.selected.contains(j)));
    }

    #[test]
    fn parsing() {
        assert_eq!("split".parse::<Mode>().unwrap(), Mode::Split);
        assert!("both".parse::<Mode>().is_err());
        assert_eq!("kernel".parse::<EngineChoice>().unwrap(), EngineChoice::Kernel);
        assert_eq!(Mode::Full.to_string(), "full");
    }
}
