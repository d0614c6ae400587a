//! Simulation checks of the inference procedures on synthetic Gaussian data.
//!
//! Each replicate draws `X` with i.i.d. standard normal entries and
//! `y = X beta + sigma eps`, runs forward stepwise selection and records the
//! inference for the selected coefficients. Replicates use seeds derived
//! from one master seed and run in parallel; results do not depend on the
//! schedule.

use crate::data::{make_split, synth_gaussian};
use crate::error::{invalid, Result};
use crate::linalg::{select_columns, select_entries, select_rows};
use crate::rng::{derive_seed, STREAM_REPLICATE};
use crate::selection::stepwise_first_k;
use crate::selinf::{naive_inference, split_t_inference, truncated_inference};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    /// Number of stepwise steps.
    pub k: usize,
    pub sigma: f64,
    /// True coefficients; all zero for the null.
    pub beta: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl SimulationConfig {
    /// Pure-noise design with `n = 500`, `p = 10` and three stepwise steps.
    pub fn null(replicates: usize, seed: u64) -> Self {
        Self { n: 500, p: 10, k: 3, sigma: 1.0, beta: vec![0.0; 10], replicates, seed, alpha: 0.05 }
    }

    /// Three planted effects of decreasing size among ten features.
    pub fn planted(replicates: usize, seed: u64) -> Self {
        let mut beta = vec![0.0; 10];
        beta[..3].copy_from_slice(&[0.3, 0.2, 0.1]);
        Self { n: 200, p: 10, k: 3, sigma: 1.0, beta, replicates, seed, alpha: 0.05 }
    }

    fn validate(&self) -> Result<()> {
        if self.beta.len() != self.p {
            return invalid(format!("beta has {} entries for p = {}", self.beta.len(), self.p));
        }
        if self.replicates == 0 {
            return invalid("at least one replicate is required");
        }
        if self.k == 0 || self.k > self.p {
            return invalid(format!("K must lie in 1..={}", self.p));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return invalid(format!("alpha must lie in (0, 0.5], got {}", self.alpha));
        }
        Ok(())
    }

    fn replicate_seed(&self, r: usize) -> u64 {
        derive_seed(self.seed, STREAM_REPLICATE, r as u64)
    }
}

/// Outcome of a set of replicates; failed replicates are counted, not
/// silently dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicated<T> {
    pub values: Vec<T>,
    pub failures: usize,
    pub first_failure: Option<String>,
}

fn run_replicates<T: Send>(cfg: &SimulationConfig, one: impl Fn(u64) -> Result<T> + Sync) -> Replicated<T> {
    let results: Vec<Result<T>> = (0..cfg.replicates).into_par_iter().map(|r| one(cfg.replicate_seed(r))).collect();
    let mut out = Replicated { values: Vec::new(), failures: 0, first_failure: None };
    for res in results {
        match res {
            Ok(v) => out.values.push(v),
            Err(e) => {
                out.failures += 1;
                out.first_failure.get_or_insert_with(|| e.to_string());
            }
        }
    }
    out
}

/// Two-sided selective p-value of the first selected feature in each
/// replicate.
pub fn null_p_values(cfg: &SimulationConfig) -> Result<Replicated<f64>> {
    cfg.validate()?;
    Ok(run_replicates(cfg, |seed| {
        let ds = synth_gaussian(cfg.n, cfg.p, &cfg.beta, cfg.sigma, seed)?;
        let out = stepwise_first_k(&ds.x, &ds.y, cfg.k)?;
        Ok(truncated_inference(&out, &ds.y, cfg.alpha)?[0].p_value)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageCount {
    pub covered: usize,
    pub total: usize,
}

/// Coverage of the selective intervals for every selected coefficient,
/// against the target `v' X beta`.
pub fn coverage(cfg: &SimulationConfig) -> Result<(CoverageCount, Replicated<CoverageCount>)> {
    cfg.validate()?;
    let beta = DVector::from_column_slice(&cfg.beta);
    let reps = run_replicates(cfg, |seed| {
        let ds = synth_gaussian(cfg.n, cfg.p, &cfg.beta, cfg.sigma, seed)?;
        let mean = &ds.x * &beta;
        let out = stepwise_first_k(&ds.x, &ds.y, cfg.k)?;
        let sums = truncated_inference(&out, &ds.y, cfg.alpha)?;
        let mut c = CoverageCount { covered: 0, total: 0 };
        for (s, v) in sums.iter().zip(&out.refit.contrasts) {
            let target = v.dot(&mean);
            c.total += 1;
            if s.ci_low <= target && target <= s.ci_high {
                c.covered += 1;
            }
        }
        Ok(c)
    });
    let total = reps.values.iter().fold(CoverageCount { covered: 0, total: 0 }, |acc, c| CoverageCount {
        covered: acc.covered + c.covered,
        total: acc.total + c.total,
    });
    Ok((total, reps))
}

/// Per-replicate p-values of the first selected feature under three
/// treatments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiveTriple {
    /// t test on the rows used for selection.
    pub naive: f64,
    /// Truncated-normal p-value on the same rows.
    pub selective: f64,
    /// Selection on one half, t test on the other.
    pub split: f64,
}

pub fn naive_compare(cfg: &SimulationConfig) -> Result<Replicated<NaiveTriple>> {
    cfg.validate()?;
    Ok(run_replicates(cfg, |seed| {
        let ds = synth_gaussian(cfg.n, cfg.p, &cfg.beta, cfg.sigma, seed)?;
        let full = stepwise_first_k(&ds.x, &ds.y, cfg.k)?;
        let first = full.selected[0];
        let naive = naive_inference(&select_columns(&ds.x, &[first]), &ds.y, cfg.alpha)?[0].p_value;
        let selective = truncated_inference(&full, &ds.y, cfg.alpha)?[0].p_value;

        let plan = make_split(cfg.n, seed, 1.0, true)?;
        let x_sel = select_rows(&ds.x, &plan.selection_idx);
        let y_sel = select_entries(&ds.y, &plan.selection_idx);
        let half = stepwise_first_k(&x_sel, &y_sel, cfg.k)?;
        let x_inf = select_rows(&ds.x, &plan.inference_idx);
        let y_inf = select_entries(&ds.y, &plan.inference_idx);
        let split = split_t_inference(&select_columns(&x_inf, &[half.selected[0]]), &y_inf, cfg.alpha)?[0].p_value;
        Ok(NaiveTriple { naive, selective, split })
    }))
}

/// Fraction of p-values at or below `level`.
pub fn exceedance(p_values: &[f64], level: f64) -> f64 {
    if p_values.is_empty() {
        return f64::NAN;
    }
    p_values.iter().filter(|&&p| p <= level).count() as f64 / p_values.len() as f64
}

/// Standard deviation of a binomial proportion with success rate `level`.
pub fn binomial_sd(level: f64, n: usize) -> f64 {
    (level * (1.0 - level) / n as f64).sqrt()
}

/// Empirical exceedance at one level with a `+- width` binomial-SD band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub level: f64,
    pub rate: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

pub fn band(p_values: &[f64], level: f64, width: f64) -> Band {
    let rate = exceedance(p_values, level);
    let sd = binomial_sd(level, p_values.len());
    let (lower, upper) = (level - width * sd, level + width * sd);
    Band { level, rate, sd, lower, upper, pass: rate >= lower && rate <= upper }
}

/// Kolmogorov-Smirnov distance between the empirical law of `values` and
/// Uniform(0, 1).
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}
