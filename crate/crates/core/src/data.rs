//! Tabular regression data: CSV ingestion with dataset recipes, seeded
//! train/test and selection/inference splits, standardization, and a
//! Gaussian linear-model generator used by the calibration simulations.

use crate::error::{invalid, Error, Result};
use crate::linalg::column_moments;
use crate::rng::{derive_seed, rng_from_seed, STREAM_SPLIT};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

/// Missing-value sentinel used by the AirQuality distribution.
pub const AIRQUALITY_SENTINEL: f64 = -200.0;
pub const AIRQUALITY_TARGET: &str = "CO(GT)";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        x: DMatrix<f64>,
        y: DVector<f64>,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 {
            return invalid("dataset needs at least one feature");
        }
        if n < 2 {
            return invalid(format!("dataset needs at least two rows, got {n}"));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        if feature_names.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: feature_names.len() });
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return invalid(format!("duplicate feature name {name:?}"));
            }
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return invalid("dataset contains NaN or infinite values");
        }
        Ok(Self { name: name.into(), feature_names, target_name: target_name.into(), x, y })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Writes the dataset as CSV with features first and the target last.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.push(self.target_name.clone());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = (0..self.n_features()).map(|j| self.x[(i, j)].to_string()).collect();
            rec.push(self.y[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Recipe {
    #[default]
    None,
    AirQuality,
    Concrete,
}

impl FromStr for Recipe {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Recipe::None),
            "airquality" => Ok(Recipe::AirQuality),
            "concrete" => Ok(Recipe::Concrete),
            other => invalid(format!("unknown recipe {other:?} (expected none|airquality|concrete)")),
        }
    }
}

impl std::fmt::Display for Recipe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Recipe::None => "none",
            Recipe::AirQuality => "airquality",
            Recipe::Concrete => "concrete",
        })
    }
}

fn parse_cell(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn shorten_concrete_name(name: &str) -> String {
    name.split('(').next().unwrap_or(name).trim().to_string()
}

/// Loads a comma-separated file with a header row.
///
/// `target` may be omitted for the `airquality` (`CO(GT)`) and `concrete`
/// (the column whose name contains "strength") recipes.
pub fn load_csv(path: impl AsRef<Path>, target: Option<&str>, recipe: Recipe) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut records: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        records.push(rec.iter().map(|c| c.to_string()).collect());
    }

    // Unnamed, entirely empty columns (trailing separators) are never data.
    let mut keep: Vec<usize> = (0..headers.len())
        .filter(|&j| !(headers[j].is_empty() && records.iter().all(|r| r[j].trim().is_empty())))
        .collect();

    if recipe == Recipe::AirQuality {
        keep.retain(|&j| {
            let h = headers[j].to_ascii_lowercase();
            h != "date" && h != "time"
        });
        records.retain(|r| !keep.iter().any(|&j| parse_cell(&r[j]) == Some(AIRQUALITY_SENTINEL)));
    }

    let target_name = match (target, recipe) {
        (Some(t), _) => t.to_string(),
        (None, Recipe::AirQuality) => AIRQUALITY_TARGET.to_string(),
        (None, Recipe::Concrete) => keep
            .iter()
            .map(|&j| headers[j].clone())
            .find(|h| h.to_ascii_lowercase().contains("strength"))
            .ok_or_else(|| Error::Data("no compressive-strength column found".into()))?,
        (None, Recipe::None) => return invalid("a target column is required with recipe none"),
    };
    let target_col = keep
        .iter()
        .copied()
        .find(|&j| headers[j] == target_name)
        .ok_or_else(|| Error::Data(format!("target column {target_name:?} not found")))?;
    let feature_cols: Vec<usize> = keep.iter().copied().filter(|&j| j != target_col).collect();

    if feature_cols.is_empty() {
        return Err(Error::Data("no feature columns besides the target".into()));
    }
    if recipe == Recipe::Concrete && feature_cols.len() != 8 {
        return Err(Error::Data(format!(
            "concrete recipe expects 8 feature columns, found {}",
            feature_cols.len()
        )));
    }
    if records.is_empty() {
        return Err(Error::Data("dataset is empty after filtering".into()));
    }

    let mut offending: Vec<String> = Vec::new();
    for &j in feature_cols.iter().chain(std::iter::once(&target_col)) {
        if records.iter().any(|r| parse_cell(&r[j]).is_none()) {
            offending.push(headers[j].clone());
        }
    }
    if !offending.is_empty() {
        return Err(Error::Data(format!("non-numeric values in column(s): {}", offending.join(", "))));
    }

    let n = records.len();
    let p = feature_cols.len();
    let x = DMatrix::from_fn(n, p, |i, k| parse_cell(&records[i][feature_cols[k]]).unwrap());
    let y = DVector::from_fn(n, |i, _| parse_cell(&records[i][target_col]).unwrap());

    let mut names: Vec<String> = feature_cols.iter().map(|&j| headers[j].clone()).collect();
    if recipe == Recipe::Concrete {
        let short: Vec<String> = names.iter().map(|s| shorten_concrete_name(s)).collect();
        if short.iter().collect::<HashSet<_>>().len() == short.len() && short.iter().all(|s| !s.is_empty()) {
            names = short;
        }
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(stem, names, target_name, x, y)
}

/// Seeded partition of row indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train_fraction: f64,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    /// Empty unless the plan was built with `split_sample`.
    pub selection_idx: Vec<usize>,
    pub inference_idx: Vec<usize>,
}

impl SplitPlan {
    pub fn is_split_sample(&self) -> bool {
        !self.selection_idx.is_empty()
    }
}

/// Draws a seeded permutation of `0..n`; the first `round(train_fraction * n)`
/// rows form the training set. With `split_sample` the training rows are
/// further halved into selection and inference parts (sizes differ by at most
/// one). Every index list is returned sorted.
pub fn make_split(n: usize, seed: u64, train_fraction: f64, split_sample: bool) -> Result<SplitPlan> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return invalid(format!("train_fraction must lie in (0, 1], got {train_fraction}"));
    }
    if split_sample && n < 4 {
        return invalid(format!("split-sample mode needs n >= 4, got {n}"));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 {
        return invalid("training split is empty");
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(derive_seed(seed, STREAM_SPLIT, 0));
    perm.shuffle(&mut rng);

    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    let (train, test) = perm.split_at(n_train);
    let (selection_idx, inference_idx) = if split_sample {
        if n_train < 2 {
            return invalid("split-sample mode needs at least two training rows");
        }
        let (a, b) = train.split_at(n_train.div_ceil(2));
        (sorted(a), sorted(b))
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(SplitPlan {
        seed,
        train_fraction,
        train_idx: sorted(train),
        test_idx: sorted(test),
        selection_idx,
        inference_idx,
    })
}

/// Per-column affine standardization with population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Columns that were constant; their scale is forced to 1.
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() < 2 {
            return invalid("standardizer needs at least two rows");
        }
        let (means, scales, constant) = column_moments(x);
        Ok(Self { means, scales, constant })
    }

    pub fn has_constant_columns(&self) -> bool {
        self.constant.iter().any(|&c| c)
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(x)?;
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.means[j]) / self.scales[j]))
    }

    pub fn inverse(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(z)?;
        Ok(DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] * self.scales[j] + self.means[j]))
    }

    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.means.len() {
            return Err(Error::DimensionMismatch { expected: self.means.len(), got: x.ncols() });
        }
        Ok(())
    }
}

/// `X` with i.i.d. standard normal entries and `y = X beta + sigma * eps`.
pub fn synth_gaussian(n: usize, p: usize, beta: &[f64], sigma: f64, seed: u64) -> Result<Dataset> {
    if beta.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: beta.len() });
    }
    if !(sigma >= 0.0) {
        return invalid(format!("sigma must be non-negative, got {sigma}"));
    }
    let mut rng = rng_from_seed(seed);
    let mut x = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            x[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    let mut y: DVector<f64> = &x * DVector::from_column_slice(beta);
    for v in y.iter_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * e;
    }
    let names = (0..p).map(|j| format!("x{j}")).collect();
    Dataset::new("synth", names, "y", x, y)
}
