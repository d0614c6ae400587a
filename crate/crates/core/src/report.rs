//! Run configuration, command entry points and report rendering.
//!
//! A [`RunConfig`] is assembled from `key = value` pairs: defaults first,
//! then a config file, then command-line flags, later sources overriding
//! earlier ones. Every written artifact (JSON, CSV, SHAP dump) embeds the
//! resolved configuration and the tool version.

use crate::calibration::{self, Band, SimulationConfig};
use crate::data::{load_csv, make_split, Dataset, Recipe};
use crate::error::{invalid, Error, Result};
use crate::linalg::{select_entries, select_rows};
use crate::pipeline::{
    ablation_suite, benchmark, default_m, default_second_backbone, phi_test, BenchmarkConfig, EngineChoice,
    FeatureTable, MetricsReport, Mode, PhiTestConfig, DEFAULT_ALPHA, DEFAULT_K, DEFAULT_SHAP_ROWS,
};
use crate::predictors::{external_predictor, Backbone, BackboneSpec, Predictor};
use crate::rng::{derive_seed, STREAM_BACKBONE};
use crate::selection::Selector;
use crate::selinf::SelectiveSummary;
use crate::shap::{ShapMatrix, EXACT_MAX_FEATURES};
use crate::TOOL_VERSION;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const DEFAULT_BENCHMARK_REPLICATES: usize = 5;
pub const DEFAULT_CALIBRATION_REPLICATES: usize = 2000;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// Exact SHAP is the automatic choice up to this many features.
const AUTO_EXACT_MAX_FEATURES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Table,
    Benchmark,
    Calibrate,
    Ablate,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Table => "table",
            Command::Benchmark => "benchmark",
            Command::Calibrate => "calibrate",
            Command::Ablate => "ablate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationKind {
    /// Exceedance of null selective p-values at several levels.
    NullP,
    /// Coverage of selective intervals under planted effects.
    Coverage,
    /// Naive, selective and split-sample p-values under the null.
    NaiveCompare,
}

impl FromStr for CalibrationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "null_p" => Ok(CalibrationKind::NullP),
            "coverage" => Ok(CalibrationKind::Coverage),
            "naive_compare" => Ok(CalibrationKind::NaiveCompare),
            other => invalid(format!("unknown calibration {other:?} (expected null_p|coverage|naive_compare)")),
        }
    }
}

impl fmt::Display for CalibrationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CalibrationKind::NullP => "null_p",
            CalibrationKind::Coverage => "coverage",
            CalibrationKind::NaiveCompare => "naive_compare",
        })
    }
}

/// Everything a command needs. Optional fields left unset are resolved
/// against the dataset by [`RunConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub data: Option<PathBuf>,
    pub recipe: Recipe,
    pub target: Option<String>,
    pub backbone: BackboneSpec,
    pub backbone_b: BackboneSpec,
    pub engine: Option<EngineChoice>,
    pub selector: Selector,
    pub mode: Mode,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub alpha: f64,
    pub seed: u64,
    pub replicates: Option<usize>,
    pub train_fraction: f64,
    pub shap_rows: usize,
    pub calibration: Option<CalibrationKind>,
    pub out_json: Option<PathBuf>,
    pub out_csv: Option<PathBuf>,
    pub dump_shap: Option<PathBuf>,
    pub shap_in: Option<PathBuf>,
}

/// Keys accepted in config files and as flags (flag `--backbone-b` is key
/// `backbone-b`; `M` and `K` are keys `m` and `k`).
pub const CONFIG_KEYS: [&str; 20] = [
    "data",
    "recipe",
    "target",
    "backbone",
    "backbone-b",
    "engine",
    "selector",
    "mode",
    "m",
    "k",
    "alpha",
    "seed",
    "replicates",
    "train-fraction",
    "shap-rows",
    "calibration",
    "out-json",
    "out-csv",
    "dump-shap",
    "shap-in",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::InvalidInput(format!("bad value for {key}: {value:?}")))
}

fn optional_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

/// Parses a flat `key = value` file. Blank lines and lines starting with `#`
/// are ignored; a key may appear only once.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("config line {}: expected key = value", no + 1)))?;
        let key = k.trim().to_ascii_lowercase().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return invalid(format!("config line {}: unknown key {key:?}", no + 1));
        }
        if out.iter().any(|(seen, _)| *seen == key) {
            return invalid(format!("config line {}: duplicate key {key:?}", no + 1));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config_file(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    parse_config_text(&std::fs::read_to_string(path)?)
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        Self {
            command,
            data: None,
            recipe: Recipe::None,
            target: None,
            backbone: BackboneSpec::Gbt(Default::default()),
            backbone_b: default_second_backbone(),
            engine: None,
            selector: Selector::Lars,
            mode: Mode::Split,
            m: None,
            k: None,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            replicates: None,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            shap_rows: DEFAULT_SHAP_ROWS,
            calibration: None,
            out_json: None,
            out_csv: None,
            dump_shap: None,
            shap_in: None,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "data" => self.data = optional_path(v),
            "recipe" => self.recipe = v.parse()?,
            "target" => self.target = (!v.is_empty()).then(|| v.to_string()),
            "backbone" => self.backbone = v.parse()?,
            "backbone-b" => self.backbone_b = v.parse()?,
            "engine" => self.engine = if v == "auto" { None } else { Some(v.parse()?) },
            "selector" => self.selector = v.parse()?,
            "mode" => self.mode = v.parse()?,
            "m" => self.m = Some(parse_value(key, v)?),
            "k" => self.k = Some(parse_value(key, v)?),
            "alpha" => self.alpha = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "replicates" => self.replicates = Some(parse_value(key, v)?),
            "train-fraction" => self.train_fraction = parse_value(key, v)?,
            "shap-rows" => self.shap_rows = parse_value(key, v)?,
            "calibration" => self.calibration = Some(v.parse()?),
            "out-json" => self.out_json = optional_path(v),
            "out-csv" => self.out_csv = optional_path(v),
            "dump-shap" => self.dump_shap = optional_path(v),
            "shap-in" => self.shap_in = optional_path(v),
            other => return invalid(format!("unknown config key {other:?}")),
        }
        Ok(())
    }

    /// Applies `pairs` in order over the defaults, so later pairs win.
    pub fn from_pairs<'a>(command: Command, pairs: impl IntoIterator<Item = &'a (String, String)>) -> Result<Self> {
        let mut cfg = Self::defaults(command);
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that do not need the dataset.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return invalid(format!("alpha must lie in (0, 0.5], got {}", self.alpha));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return invalid(format!("train fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if self.shap_rows == 0 {
            return invalid("shap-rows must be positive");
        }
        if self.m == Some(0) {
            return invalid("M must be at least 1");
        }
        if let (Some(m), Some(k)) = (self.m, self.k) {
            if k > m {
                return invalid(format!("K = {k} exceeds M = {m}"));
            }
        }
        if self.mode == Mode::Full && !self.selector.has_polyhedron() {
            return invalid("mode full needs a stepwise or lasso selector (lars has no polyhedral selection event)");
        }
        match self.command {
            Command::Calibrate => {
                if self.calibration.is_none() {
                    return invalid("calibrate needs a calibration kind (null_p|coverage|naive_compare)");
                }
                if self.replicates == Some(0) {
                    return invalid("replicates must be positive");
                }
            }
            Command::Table | Command::Benchmark | Command::Ablate => {
                if self.data.is_none() {
                    return invalid("--data is required");
                }
                if self.command != Command::Table && self.replicates.is_some_and(|r| r < 2) {
                    return invalid("stability needs at least 2 replicates");
                }
                if self.backbone.is_external() && self.shap_in.is_none() {
                    return invalid(
                        "an external backbone can only be queried on dataset rows; supply attributions with --shap-in",
                    );
                }
                if self.command != Command::Table && (self.backbone.is_external() || self.backbone_b.is_external()) {
                    return invalid("benchmark and ablate retrain the backbone, so external predictions are not supported");
                }
            }
        }
        Ok(())
    }

    /// Fills the dataset-dependent defaults (M, K, engine, replicates).
    pub fn resolve(&self, p: usize) -> Result<Self> {
        let mut out = self.clone();
        let m = self.m.unwrap_or_else(|| default_m(p));
        if m > p {
            return invalid(format!("M = {m} exceeds the {p} features"));
        }
        out.m = Some(m);
        out.k = Some(self.k.unwrap_or(DEFAULT_K.min(m)));
        let engine = self.engine.unwrap_or(if p <= AUTO_EXACT_MAX_FEATURES { EngineChoice::Exact } else { EngineChoice::Kernel });
        if engine == EngineChoice::Exact && p > EXACT_MAX_FEATURES {
            return invalid(format!("exact SHAP supports at most {EXACT_MAX_FEATURES} features"));
        }
        out.engine = Some(engine);
        out.replicates = Some(self.replicates.unwrap_or(match self.command {
            Command::Calibrate => DEFAULT_CALIBRATION_REPLICATES,
            _ => DEFAULT_BENCHMARK_REPLICATES,
        }));
        Ok(out)
    }

    /// Procedure settings for a resolved configuration.
    pub fn phi_config(&self, p: usize) -> Result<PhiTestConfig> {
        let r = self.resolve(p)?;
        let cfg = PhiTestConfig {
            m: r.m.unwrap_or(1),
            k: r.k.unwrap_or(0),
            selector: r.selector,
            engine: r.engine.unwrap_or(EngineChoice::Kernel),
            alpha: r.alpha,
            mode: r.mode,
            shap_rows: Some(r.shap_rows),
            seed: r.seed,
            ..PhiTestConfig::for_features(p)
        };
        cfg.validate(p)?;
        Ok(cfg)
    }

    pub fn benchmark_config(&self, p: usize) -> Result<BenchmarkConfig> {
        let mut b = BenchmarkConfig::new(self.phi_config(p)?, self.backbone.clone());
        b.backbone_b = self.backbone_b.clone();
        b.replicates = self.resolve(p)?.replicates.unwrap_or(DEFAULT_BENCHMARK_REPLICATES);
        b.train_fraction = self.train_fraction;
        Ok(b)
    }

    pub fn load_data(&self) -> Result<Dataset> {
        let path = self.data.as_ref().ok_or_else(|| Error::InvalidInput("--data is required".into()))?;
        load_csv(path, self.target.as_deref(), self.recipe)
    }

    fn provenance_lines(&self) -> Result<Vec<String>> {
        Ok(vec![TOOL_VERSION.to_string(), format!("config: {}", serde_json::to_string(self)?)])
    }
}

/// JSON wrapper written for every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub tool_version: String,
    pub config: RunConfig,
    pub result: T,
}

fn write_json<T: Serialize>(path: &Path, config: &RunConfig, result: &T) -> Result<()> {
    #[derive(Serialize)]
    struct View<'a, T> {
        tool_version: &'a str,
        config: &'a RunConfig,
        result: &'a T,
    }
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(file, &View { tool_version: TOOL_VERSION, config, result })?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Artifact<T>> {
    Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?)
}

fn csv_writer(path: &Path, config: &RunConfig) -> Result<csv::Writer<std::fs::File>> {
    let mut file = std::fs::File::create(path)?;
    for line in config.provenance_lines()? {
        writeln!(file, "# {line}")?;
    }
    Ok(csv::Writer::from_writer(file))
}

fn fmt4(v: f64) -> String {
    if v.is_nan() {
        "n/a".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.4}")
    }
}

pub const TABLE_HEADER: &str = "Feature  SHAP  Coef  SE  z  p-value  95% CI";
pub const RESIDUAL_LABEL: &str = "Residual (unselected)";

fn inference_cells(s: &SelectiveSummary) -> String {
    format!(
        "{}  {}  {}  {}  [{}, {}]",
        fmt4(s.estimate),
        fmt4(s.std_error),
        fmt4(s.statistic),
        fmt4(s.p_value),
        fmt4(s.ci_low),
        fmt4(s.ci_high)
    )
}

/// Plain-text table: selected features by decreasing SHAP score, the
/// residual row, then the unselected features with their SHAP scores.
pub fn render_table(t: &FeatureTable) -> String {
    let (selected, rest) = t.display_order();
    let mut out = String::new();
    let _ = writeln!(out, "{TABLE_HEADER}");
    for &j in &selected {
        let row = &t.rows[j];
        let cells = row.inference.as_ref().map_or_else(|| "--  --  --  --  [--, --]".to_string(), inference_cells);
        let _ = writeln!(out, "{}  {}  {}", row.name, fmt4(row.shap), cells);
    }
    let _ = writeln!(out, "{RESIDUAL_LABEL}  {}  --  --  --  --  [--, --]", fmt4(t.residual_shap));
    if !rest.is_empty() {
        let _ = writeln!(out, "\nUnselected features (SHAP only):");
        for &j in &rest {
            let _ = writeln!(out, "{}  {}", t.rows[j].name, fmt4(t.rows[j].shap));
        }
    }
    let inference = match t.mode {
        Mode::Split => "t inference on the held-out inference half",
        Mode::Full => "truncated-normal selective inference",
    };
    let _ = writeln!(
        out,
        "\nmode {}: {inference}; alpha {}; selector {}, M = {}, K = {}; {} SHAP rows ({:?})",
        t.mode, t.alpha, t.provenance.selector, t.provenance.m, t.provenance.k, t.provenance.shap_rows, t.provenance.engine
    );
    for w in &t.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

fn write_table_csv(path: &Path, config: &RunConfig, t: &FeatureTable) -> Result<()> {
    let mut w = csv_writer(path, config)?;
    w.write_record([
        "feature", "index", "shap", "screened", "selected", "coef", "se", "statistic", "p_value", "ci_low", "ci_high", "df",
    ])?;
    let num = |v: f64| v.to_string();
    for row in &t.rows {
        let mut rec = vec![
            row.name.clone(),
            row.index.to_string(),
            num(row.shap),
            row.screened.to_string(),
            row.selected.to_string(),
        ];
        match &row.inference {
            Some(s) => rec.extend([
                num(s.estimate),
                num(s.std_error),
                num(s.statistic),
                num(s.p_value),
                num(s.ci_low),
                num(s.ci_high),
                s.df.map(|d| d.to_string()).unwrap_or_default(),
            ]),
            None => rec.extend(std::iter::repeat_n(String::new(), 7)),
        }
        w.write_record(&rec)?;
    }
    let mut residual = vec![RESIDUAL_LABEL.to_string(), String::new(), num(t.residual_shap), String::new(), String::new()];
    residual.extend(std::iter::repeat_n(String::new(), 7));
    w.write_record(&residual)?;
    w.flush()?;
    Ok(())
}

/// Backbone for the table command, trained on the training rows (or the
/// external predictions bound to the dataset rows).
pub fn table_backbone(cfg: &RunConfig, data: &Dataset, train_idx: &[usize]) -> Result<Box<dyn Predictor>> {
    match &cfg.backbone {
        BackboneSpec::External { path } => {
            let ext = external_predictor(path)?;
            for i in 0..data.n_rows() {
                ext.value_at(i)?;
            }
            Ok(Box::new(ext.bind(&data.x)))
        }
        spec => {
            let fit: Backbone = spec.fit(
                &select_rows(&data.x, train_idx),
                &select_entries(&data.y, train_idx),
                derive_seed(cfg.seed, STREAM_BACKBONE, 0),
            )?;
            Ok(Box::new(fit))
        }
    }
}

/// Builds the feature table and writes the requested artifacts; the text
/// rendering goes to `out`.
pub fn cmd_table(cfg: &RunConfig, out: &mut dyn Write) -> Result<FeatureTable> {
    cfg.validate()?;
    let data = cfg.load_data()?;
    let resolved = cfg.resolve(data.n_features())?;
    let phi = resolved.phi_config(data.n_features())?;
    let split = make_split(data.n_rows(), cfg.seed, cfg.train_fraction, cfg.mode == Mode::Split)?;
    let f = table_backbone(&resolved, &data, &split.train_idx)?;
    let supplied = cfg.shap_in.as_ref().map(|p| ShapMatrix::read_csv(&data.feature_names, p)).transpose()?;
    let computed = match supplied {
        Some(s) => s,
        None => {
            let rows = if phi.mode == Mode::Split { &split.selection_idx } else { &split.train_idx };
            crate::pipeline::compute_shap(f.as_ref(), &select_rows(&data.x, rows), &phi)?
        }
    };
    if let Some(path) = &cfg.dump_shap {
        computed.write_csv(&data.feature_names, &resolved.provenance_lines()?, path)?;
    }
    let table = phi_test(f.as_ref(), &data, &split, &phi, Some(&computed))?;
    out.write_all(render_table(&table).as_bytes())?;
    if let Some(path) = &cfg.out_json {
        write_json(path, &resolved, &table)?;
    }
    if let Some(path) = &cfg.out_csv {
        write_table_csv(path, &resolved, &table)?;
    }
    Ok(table)
}

pub const METRICS_HEADER: &str = "Method  Fidelity  Sparsity  Stability  Robustness";

pub fn render_metrics(rows: &[MetricsReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{METRICS_HEADER}");
    for r in rows {
        let _ = writeln!(
            out,
            "{}  {}  {}  {}  {}",
            r.method,
            fmt4(r.fidelity_pct),
            r.sparsity,
            fmt4(r.stability),
            fmt4(r.robustness)
        );
    }
    if let Some(r) = rows.first() {
        let _ = writeln!(out, "\nstability over {} replicates; fidelity, sparsity and robustness on replicate 0", r.replicates);
    }
    for r in rows.iter().filter(|r| !r.fidelity_defined) {
        let _ = writeln!(out, "warning: {}: backbone test R^2 <= 0, fidelity undefined", r.method);
    }
    out
}

fn write_metrics_csv(path: &Path, config: &RunConfig, rows: &[MetricsReport]) -> Result<()> {
    let mut w = csv_writer(path, config)?;
    w.write_record(["method", "fidelity", "sparsity", "stability", "robustness", "r2_full", "r2_selected", "selected"])?;
    for r in rows {
        let sel: Vec<String> = r.selected.iter().map(usize::to_string).collect();
        w.write_record([
            r.method.clone(),
            r.fidelity_pct.to_string(),
            r.sparsity.to_string(),
            r.stability.to_string(),
            r.robustness.to_string(),
            r.r2_full.to_string(),
            r.r2_selected.to_string(),
            sel.join(" "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn run_metrics(
    cfg: &RunConfig,
    out: &mut dyn Write,
    run: fn(&Dataset, &BenchmarkConfig) -> Result<Vec<MetricsReport>>,
) -> Result<Vec<MetricsReport>> {
    cfg.validate()?;
    let data = cfg.load_data()?;
    let resolved = cfg.resolve(data.n_features())?;
    let rows = run(&data, &resolved.benchmark_config(data.n_features())?)?;
    out.write_all(render_metrics(&rows).as_bytes())?;
    if let Some(path) = &cfg.out_json {
        write_json(path, &resolved, &rows)?;
    }
    if let Some(path) = &cfg.out_csv {
        write_metrics_csv(path, &resolved, &rows)?;
    }
    Ok(rows)
}

/// The procedure and the four Shapley baselines under the four metrics.
pub fn cmd_benchmark(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<MetricsReport>> {
    run_metrics(cfg, out, benchmark)
}

/// The selection-step variants under the four metrics.
pub fn cmd_ablate(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<MetricsReport>> {
    run_metrics(cfg, out, ablation_suite)
}

/// One checked quantity of a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedBand {
    pub name: String,
    pub band: Band,
    /// Whether the band counts towards the exit status.
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub kind: CalibrationKind,
    pub replicates: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
    pub bands: Vec<NamedBand>,
}

impl CalibrationSummary {
    /// All required bands hold and no replicate failed.
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.bands.iter().all(|b| !b.required || b.band.pass)
    }
}

pub const NULL_LEVELS: [f64; 4] = [0.01, 0.05, 0.1, 0.2];
/// Width, in binomial standard deviations, of the null exceedance bands.
pub const NULL_BAND_SDS: f64 = 2.0;
/// Width of the bands in the naive comparison.
pub const COMPARE_BAND_SDS: f64 = 3.0;
/// Allowed coverage shortfall below the nominal level.
pub const COVERAGE_SLACK: f64 = 0.01;

pub fn run_calibration(kind: CalibrationKind, replicates: usize, seed: u64, alpha: f64) -> Result<CalibrationSummary> {
    let named = |name: &str, band: Band, required: bool| NamedBand { name: name.to_string(), band, required };
    match kind {
        CalibrationKind::NullP => {
            let sim = SimulationConfig { alpha, ..SimulationConfig::null(replicates, seed) };
            let r = calibration::null_p_values(&sim)?;
            let bands = NULL_LEVELS
                .iter()
                .map(|&l| named(&format!("P(p <= {l})"), calibration::band(&r.values, l, NULL_BAND_SDS), true))
                .collect();
            Ok(CalibrationSummary { kind, replicates, failures: r.failures, first_failure: r.first_failure, bands })
        }
        CalibrationKind::Coverage => {
            let sim = SimulationConfig { alpha, ..SimulationConfig::planted(replicates, seed) };
            let (count, r) = calibration::coverage(&sim)?;
            let nominal = 1.0 - alpha;
            let rate = if count.total == 0 { f64::NAN } else { count.covered as f64 / count.total as f64 };
            let lower = nominal - COVERAGE_SLACK;
            let band = Band {
                level: nominal,
                rate,
                sd: calibration::binomial_sd(nominal, count.total),
                lower,
                upper: 1.0,
                pass: rate >= lower,
            };
            Ok(CalibrationSummary {
                kind,
                replicates,
                failures: r.failures,
                first_failure: r.first_failure,
                bands: vec![named("coverage", band, true)],
            })
        }
        CalibrationKind::NaiveCompare => {
            let sim = SimulationConfig { alpha, ..SimulationConfig::null(replicates, seed) };
            let r = calibration::naive_compare(&sim)?;
            let pick = |g: fn(&calibration::NaiveTriple) -> f64| r.values.iter().map(g).collect::<Vec<f64>>();
            let bands = vec![
                named("naive", calibration::band(&pick(|t| t.naive), alpha, COMPARE_BAND_SDS), false),
                named("selective", calibration::band(&pick(|t| t.selective), alpha, COMPARE_BAND_SDS), true),
                named("split", calibration::band(&pick(|t| t.split), alpha, COMPARE_BAND_SDS), true),
            ];
            Ok(CalibrationSummary { kind, replicates, failures: r.failures, first_failure: r.first_failure, bands })
        }
    }
}

pub fn render_calibration(s: &CalibrationSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "calibration {} over {} replicates ({} failed)", s.kind, s.replicates, s.failures);
    let _ = writeln!(out, "Quantity  Target  Empirical  SD  Band  Status");
    for b in &s.bands {
        let status = match (b.required, b.band.pass) {
            (false, _) => "info",
            (true, true) => "pass",
            (true, false) => "FAIL",
        };
        let _ = writeln!(
            out,
            "{}  {}  {}  {}  [{}, {}]  {status}",
            b.name,
            fmt4(b.band.level),
            fmt4(b.band.rate),
            fmt4(b.band.sd),
            fmt4(b.band.lower),
            fmt4(b.band.upper)
        );
    }
    if let Some(e) = &s.first_failure {
        let _ = writeln!(out, "first failure: {e}");
    }
    let _ = writeln!(out, "{}", if s.passed() { "all bands pass" } else { "calibration FAILED" });
    out
}

/// Runs the simulation named by `cfg.calibration`; the caller turns
/// [`CalibrationSummary::passed`] into the exit status.
pub fn cmd_calibrate(cfg: &RunConfig, out: &mut dyn Write) -> Result<CalibrationSummary> {
    cfg.validate()?;
    let resolved = RunConfig {
        replicates: Some(cfg.replicates.unwrap_or(DEFAULT_CALIBRATION_REPLICATES)),
        ..cfg.clone()
    };
    let kind = cfg.calibration.ok_or_else(|| Error::InvalidInput("missing calibration kind".into()))?;
    let s = run_calibration(kind, resolved.replicates.unwrap_or(DEFAULT_CALIBRATION_REPLICATES), cfg.seed, cfg.alpha)?;
    out.write_all(render_calibration(&s).as_bytes())?;
    if let Some(path) = &cfg.out_json {
        write_json(path, &resolved, &s)?;
    }
    if let Some(path) = &cfg.out_csv {
        let mut w = csv_writer(path, &resolved)?;
        w.write_record(["quantity", "target", "empirical", "sd", "lower", "upper", "required", "pass"])?;
        for b in &s.bands {
            w.write_record([
                b.name.clone(),
                b.band.level.to_string(),
                b.band.rate.to_string(),
                b.band.sd.to_string(),
                b.band.lower.to_string(),
                b.band.upper.to_string(),
                b.required.to_string(),
                b.band.pass.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(s)
}

/// Dispatches on `cfg.command` and returns the process exit code.
pub fn run(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    match cfg.command {
        Command::Table => cmd_table(cfg, out).map(|_| 0),
        Command::Benchmark => cmd_benchmark(cfg, out).map(|_| 0),
        Command::Ablate => cmd_ablate(cfg, out).map(|_| 0),
        Command::Calibrate => cmd_calibrate(cfg, out).map(|s| if s.passed() { 0 } else { 1 }),
    }
}
