use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use phitest::report::{read_config_file, run, Command, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// SHAP screening, surrogate selection and selective inference for
/// black-box regressors.
#[derive(Parser)]
#[command(name = "phitest", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Feature table with SHAP scores, coefficients, p-values and intervals.
    Table(Shared),
    /// The procedure against the Shapley baselines under four metrics.
    Benchmark(Shared),
    /// Type-I error and coverage simulations.
    Calibrate {
        /// null_p, coverage or naive_compare.
        kind: Option<String>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Variants of the selection step under the same metrics.
    Ablate(Shared),
}

#[derive(Args)]
struct Shared {
    /// Flat `key = value` file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV with a header row.
    #[arg(long)]
    data: Option<String>,
    /// none, airquality or concrete.
    #[arg(long)]
    recipe: Option<String>,
    /// Target column (required with recipe none).
    #[arg(long)]
    target: Option<String>,
    /// linear, gbt, gbt:<key=value,...> or external:<path>.
    #[arg(long)]
    backbone: Option<String>,
    /// Second backbone for the robustness metric.
    #[arg(long = "backbone-b")]
    backbone_b: Option<String>,
    /// exact, kernel or auto.
    #[arg(long)]
    engine: Option<String>,
    /// lars, stepwise or lasso:<lambda>.
    #[arg(long)]
    selector: Option<String>,
    /// full or split.
    #[arg(long)]
    mode: Option<String>,
    /// Number of screened features.
    #[arg(short = 'M')]
    m: Option<String>,
    /// Number of selected features.
    #[arg(short = 'K')]
    k: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    #[arg(long = "train-fraction")]
    train_fraction: Option<String>,
    /// Cap on the rows whose attributions are computed.
    #[arg(long = "shap-rows")]
    shap_rows: Option<String>,
    #[arg(long = "out-json")]
    out_json: Option<String>,
    #[arg(long = "out-csv")]
    out_csv: Option<String>,
    /// Write the attribution matrix as CSV.
    #[arg(long = "dump-shap")]
    dump_shap: Option<String>,
    /// Read the attribution matrix from a CSV written by --dump-shap.
    #[arg(long = "shap-in")]
    shap_in: Option<String>,
}

impl Shared {
    fn pairs(&self) -> Vec<(String, String)> {
        let flags = [
            ("data", &self.data),
            ("recipe", &self.recipe),
            ("target", &self.target),
            ("backbone", &self.backbone),
            ("backbone-b", &self.backbone_b),
            ("engine", &self.engine),
            ("selector", &self.selector),
            ("mode", &self.mode),
            ("m", &self.m),
            ("k", &self.k),
            ("alpha", &self.alpha),
            ("seed", &self.seed),
            ("replicates", &self.replicates),
            ("train-fraction", &self.train_fraction),
            ("shap-rows", &self.shap_rows),
            ("out-json", &self.out_json),
            ("out-csv", &self.out_csv),
            ("dump-shap", &self.dump_shap),
            ("shap-in", &self.shap_in),
        ];
        flags.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))).collect()
    }
}

fn build_config(command: Command, shared: &Shared, extra: Vec<(String, String)>) -> anyhow::Result<RunConfig> {
    let mut pairs = match &shared.config {
        Some(path) => read_config_file(path).with_context(|| format!("reading config {}", path.display()))?,
        None => Vec::new(),
    };
    pairs.extend(shared.pairs());
    pairs.extend(extra);
    Ok(RunConfig::from_pairs(command, &pairs)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match &cli.command {
        Sub::Table(s) => build_config(Command::Table, s, Vec::new()),
        Sub::Benchmark(s) => build_config(Command::Benchmark, s, Vec::new()),
        Sub::Ablate(s) => build_config(Command::Ablate, s, Vec::new()),
        Sub::Calibrate { kind, shared } => build_config(
            Command::Calibrate,
            shared,
            kind.iter().map(|k| ("calibration".to_string(), k.clone())).collect(),
        ),
    };
    let outcome = config.and_then(|cfg| Ok(run(&cfg, &mut std::io::stdout().lock())?));
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code.clamp(1, 255) as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
