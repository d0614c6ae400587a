use phitest::data::{make_split, synth_gaussian, Dataset};
use phitest::pipeline::{baseline_topk, fidelity, prepare_replicate, FeatureTable, MetricsReport};
use phitest::predictors::export_predictions;
use phitest::report::{
    cmd_benchmark, cmd_calibrate, cmd_table, read_json, run_calibration, table_backbone, CalibrationKind, Command,
    RunConfig, TABLE_HEADER,
};
use phitest::shap::{EngineKind, ShapMatrix};
use std::path::{Path, PathBuf};
use std::process::Command as Process;

fn write_dataset(dir: &Path, seed: u64) -> PathBuf {
    let ds = synth_gaussian(300, 6, &[1.5, -1.0, 0.0, 0.6, 0.0, 0.0], 0.7, seed).unwrap();
    let path = dir.join("data.csv");
    ds.write_csv(&path).unwrap();
    path
}

fn config(command: Command, pairs: &[(&str, String)]) -> RunConfig {
    let pairs: Vec<(String, String)> = pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    RunConfig::from_pairs(command, &pairs).unwrap()
}

fn base_pairs(data: &Path) -> Vec<(&'static str, String)> {
    vec![
        ("data", data.display().to_string()),
        ("target", "y".into()),
        ("backbone", "gbt:trees=30".into()),
        ("shap-rows", "60".into()),
        ("seed", "3".into()),
    ]
}

#[test]
fn table_json_mirror_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 1);
    let mut pairs = base_pairs(&data);
    pairs.push(("out-json", dir.path().join("t.json").display().to_string()));
    pairs.push(("out-csv", dir.path().join("t.csv").display().to_string()));
    let cfg = config(Command::Table, &pairs);
    let mut text = Vec::new();
    let table = cmd_table(&cfg, &mut text).unwrap();
    let art = read_json::<FeatureTable>(dir.path().join("t.json")).unwrap();
    assert_eq!(art.result, table);
    assert_eq!(art.tool_version, phitest::TOOL_VERSION);
    assert_eq!(art.config, cfg.resolve(6).unwrap());
    let text = String::from_utf8(text).unwrap();
    assert_eq!(text.lines().next().unwrap(), TABLE_HEADER);
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(csv.starts_with(&format!("# {}\n# config: ", phitest::TOOL_VERSION)));
    assert!(csv.contains("Residual (unselected)"));
}

#[test]
fn external_predictions_reproduce_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = write_dataset(dir.path(), 2);
    let shap_path = dir.path().join("shap.csv");
    let preds_path = dir.path().join("preds.csv");
    let mut pairs = base_pairs(&data_path);
    pairs.push(("dump-shap", shap_path.display().to_string()));
    let built_in = config(Command::Table, &pairs);
    let original = cmd_table(&built_in, &mut std::io::sink()).unwrap();

    let data: Dataset = built_in.load_data().unwrap();
    let split = make_split(data.n_rows(), 3, built_in.train_fraction, true).unwrap();
    let f = table_backbone(&built_in.resolve(6).unwrap(), &data, &split.train_idx).unwrap();
    export_predictions(f.as_ref(), &data.x, &preds_path).unwrap();

    let mut ext_pairs = base_pairs(&data_path);
    ext_pairs.push(("backbone", format!("external:{}", preds_path.display())));
    ext_pairs.push(("shap-in", shap_path.display().to_string()));
    let external = cmd_table(&config(Command::Table, &ext_pairs), &mut std::io::sink()).unwrap();

    let mut supplied_pairs = base_pairs(&data_path);
    supplied_pairs.push(("shap-in", shap_path.display().to_string()));
    let supplied = cmd_table(&config(Command::Table, &supplied_pairs), &mut std::io::sink()).unwrap();

    assert_eq!(external, supplied);
    assert_eq!(external.rows, original.rows);
    assert_eq!(external.selected, original.selected);
    assert_eq!(external.residual_shap, original.residual_shap);
    assert_eq!(original.provenance.engine, EngineKind::Exact);
    assert_eq!(external.provenance.engine, EngineKind::Supplied);
}

#[test]
fn shap_dump_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let names: Vec<String> = (0..3).map(|j| format!("f{j}")).collect();
    let phi = nalgebra::DMatrix::from_fn(4, 3, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0) - 0.123456789);
    let s = ShapMatrix::new(phi, 0.7 / 3.0, EngineKind::Exact);
    let path = dir.path().join("s.csv");
    s.write_csv(&names, &["provenance line".into()], &path).unwrap();
    let back = ShapMatrix::read_csv(&names, &path).unwrap();
    assert_eq!(back.phi, s.phi);
    assert_eq!(back.base_value, s.base_value);
    assert_eq!(back.global_scores, s.global_scores);
    let wrong: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
    assert!(ShapMatrix::read_csv(&wrong, &path).is_err());
}

#[test]
fn benchmark_rows_and_top_k_fidelity_delegation() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = write_dataset(dir.path(), 4);
    let mut pairs = base_pairs(&data_path);
    pairs.push(("replicates", "2".into()));
    pairs.push(("out-json", dir.path().join("b.json").display().to_string()));
    let cfg = config(Command::Benchmark, &pairs);
    let rows = cmd_benchmark(&cfg, &mut std::io::sink()).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(names, ["phi-test", "SHAP-TopK", "SPVIM-Boot", "SHAP-HT", "StableSHAP"]);

    let data = cfg.load_data().unwrap();
    let bench = cfg.benchmark_config(6).unwrap();
    let rep = prepare_replicate(&data, &bench, 0, 0).unwrap();
    let mut topk = baseline_topk(&rep.shap, bench.phi.k).unwrap();
    topk.sort_unstable();
    let direct = fidelity(&rep.backbone, &data, &rep.split, &topk).unwrap();
    assert_eq!(rows[1].fidelity_pct, direct.fidelity_pct);
    assert_eq!(rows[1].sparsity, topk.len());

    let art = read_json::<Vec<MetricsReport>>(dir.path().join("b.json")).unwrap();
    assert_eq!(art.result.len(), 5);
    assert_eq!(art.result[0].selected, rows[0].selected);
}

#[test]
fn calibrate_exit_status_follows_bands() {
    let cfg = config(Command::Calibrate, &[("calibration", "coverage".into()), ("replicates", "200".into())]);
    let mut out = Vec::new();
    let s = cmd_calibrate(&cfg, &mut out).unwrap();
    assert_eq!(s, run_calibration(CalibrationKind::Coverage, 200, 0, 0.05).unwrap());
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("calibration coverage over 200 replicates"));

    let status = Process::new(env!("CARGO_BIN_EXE_phitest"))
        .args(["calibrate", "coverage", "--replicates", "200"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(if s.passed() { 0 } else { 1 }));
}

#[test]
fn binary_applies_config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 5);
    let conf = dir.path().join("run.conf");
    let json = dir.path().join("out.json");
    std::fs::write(
        &conf,
        format!(
            "# table settings\ndata = {}\ntarget = y\nbackbone = linear\nselector = stepwise\nmode = full\nK = 2\nseed = 4\nshap-rows = 50\nout-json = {}\n",
            data.display(),
            json.display()
        ),
    )
    .unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_phitest"))
        .args(["table", "--config", conf.to_str().unwrap(), "-K", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().next().unwrap(), TABLE_HEADER);
    let art = read_json::<FeatureTable>(&json).unwrap();
    assert_eq!(art.config.k, Some(3));
    assert_eq!(art.config.seed, 4);
    assert_eq!(art.result.selected.len(), 3);
    assert!(art.result.rows.iter().filter(|r| r.selected).all(|r| r.inference.as_ref().unwrap().truncation.is_some()));
}

#[test]
fn binary_reports_errors_with_nonzero_exit() {
    let out = Process::new(env!("CARGO_BIN_EXE_phitest"))
        .args(["table", "--data", "/nonexistent/file.csv", "--target", "y"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = Process::new(env!("CARGO_BIN_EXE_phitest"))
        .args(["table", "--data", "x.csv", "--target", "y", "--mode", "full"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("polyhedral"));
}
