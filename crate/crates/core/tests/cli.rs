use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vlevels"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn green_check_passes_without_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["green-check"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path());
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["command"], "green-check");
    assert!(dir.path().join("green_check.json").exists());
}

#[test]
fn unknown_key_is_a_config_error_with_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1, "dimension": 1, "discretization": {"per_unit": 64, "colour": 3}}"#,
    )
    .unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "bands"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/discretization/colour"), "{err}");
    assert_eq!(manifest(dir.path())["exit_code"], 2);
}

#[test]
fn invalid_value_is_a_config_error_with_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"schema_version": 1, "dimension": 1, "couplings": [-0.1, 0.0]}"#).unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "predict"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/couplings/1"));
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["bands"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_on_free_well_improves_with_smaller_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("d1_free_box.json");
    let o = run(&["--config", cfg.to_str().unwrap(), "compare"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("compare.csv"));
    assert_eq!(
        header,
        ["gamma", "k", "rho_pred", "rho_pencil", "rho_oracle", "rel_err_pred", "rel_err_pencil"]
    );
    assert_eq!(rows.len(), 3);
    // rows follow the config order, |gamma| decreasing
    let errs: Vec<f64> = rows.iter().map(|r| r[5].parse::<f64>().unwrap().abs()).collect();
    assert!(errs.windows(2).all(|p| p[1] < p[0]), "{errs:?}");
    // at least 12 significant digits in every number
    let mantissa = rows[0][4].split('e').next().unwrap().replace(['-', '.'], "");
    assert!(mantissa.len() >= 12, "{}", rows[0][4]);
    let verdict: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["pass"], true);
    let m = manifest(dir.path());
    assert_eq!(m["exit_code"], 0);
    assert!(m["inputs_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn outputs_are_identical_across_runs_and_thread_counts() {
    let cfg = config("d1_mathieu.json");
    let mut outputs = Vec::new();
    for threads in ["1", "1", "2"] {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&["--config", cfg.to_str().unwrap(), "--threads", threads, "bands"], dir.path());
        assert_eq!(o.status.code(), Some(0));
        outputs.push(std::fs::read(dir.path().join("bands.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);

    let cfg = config("d1_free_box.json");
    let mut roots = Vec::new();
    for threads in ["1", "2"] {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&["--config", cfg.to_str().unwrap(), "--threads", threads, "pencil"], dir.path());
        assert_eq!(o.status.code(), Some(0));
        roots.push(std::fs::read(dir.path().join("roots.csv")).unwrap());
    }
    assert_eq!(roots[0], roots[1]);
}

#[test]
fn sector_oracle_runs_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("circle.json");
    let mut c: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config("circle_model.json")).unwrap()).unwrap();
    c["couplings"] = serde_json::json!([-0.05]);
    std::fs::write(&cfg, c.to_string()).unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "oracle"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&dir.path().join("oracle.csv"));
    assert!(rows.len() >= 5);
}

#[test]
fn indefinite_weight_has_no_branches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("d1_signed.json");
    let o = run(&["--config", cfg.to_str().unwrap(), "pencil"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
