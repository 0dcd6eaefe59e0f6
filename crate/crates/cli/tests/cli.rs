use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_complab"))
}

fn run(args: &[&str], cfg: Option<&Path>, out: &Path) -> Output {
    let mut cmd = bin();
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = cfg {
        cmd.arg("--config").arg(c);
    }
    cmd.output().expect("spawn complab")
}

fn result_dir(o: &Output) -> PathBuf {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8_lossy(&o.stdout).trim())
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn malformed_json_exits_2_with_position() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.json", "{\"tree\": {\"leaf\": \n");
    let o = run(&["laminate"], Some(&cfg), tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn missing_config_and_unknown_fields_are_input_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["cell"], None, tmp.path()).status.code(), Some(2));
    let cfg = write(tmp.path(), "c.json", r#"{"geometry": "checkerboard@8", "sigmaa": [2]}"#);
    assert_eq!(run(&["cell"], Some(&cfg), tmp.path()).status.code(), Some(2));
    let cfg = write(tmp.path(), "g.json", r#"{"geometry": "nonsense@8"}"#);
    assert_eq!(run(&["cell"], Some(&cfg), tmp.path()).status.code(), Some(2));
}

#[test]
fn no_convergence_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"geometry": "random(2,0.5)@32", "sigma": [1000], "checks": [], "max_iter": 1}"#,
    );
    assert_eq!(run(&["cell"], Some(&cfg), tmp.path()).status.code(), Some(3));
}

#[test]
fn identity_tree_returns_sigma() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "id.json", r#"{"tree": {"leaf": {"phase": 1}}, "sigma": [2, 5, [3, 4]]}"#);
    let dir = result_dir(&run(&["laminate"], Some(&cfg), tmp.path()));
    let rows = csv_rows(&dir.join("sigma_star.csv"));
    assert_eq!(rows.len(), 3);
    for r in rows {
        // sigma_re,sigma_im,s11_re,s11_im,s12_re,s12_im,s21_re,s21_im,s22_re,s22_im,kd
        assert_eq!(r[2], r[0]);
        assert_eq!(r[3], r[1]);
        assert_eq!(r[8], r[0]);
        assert_eq!(r[9], r[1]);
        assert_eq!(r[4].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn tree_from_file_path_is_hashed_into_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "tree.json",
        r#"{"branch": {"a": {"leaf": {"phase": 1}}, "b": {"leaf": {"phase": 2}}, "normal": [1, 0], "fraction": 0.5}}"#,
    );
    let cfg = write(tmp.path(), "lam.json", r#"{"tree": "tree.json", "sigma": [3]}"#);
    let dir = result_dir(&run(&["laminate"], Some(&cfg), tmp.path()));
    let env: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("envelope.json")).unwrap()).unwrap();
    assert_eq!(env["inputs"][0][0], "tree");
    let rows = csv_rows(&dir.join("sigma_star.csv"));
    // harmonic mean across, arithmetic mean along the layers
    assert!((rows[0][2].parse::<f64>().unwrap() - 1.5).abs() < 1e-14);
    assert!((rows[0][8].parse::<f64>().unwrap() - 2.0).abs() < 1e-14);
}

#[test]
fn convex_twowell_has_no_gap() {
    let tmp = tempfile::tempdir().unwrap();
    // identical wells: W is itself quadratic and convex
    let well = r#"{"n": 1, "blocks": [[[2, 0.5, 0.5, 1]]], "V": [0.1, -0.2], "c": 0.3}"#;
    let cfg = write(
        tmp.path(),
        "tw.json",
        &format!(r#"{{"spec": {{"m": 1, "K1": {well}, "K2": {well}}}, "grid": [[-1, 1, 3], [-1, 1, 3]]}}"#),
    );
    let dir = result_dir(&run(&["twowell"], Some(&cfg), tmp.path()));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary["max_gap"].as_f64().unwrap().abs() <= 1e-8, "{summary}");
    assert_eq!(summary["points"], 9);
    assert!(summary["caveat"].as_str().unwrap().contains("sufficient"));
    let header = std::fs::read_to_string(dir.join("gap_scan.csv")).unwrap();
    assert!(header.starts_with("F11,F21,lower,upper,gap\n"));
}

#[test]
fn incompressible_auxetic_record() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "b.json",
        r#"{"auxetic": [{"kappa": "inf", "mu": 1}], "polycrystal": [{"kappa": "inf", "mu": 1, "eps": 1e-9}]}"#,
    );
    let dir = result_dir(&run(&["bounds"], Some(&cfg), tmp.path()));
    let recs: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("records.json")).unwrap()).unwrap();
    assert_eq!(recs[0]["kind"], "auxetic-limit");
    assert_eq!(recs[0]["mu_star"].as_f64(), Some(0.8));
    assert_eq!(recs[0]["kappa_star"].as_f64(), Some(0.0));
    let variants: Vec<&str> = recs.as_array().unwrap()[1..].iter().map(|r| r["variant"].as_str().unwrap()).collect();
    assert_eq!(variants, ["as-printed", "c1122-variant"]);
}

#[test]
fn phase_interchange_sweep_on_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let sigma: Vec<String> = (0..20).map(|i| format!("{}", 0.1 + 9.9 * i as f64 / 19.0)).collect();
    let cfg = write(
        tmp.path(),
        "b.json",
        &format!(
            r#"{{"phase_interchange": {{"fractions": [0.1, 0.5, 0.9], "sigma": [{}]}}}}"#,
            sigma.join(",")
        ),
    );
    let dir = result_dir(&run(&["bounds"], Some(&cfg), tmp.path()));
    let rows = csv_rows(&dir.join("phase_interchange.csv"));
    assert_eq!(rows.len(), 60);
    for r in rows {
        assert!(r[2].parse::<f64>().unwrap() >= 2.0 - 1e-9);
        assert_eq!(r[3], "true");
    }
}

#[test]
fn checkerboard_cell_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"geometry": "checkerboard@64", "sigma": [4], "cofactor": true}"#);
    let dir = result_dir(&run(&["cell"], Some(&cfg), tmp.path()));
    let rows = csv_rows(&dir.join("sigma_star.csv"));
    let s11: f64 = rows[0][2].parse().unwrap();
    assert!((s11 - 2.0).abs() < 0.02, "{s11}");
    let checks = std::fs::read_to_string(dir.join("checks.csv")).unwrap();
    assert!(checks.starts_with("check,provenance,residual,tolerance,pass\n"));
    assert!(checks.lines().skip(1).all(|l| l.ends_with(",true")), "{checks}");
    let cof: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("cofactor.json")).unwrap()).unwrap();
    assert_eq!(cof["det"]["negative_fraction"].as_f64(), Some(0.0));
}

#[test]
fn cache_is_reused_unless_forced() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let first = result_dir(&run(&["generate-geometry", "random(7,0.5)@16"], None, &out));
    let envelope = first.join("envelope.json");
    std::fs::write(&envelope, std::fs::read_to_string(&envelope).unwrap().replace("timing", "timing_marker")).unwrap();
    let second = result_dir(&run(&["generate-geometry", "random(7,0.5)@16"], None, &out));
    assert_eq!(first, second);
    assert!(std::fs::read_to_string(&envelope).unwrap().contains("timing_marker"));
    result_dir(&run(&["generate-geometry", "random(7,0.5)@16", "--force"], None, &out));
    assert!(!std::fs::read_to_string(&envelope).unwrap().contains("timing_marker"));
    // a different encoding is a different experiment
    let dense = result_dir(&run(&["generate-geometry", "random(7,0.5)@16", "--encoding", "dense"], None, &out));
    assert_ne!(first, dense);
}

#[test]
fn envelope_records_defaults_and_payload_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"geometry": "checkerboard@16"}"#);
    let dir = result_dir(&run(&["cell", "--tol", "1e-9"], Some(&cfg), tmp.path()));
    let env: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("envelope.json")).unwrap()).unwrap();
    assert_eq!(env["config"]["solver_tol"].as_f64(), Some(1e-9));
    assert_eq!(env["config"]["scheme"], "rotated");
    assert_eq!(env["subcommand"], "cell");
    assert!(dir.file_name().unwrap().to_string_lossy().starts_with("cell-"));
    for p in env["payload"].as_array().unwrap() {
        let bytes = std::fs::read(dir.join(p["file"].as_str().unwrap())).unwrap();
        assert_eq!(p["sha256"].as_str().unwrap(), complab::config::sha256_hex(&bytes));
    }
}

#[test]
fn same_seed_twowell_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = r#"{"m": 1, "K1": {"n": 1, "blocks": [[[2, 0.3, 0.3, 1]]], "V": [0, 0], "c": 0}, "K2": {"n": 1, "blocks": [[[1, 0, 0, 1.5]]], "V": [-0.5, 0.2], "c": 0.4}}"#;
    let cfg = write(
        tmp.path(),
        "tw.json",
        &format!(r#"{{"spec": {spec}, "points": [[0.2, 0.1], [0.5, -0.3]], "budget": {{"restarts": 2}}}}"#),
    );
    let a = result_dir(&run(&["twowell", "--seed", "3"], Some(&cfg), &tmp.path().join("a")));
    let b = result_dir(&run(&["twowell", "--seed", "3", "--jobs", "2"], Some(&cfg), &tmp.path().join("b")));
    for f in ["gap_scan.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    let c = result_dir(&run(&["twowell", "--seed", "4"], Some(&cfg), &tmp.path().join("a")));
    assert_ne!(a.file_name(), c.file_name());
}
