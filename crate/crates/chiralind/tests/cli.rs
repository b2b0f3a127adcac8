//! End-to-end tests of the `chiralind` binary: exit codes, output formats,
//! config diagnostics, and determinism across thread counts and reruns.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chiralind"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const CLEAN_TOPO: &str = r#"{
  "model": {
    "channels": 1, "length": 120,
    "a_dist": {"kind": "const", "value": 1.0},
    "b_dist": {"kind": "const", "value": 0.5},
    "structure": "clean", "seed": 7
  },
  "run": {"methods": ["bulk_sigma", "bulk_fermi", "edge_window", "lyapunov", "winding"]}
}"#;

#[test]
fn missing_config_flag_is_usage_error() {
    let out = bin().arg("index").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--config"), "stderr: {}", stderr(&out));
}

#[test]
fn nonexistent_config_path_is_an_error() {
    let out = bin()
        .args(["index", "--config", "/no/such/file.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"), "stderr: {}", stderr(&out));
}

#[test]
fn malformed_json_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "bad.json", "{\n  \"model\": {,}\n}");
    let out = bin().args(["index", "--config", &path]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("line 2"), "stderr: {err}");
    assert!(err.contains("column"), "stderr: {err}");
}

#[test]
fn empty_methods_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CLEAN_TOPO.replace(
        r#"["bulk_sigma", "bulk_fermi", "edge_window", "lyapunov", "winding"]"#,
        "[]",
    );
    let path = write_config(dir.path(), "empty.json", &cfg);
    let out = bin().args(["index", "--config", &path]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("methods"), "stderr: {}", stderr(&out));
}

#[test]
fn index_on_clean_topological_chain_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "clean.json", CLEAN_TOPO);
    let out = bin().args(["index", "--config", &path]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["bulk"], 1);
    assert_eq!(report["edge"], 1);
    assert_eq!(report["lyapunov_count"], 1);
    assert_eq!(report["winding"], 1);
    assert_eq!(report["agree"], true);
}

#[test]
fn winding_subcommand_emits_the_integer() {
    let dir = tempfile::tempdir().unwrap();
    for (b, want) in [(0.5, 1), (2.0, 0)] {
        let cfg = format!(
            r#"{{
              "model": {{
                "channels": 1, "length": 2,
                "a_dist": {{"kind": "const", "value": 1.0}},
                "b_dist": {{"kind": "const", "value": {b}}},
                "structure": "clean", "seed": 0
              }},
              "run": {{"methods": ["winding"]}}
            }}"#
        );
        let path = write_config(dir.path(), &format!("w{want}.json"), &cfg);
        let out = bin().args(["winding", "--config", &path]).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
        let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(v["index"], want, "B = {b}");
    }
}

#[test]
fn winding_on_disordered_model_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CLEAN_TOPO
        .replace(r#""b_dist": {"kind": "const", "value": 0.5}"#,
                 r#""b_dist": {"kind": "log_normal", "mu_log": -0.5, "sigma_log": 0.4}"#)
        .replace(r#""structure": "clean""#, r#""structure": "scalar_diag""#);
    let path = write_config(dir.path(), "dis.json", &cfg);
    let out = bin().args(["winding", "--config", &path]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("translation-invariant"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn csv_format_has_fixed_header_and_field_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "clean.json", CLEAN_TOPO);
    let out = bin()
        .args(["index", "--config", &path, "--format", "csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(
        header,
        "seed,point_value,L,N,bulk_raw,bulk,edge_raw,edge,lyap_count,\
         lyap_confident,winding,min_abs_eig,zero_gap_ratio,mu_fit,zero_margin,agree,status"
    );
    let row = lines.next().unwrap();
    assert_eq!(row.split(',').count(), header.split(',').count());
    assert!(row.ends_with(",ok"), "row: {row}");
    assert_eq!(lines.next(), None);
}

#[test]
fn out_flag_writes_the_file_instead_of_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "clean.json", CLEAN_TOPO);
    let out_path = dir.path().join("report.json");
    let out = bin()
        .args(["index", "--config", &path, "--out", out_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).is_empty());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report["agree"], true);
}

fn scan_config() -> String {
    r#"{
  "model": {
    "channels": 1, "length": 150,
    "a_dist": {"kind": "const", "value": 1.0},
    "b_dist": {"kind": "log_normal", "mu_log": -0.5, "sigma_log": 0.4},
    "structure": "scalar_diag", "seed": 11
  },
  "run": {"methods": ["lyapunov"], "format": "csv"},
  "sweep": {"parameter": "mu_log", "values": [-0.5, 0.5], "seeds_per_point": 3}
}"#
    .to_string()
}

#[test]
fn phase_scan_rows_follow_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "scan.json", &scan_config());
    let out = bin().args(["phase-scan", "--config", &path]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    // first grid point is the topological side, second the trivial side
    for row in &rows[..3] {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[8], "1", "row: {row}");
    }
    for row in &rows[3..] {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[8], "0", "row: {row}");
    }
}

#[test]
fn reruns_and_thread_env_never_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "scan.json", &scan_config());
    let run = |threads: Option<&str>| {
        let mut cmd = bin();
        cmd.args(["phase-scan", "--config", &path]);
        match threads {
            Some(t) => cmd.env("CHIRALIND_THREADS", t),
            None => cmd.env_remove("CHIRALIND_THREADS"),
        };
        let out = cmd.output().unwrap();
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
        stdout(&out)
    };
    let base = run(None);
    assert_eq!(base, run(None), "rerun changed the output");
    assert_eq!(base, run(Some("3")), "CHIRALIND_THREADS changed the output");
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scan_config();
    let path = write_config(dir.path(), "scan.json", &cfg);
    let lyap = |seed: &str| {
        let out = bin()
            .args(["lyapunov", "--config", &path, "--seed", seed])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
        let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        v["exponents"][0].as_f64().unwrap()
    };
    assert_ne!(lyap("1"), lyap("2"), "seed override had no effect");
}

#[test]
fn critical_chain_exits_with_nonconvergence_code() {
    let dir = tempfile::tempdir().unwrap();
    // fresh disorder over the whole sweep: the exponent estimate is within
    // noise of zero, so the sign count must be flagged as non-confident
    let cfg = r#"{
  "model": {
    "channels": 1, "length": 100000,
    "a_dist": {"kind": "const", "value": 1.0},
    "b_dist": {"kind": "log_normal", "mu_log": 0.0, "sigma_log": 0.4},
    "structure": "scalar_diag", "seed": 3
  },
  "run": {"methods": ["lyapunov"]}
}"#;
    let path = write_config(dir.path(), "critical.json", cfg);
    let out = bin().args(["lyapunov", "--config", &path]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "stdout: {}", stdout(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["confident"], false);
}
