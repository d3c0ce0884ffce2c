use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tmsv-forge"))
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).env_remove("TMSV_FORGE_THREADS").output().unwrap()
}

fn tmsv_config(r: f64) -> Value {
    json!({
        "schema_version": 1,
        "target": {"kind": "tmsv", "r": r, "phi": 0.0},
        "dims": {"n_max_1": 16, "n_max_2": 16},
        "tomography": {"extent": 1.0, "step": 0.25},
        "bell": {"schedule": [1000, 5000]},
        "seed": 3,
        "output_dir": "unused"
    })
}

fn small_optimize(dims: usize, iterations: usize) -> Value {
    json!({
        "schema_version": 1,
        "target": {"kind": "tmsv", "r": 0.1, "phi": 0.0},
        "dims": {"n_max_1": dims, "n_max_2": dims},
        "optimizer": {"n_starts": 1, "max_iterations": iterations},
        "seed": 5,
        "output_dir": "unused"
    })
}

fn stderr_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().unwrap_or("")).unwrap_or(Value::Null)
}

#[test]
fn negative_squeezing_is_a_config_error_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &tmsv_config(-0.5));
    let out = tmp.path().join("out");
    let o = run(&["scan"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["kind"], "config");
    assert!(!out.exists());
}

#[test]
fn unknown_schema_version_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = tmsv_config(0.5);
    v["schema_version"] = json!(99);
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    assert_eq!(run(&["epr"], &cfg, &out).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_field_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = tmsv_config(0.5);
    v["tomography"]["extnt"] = json!(2.0);
    let cfg = write_config(tmp.path(), "c.json", &v);
    assert_eq!(run(&["scan"], &cfg, &tmp.path().join("out")).status.code(), Some(2));
}

#[test]
fn missing_config_file_fails_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&["bell"], &tmp.path().join("absent.json"), &out);
    assert_ne!(o.status.code(), Some(0));
    assert!(!out.exists());
}

#[test]
fn invalid_thread_cap_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &tmsv_config(0.5));
    let o = bin().args(["bell", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("out")).env("TMSV_FORGE_THREADS", "0").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exact_and_sampled_conflict() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &tmsv_config(0.5));
    let o = run(&["scan", "--exact", "--sampled"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn vacuum_has_no_superposition_ridges() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json!({
        "schema_version": 1, "target": {"kind": "vacuum"}, "dims": {"n_max_1": 30, "n_max_2": 30},
        "tomography": {"planes": ["re_re"], "step": 0.25}, "seed": 1, "output_dir": "unused"
    });
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    let o = run(&["fit-superposition"], &cfg, &out);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stderr_json(&o)["kind"], "degenerate");
    assert!(!out.exists());
}

#[test]
fn unconverged_optimization_exits_3_with_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &small_optimize(4, 1));
    let out = tmp.path().join("out");
    let o = run(&["optimize"], &cfg, &out);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["kind"], "non_convergence");
    let result: Value = serde_json::from_str(&std::fs::read_to_string(out.join("optimize_result.json")).unwrap()).unwrap();
    assert_eq!(result["result"]["converged"], false);
    assert!(out.join("waveform.csv").exists());
}

#[test]
fn large_truncation_is_tagged_extended_runtime() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&["optimize"], &write_config(tmp.path(), "big.json", &small_optimize(17, 1)), &out);
    assert!(matches!(o.status.code(), Some(0 | 3)));
    let result: Value = serde_json::from_str(&std::fs::read_to_string(out.join("optimize_result.json")).unwrap()).unwrap();
    assert_eq!(result["tags"], json!(["extended-runtime"]));

    let out = tmp.path().join("small");
    run(&["optimize"], &write_config(tmp.path(), "small.json", &small_optimize(4, 1)), &out);
    let result: Value = serde_json::from_str(&std::fs::read_to_string(out.join("optimize_result.json")).unwrap()).unwrap();
    assert_eq!(result["tags"], json!([]));
}

#[test]
fn seed_override_changes_the_bell_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &tmsv_config(0.5));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&["bell"], &cfg, &a).status.code(), Some(0));
    assert_eq!(run(&["bell", "--seed", "4"], &cfg, &b).status.code(), Some(0));
    let ta = std::fs::read_to_string(a.join("bell_trace.csv")).unwrap();
    let tb = std::fs::read_to_string(b.join("bell_trace.csv")).unwrap();
    assert_ne!(ta, tb);
    let jb: Value = serde_json::from_str(&std::fs::read_to_string(b.join("bell_result.json")).unwrap()).unwrap();
    assert_eq!(jb["seed"], 4);
}

#[test]
fn bell_trace_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &tmsv_config(0.5));
    let out = tmp.path().join("out");
    run(&["bell"], &cfg, &out);
    let trace = std::fs::read_to_string(out.join("bell_trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "# classical_bound=2 tmsv_limit=2.32");
    assert_eq!(lines[1], "total_shots,bell_signal,std_dev,classical_bound,tmsv_limit");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("5000,"));
}

#[test]
fn exact_scan_writes_every_plane() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &tmsv_config(0.5));
    let out = tmp.path().join("out");
    assert_eq!(run(&["scan", "--exact"], &cfg, &out).status.code(), Some(0));
    for plane in ["re_re", "im_im", "re_im", "im_re"] {
        let csv = std::fs::read_to_string(out.join(format!("chi_{plane}.csv"))).unwrap();
        // 9×9 grid plus header
        assert_eq!(csv.lines().count(), 82, "{plane}");
    }
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("scan_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["command"], "scan");
}

#[test]
fn sampled_flag_and_shots_override() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = tmsv_config(0.5);
    v["tomography"]["planes"] = json!(["re_re"]);
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    assert_eq!(run(&["scan", "--sampled", "--shots", "77"], &cfg, &out).status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("chi_re_re.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert!(row.ends_with(",77"), "{row}");
}

#[test]
fn waveform_source_feeds_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let opt_out = tmp.path().join("opt");
    let mut v = small_optimize(4, 400);
    v["optimizer"]["n_starts"] = json!(2);
    run(&["optimize"], &write_config(tmp.path(), "opt.json", &v), &opt_out);
    let wf = opt_out.join("waveform.csv");
    assert!(wf.exists());

    let mut e = small_optimize(4, 40);
    e["state"] = json!({"source": "waveform", "path": wf});
    e["tomography"] = json!({"planes": ["re_re", "im_im"], "n_max": 16, "extent": 1.5, "step": 0.25});
    let out = tmp.path().join("epr");
    let o = run(&["epr"], &write_config(tmp.path(), "epr.json", &e), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("epr_result.json")).unwrap()).unwrap();
    assert!(report["state"]["source"].as_str().unwrap().starts_with("waveform:"));
    assert!(report["state"]["postselection_probability"].as_f64().unwrap() > 0.5);
    assert!(report["epr"]["reid_value"].as_f64().unwrap() < 0.25);
}
