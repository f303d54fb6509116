use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "vit:img=32,patch=8,dim=16,depth=12,heads=2,mlp=2,classes=10,eps=0.000001";

fn vitmerge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vitmerge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = vitmerge(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json report")
}

fn synth(dir: &Path, images: usize) {
    let out = vitmerge(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--model",
        SMALL,
        "--images",
        &images.to_string(),
        "--seed",
        "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn flops_deit_s_unpruned() {
    let r = ok_json(&["flops", "--model", "deit-s", "--json"]);
    assert_eq!(r["summary"]["total_flops"], 4_540_695_552u64);
    assert_eq!(r["rows"].as_array().unwrap().len(), 12);
}

#[test]
fn flops_pruned_schedules() {
    let r = ok_json(&["flops", "--model", "deit-s", "--keep-rate", "0.7", "--prune-layers", "4,7,10", "--json"]);
    let total = r["summary"]["total_flops"].as_f64().unwrap();
    assert!((total / 1e9 - 2.94).abs() < 0.01);
    let red = r["summary"]["reduction_pct"].as_f64().unwrap();
    assert!((red - 35.0).abs() < 1.0, "{red}");

    let r = ok_json(&["flops", "--model", "deit-b", "--keep-rate", "0.7", "--prune-layers", "4,7,10", "--json"]);
    let total = r["summary"]["total_flops"].as_f64().unwrap() / 1e9;
    assert!((total - 11.5).abs() < 0.2, "{total}");
}

#[test]
fn flops_geometry_flags_override_preset() {
    let r = ok_json(&["flops", "--model", "deit-s", "--depth", "6", "--json"]);
    assert_eq!(r["summary"]["total_flops"], 4_540_695_552u64 / 2);
}

#[test]
fn flops_invalid_keep_rate_is_a_usage_error() {
    let out = vitmerge(&["flops", "--model", "deit-s", "--keep-rate", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("keep rate"));
}

#[test]
fn flops_rejects_out_of_range_layer() {
    let out = vitmerge(&["flops", "--model", "deit-s", "--keep-rate", "0.7", "--prune-layers", "4,13"]);
    assert!(!out.status.success());
}

#[test]
fn infer_is_deterministic_and_identity_schedule_matches() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 1);
    let w = path(dir.path(), "weights.vpkw");
    let x = path(dir.path(), "inputs/img_0000.vpkt");
    let base = ok_json(&["infer", "--weights", &w, "--input", &x, "--json"]);
    let again = ok_json(&["infer", "--weights", &w, "--input", &x, "--json"]);
    assert_eq!(base["rows"], again["rows"]);
    let top = base["rows"].as_array().unwrap();
    assert_eq!(top.len(), 5);
    assert!(top.iter().all(|t| t["logit"].as_f64().unwrap().is_finite()));

    let ident = ok_json(&[
        "infer", "--weights", &w, "--input", &x, "--keep-rate", "1.0", "--pairs", "0", "--json",
    ]);
    assert_eq!(base["rows"], ident["rows"]);
}

#[test]
fn infer_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 1);
    let trace = path(dir.path(), "trace.json");
    let out = vitmerge(&[
        "infer",
        "--weights",
        &path(dir.path(), "weights.vpkw"),
        "--input",
        &path(dir.path(), "inputs/img_0000.vpkt"),
        "--keep-rate",
        "0.5",
        "--trace",
        &trace,
    ]);
    assert!(out.status.success());
    let t: Value = serde_json::from_slice(&std::fs::read(&trace).unwrap()).unwrap();
    let layers = t["layers"].as_array().unwrap();
    assert_eq!(layers.len(), 12);
    assert_eq!(layers[3]["tokens_mhsa"], 17);
    assert_eq!(layers[3]["tokens_ffn"], 9);
    assert!(layers[3]["prune"].is_object());
    assert!(layers[0]["prune"].is_null());
}

#[test]
fn infer_missing_weights_names_the_path() {
    let out = vitmerge(&["infer", "--weights", "/no/such/weights.vpkw", "--input", "/no/x.vpkt"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/weights.vpkw"));
}

#[test]
fn eval_reports_agreement_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 4);
    let w = path(dir.path(), "weights.vpkw");
    let m = path(dir.path(), "manifest.json");
    let csv = path(dir.path(), "rows.csv");

    let r = ok_json(&["eval", "--weights", &w, "--manifest", &m, "--json"]);
    assert_eq!(r["summary"]["images"], 4);
    assert_eq!(r["summary"]["agreement_vs_reference"], 1.0);
    assert!(r["summary"]["max_reference_logit_rel_diff"].as_f64().unwrap() < 1e-3);

    let r = ok_json(&[
        "eval", "--weights", &w, "--manifest", &m, "--keep-rate", "1.0", "--pairs", "0", "--csv", &csv, "--json",
    ]);
    assert_eq!(r["summary"]["agreement_vs_unpruned"], 1.0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("index,tensor_path,label,prediction"));
}

#[test]
fn eval_empty_manifest_is_undefined() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 0);
    let r = ok_json(&[
        "eval",
        "--weights",
        &path(dir.path(), "weights.vpkw"),
        "--manifest",
        &path(dir.path(), "manifest.json"),
        "--json",
    ]);
    assert_eq!(r["summary"]["images"], 0);
    assert!(r["summary"]["top1_accuracy"].is_null());
    assert!(r["rows"].as_array().unwrap().is_empty());
}

#[test]
fn diversity_grid_rows() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 2);
    let w = path(dir.path(), "weights.vpkw");
    let m = path(dir.path(), "manifest.json");
    let out = vitmerge(&["diversity", "--weights", &w, "--manifest", &m]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("strategy,keep_rate,images,mean_diversity"));

    let r = ok_json(&[
        "diversity", "--weights", &w, "--manifest", &m, "--strategies", "decouple_merge", "--keep-rates", "0.7",
        "--json",
    ]);
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0]["mean_diversity"].as_f64().unwrap() >= 0.0);
}

#[test]
fn selftest_passes_and_is_deterministic() {
    let a = ok_json(&["selftest", "--seed", "3", "--json"]);
    let b = ok_json(&["selftest", "--seed", "3", "--json"]);
    assert_eq!(a["rows"], b["rows"]);
    assert_eq!(a["summary"]["passed"], true);
}

#[test]
fn selftest_forced_failure_exits_nonzero() {
    let out = vitmerge(&["selftest", "--force-fail"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL forced_failure"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("forced_failure"));
}
