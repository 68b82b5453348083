use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parisi-lab"))
        .args(args)
        .env_remove("PARISI_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().expect("stderr has a line")).expect("last stderr line is JSON")
}

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("parisi-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn psi_at_the_origin_is_zero() {
    let out = run(&["psi", "--mu", r#"{"atoms":[0],"weights":[1]}"#, "--seed", "5"]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert_eq!(doc["result"]["value"], 0.0);
    assert_eq!(doc["config"]["seed"], 5);
    assert_eq!(doc["config"]["args"]["command"], "psi");
    assert!(doc["config"]["version"].is_string());
}

#[test]
#[allow(clippy::excessive_precision)]
fn model_file_is_read() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/models/sk.json");
    let a = stdout_json(&run(&["psi", "--model", path, "--mu", r#"{"atoms":[0.5],"weights":[1]}"#]));
    let b = stdout_json(&run(&["psi", "--model", "sk", "--mu", r#"{"atoms":[0.5],"weights":[1]}"#]));
    assert_eq!(a["result"], b["result"]);
    assert!((a["result"]["value"].as_f64().unwrap() - 0.1254327925085620259).abs() < 1e-10);
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "usage");
}

#[test]
fn invalid_input_exits_one_with_json_body() {
    let out = run(&["psi", "--mu", r#"{"atoms":[0.1],"weights":[0.5]}"#]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "validation");
    let out = run(&["psi", "--mu", "[]", "--model", "/nonexistent/model.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn hopf_check_reports_agreement() {
    let out = run(&["hopf-check", "--t", "1", "--trials", "10"]);
    assert!(out.status.success());
    assert!(stdout_json(&out)["result"]["max_abs_diff"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn explicit_flags_override_the_config_file() {
    let cfg = scratch("config.json");
    std::fs::write(&cfg, r#"{"t": 0.5, "seed": 7}"#).unwrap();
    let out = run(&["conjugate", "--y", "0.4", "--config", cfg.to_str().unwrap(), "--seed", "9"]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert_eq!(doc["config"]["t"], 0.5);
    assert_eq!(doc["config"]["seed"], 9);
    // t xi*(y/t) for xi = r^2 is y^2 / (4t)
    assert!((doc["result"]["value"].as_f64().unwrap() - 0.08).abs() < 1e-12);
}

#[test]
fn results_do_not_depend_on_threads() {
    let args = ["mc", "--n", "8", "--samples", "16", "--t", "0.7", "--seed", "3"];
    let one = stdout_json(&run(&[&args[..], &["--threads", "1"]].concat()));
    let four = stdout_json(&run(&[&args[..], &["--threads", "4"]].concat()));
    assert_eq!(one["result"], four["result"]);
}

#[test]
fn csv_output_carries_the_config() {
    let path = scratch("mc.csv");
    let out = run(&["mc", "--n", "6", "--samples", "5", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap().trim_start_matches("# ")).unwrap();
    assert_eq!(header["args"]["n"], 6);
    assert_eq!(lines.count(), 5);
}

#[test]
fn kr_norm_of_a_dirac_difference() {
    let out = run(&["kr-norm", "--nu", r#"{"atoms":[0.25,1.5],"weights":[1,-1]}"#]);
    let doc = stdout_json(&out);
    assert!((doc["result"]["lp"].as_f64().unwrap() - 1.25).abs() < 1e-12);
    assert_eq!(doc["result"]["closed_form"], 1.25);
}

#[test]
fn suite_runs_a_selected_criterion() {
    let out = run(&["suite", "acceptance", "--only", "9"]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert_eq!(doc["result"]["total"], 1);
    assert_eq!(doc["result"]["criteria"][0]["id"], 9);
}
