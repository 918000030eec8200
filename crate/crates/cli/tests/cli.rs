use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonlocal-lab"))
        .args(args)
        .env_remove("NONLOCAL_LAB_BUDGET")
        .output()
        .expect("binary runs")
}

fn json_ok(args: &[&str]) -> Value {
    let out = lab(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json report")
}

fn frac(v: &Value) -> (String, String) {
    (v["num"].as_str().unwrap().to_owned(), v["den"].as_str().unwrap().to_owned())
}

fn pair(num: &str, den: &str) -> (String, String) {
    (num.to_owned(), den.to_owned())
}

#[test]
fn quantum_matches_targets() {
    let v = json_ok(&["quantum", "--n", "3", "--k", "2"]);
    assert_eq!(v["command"], "quantum");
    assert_eq!(v["pass"], true);
    assert!(v["result"]["max_deviation"].as_f64().unwrap() < 1e-12);
    assert_eq!(v["result"]["rows"].as_array().unwrap().len(), 4 * 8);
}

#[test]
fn mermin_error_and_efficiency() {
    let v = json_ok(&["search", "--n", "3", "--k", "2"]);
    assert_eq!(frac(&v["result"]["optimum"]), pair("1", "4"));
    assert_eq!(v["result"]["verified"], true);
    let v = json_ok(&["search", "--n", "3", "--k", "2", "--objective", "eta-star", "--eps", "0"]);
    assert_eq!(frac(&v["result"]["optimum"]), pair("1", "2"));
}

#[test]
fn rect_scan_full_threshold() {
    let v = json_ok(&["rect-scan", "--n", "3", "--k", "2", "--delta-grid", "7/8,1", "--check-relation"]);
    let scans = v["result"]["scans"].as_array().unwrap();
    for s in scans {
        assert_eq!(frac(&s["r_cap"]), pair("1", "2"));
    }
    assert_eq!(v["result"]["relation"]["failures"].as_array().unwrap().len(), 0);
    assert_eq!(v["result"]["minuscule_holds"], true);
}

#[test]
fn addition_records_seed_and_replays() {
    let args = ["addition", "--t", "4", "--r", "64", "--seed", "9"];
    let first = lab(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, lab(&args).stdout);
    let v: Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(v["result"]["seed"], 9);
    assert!(v["result"]["bias"]["exact"].is_string());
}

#[test]
fn addition_rejects_bad_group() {
    assert_eq!(lab(&["addition", "--t", "6", "--r", "300"]).status.code(), Some(2));
    assert_eq!(lab(&["addition", "--t", "4", "--r", "10"]).status.code(), Some(2));
}

#[test]
fn tradeoff_grid_edges() {
    let v = json_ok(&["tradeoff", "--n", "3", "--k", "2", "--c-grid", ""]);
    assert_eq!(v["result"]["rows"].as_array().unwrap().len(), 0);
    let out = lab(&["tradeoff", "--n", "3", "--k", "2", "--eps-grid", "", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);
    assert_eq!(lab(&["tradeoff", "--n", "100000"]).status.code(), Some(2));
}

#[test]
fn tradeoff_small_instance_is_consistent() {
    let v = json_ok(&["tradeoff", "--n", "3", "--k", "2", "--c-grid", "0,3", "--eps-grid", "0"]);
    let rows = v["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(frac(&rows[0]["achievable_eta_n"]), pair("1", "2"));
    assert_eq!(frac(&rows[1]["converted_eta_n"]), pair("1", "8"));
    assert!(rows.iter().all(|r| r["consistent"] == true));
}

#[test]
fn budget_comes_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_nonlocal-lab"))
        .args(["search", "--n", "3", "--k", "2"])
        .env("NONLOCAL_LAB_BUDGET", "10")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn broadcast_conversion_costs_two_to_the_minus_c() {
    let v = json_ok(&["protocol-run", "--n", "3", "--k", "2", "--broadcast"]);
    assert_eq!(v["result"]["cost"], 3);
    assert_eq!(frac(&v["result"]["converted_metrics"]["efficiency"]["eta_n"]), pair("1", "8"));
    assert_eq!(frac(&v["result"]["metrics"]["error"]), pair("0", "1"));
}

#[test]
fn protocol_and_model_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let drawn = json_ok(&["protocol-run", "--n", "3", "--k", "2", "--seed", "4"]);
    let path = dir.path().join("protocol.json");
    fs::write(&path, serde_json::to_vec(&drawn["result"]["protocol"]).unwrap()).unwrap();
    let again = json_ok(&["protocol-run", "--n", "3", "--k", "2", "--protocol", path.to_str().unwrap()]);
    assert_eq!(again["result"]["metrics"], drawn["result"]["metrics"]);
    assert_eq!(again["result"]["converted_metrics"], drawn["result"]["converted_metrics"]);

    let evaluated = json_ok(&["lhv-eval", "--n", "3", "--k", "2", "--seed", "5"]);
    let path = dir.path().join("model.json");
    fs::write(&path, serde_json::to_vec(&evaluated["result"]["model"]).unwrap()).unwrap();
    let again = json_ok(&["lhv-eval", "--n", "3", "--k", "2", "--model", path.to_str().unwrap()]);
    assert_eq!(again["result"]["metrics"], evaluated["result"]["metrics"]);
}

#[test]
fn exported_problem_feeds_search() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("problem.json");
    json_ok(&["quantum", "--n", "3", "--k", "2", "--problem-out", path.to_str().unwrap()]);
    let v = json_ok(&["search", "--n", "3", "--k", "2", "--problem", path.to_str().unwrap()]);
    assert_eq!(frac(&v["result"]["optimum"]), pair("1", "4"));
}

#[test]
fn csv_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.csv");
    let out = lab(&["rect-scan", "--n", "3", "--k", "2", "--format", "csv", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("delta,r_cap"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn timing_is_opt_in() {
    let args = ["search", "--n", "3", "--k", "2"];
    assert!(json_ok(&args)["result"].get("wall_time_ms").is_none());
    let mut timed = args.to_vec();
    timed.push("--timing");
    assert!(json_ok(&timed)["result"].get("wall_time_ms").is_some());
}

#[test]
fn sequential_and_parallel_agree() {
    let args = ["rect-scan", "--n", "4", "--k", "4", "--symmetry", "full"];
    let mut one = args.to_vec();
    one.extend(["--threads", "1"]);
    assert_eq!(json_ok(&args)["result"], json_ok(&one)["result"]);
}
