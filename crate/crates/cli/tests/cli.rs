use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

fn corpus(path: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(path).display().to_string()
}

fn run(args: &[&str]) -> (i32, String, String) {
    run_with_stdin(args, "")
}

fn run_with_stdin(args: &[&str], stdin: &str) -> (i32, String, String) {
    let argv = std::iter::once("polyslot").chain(args.iter().copied());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = polyslot_cli::run(argv, &mut stdin.as_bytes(), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut full = vec!["--format", "json"];
    full.extend_from_slice(args);
    let (code, out, err) = run(&full);
    (code, serde_json::from_str(&out).unwrap_or_else(|_| panic!("not JSON: {out} {err}")))
}

#[test]
fn demo_switch_prints_blocks() {
    let (code, out, _) = run(&["demo", "switch", "--dim", "2", "--trials", "10"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("block 0") && out.contains("block 1"));
    assert!(out.contains("seed: "));
    let (code, v) = json(&["switch", "demo", "--dim", "2", "--n", "3", "--seed", "5", "--trials", "5"]);
    assert_eq!(code, 0);
    assert_eq!(v["demo"]["blocks"].as_array().unwrap().len(), 3);
    assert_eq!(v["demo"]["seed"], 5);
}

#[test]
fn verify_loopback_fails_with_worst_case() {
    let (code, v) = json(&["verify", "--cat", "fu", "--trials", "10", &corpus("supermaps/loopback.json")]);
    assert_eq!(code, 1);
    assert_eq!(v["verdict"], "fail");
    assert!(v["worst_case"]["defect"].as_f64().unwrap() >= 0.1);
    let (code, _) = json(&["supermap", "verify", "--trials", "10", &corpus("supermaps/seqcomp.json")]);
    assert_eq!(code, 0);
}

#[test]
fn verify_reads_stdin() {
    let text = std::fs::read_to_string(corpus("supermaps/identity.json")).unwrap();
    let (code, out, err) = run_with_stdin(&["verify", "--trials", "5", "-"], &text);
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.contains("PASS"));
}

#[test]
fn demo_loop_reports_scalar() {
    let (code, v) = json(&["demo", "loop", "--dim", "3"]);
    assert_eq!(code, 0);
    assert_eq!(v["rejection"], "already_connected");
    assert!((v["scalar"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-10);
    let (code, out, _) = run(&["demo", "loop"]);
    assert_eq!(code, 0);
    assert!(out.contains("rejected") && out.contains("0.500000"));
}

#[test]
fn interchange_demo_and_lat_commute() {
    let (code, v) = json(&["demo", "interchange", "--dim", "2"]);
    assert_eq!(code, 0);
    assert!(v["max_difference"].as_f64().unwrap() > 0.1);
    assert!(v["trivial_difference"].as_f64().unwrap() <= 1e-12);
    let (code, _) = json(&["lat", "demo-interchange", "--dim", "3"]);
    assert_eq!(code, 0);
    let (code, v) = json(&["lat", "commute", "--left", "loop", "--right", "v", "--trials", "8"]);
    assert_eq!(code, 1);
    assert!(v["on_swap"]["max_difference"].as_f64().unwrap() > 0.1);
    let (code, _) = json(&["lat", "commute", "--left", "id", "--right", "v", "--trials", "8"]);
    assert_eq!(code, 0);
}

#[test]
fn pathing_check_and_extract() {
    let (code, v) = json(&["pathing", "check", "--constraint", r#"{"source":[0],"target":[1]}"#, &corpus("gates/cnot.json")]);
    assert_eq!(code, 1);
    assert_eq!(v["holds"], false);
    let stair: Value = serde_json::from_str(&std::fs::read_to_string(corpus("pathing/staircase.json")).unwrap()).unwrap();
    let morphism = stair["morphism"].to_string();
    let c = stair["constraint"].to_string();
    let (code, out, err) = run_with_stdin(&["--format", "json", "pathing", "extract", "--constraint", &c, "-"], &morphism);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["memory"], stair["memory"]);
    assert!(v["reassembly_residual"].as_f64().unwrap() < 1e-8);
    let (code, _, err) = run(&["pathing", "extract", "--constraint", r#"{"source":[0],"target":[1]}"#, &corpus("gates/cnot.json")]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn decompose_and_comb_roundtrip() {
    let (code, v) = json(&["decompose", &corpus("combs/random_internal.json")]);
    assert_eq!(code, 0);
    assert!(v["action_residual"].as_f64().unwrap() < 1e-8);
    let (code, v) = json(&["comb", "roundtrip", &corpus("combs/random.json")]);
    assert_eq!(code, 0);
    assert_eq!(v["memory_in"], v["memory_out"]);
    let (code, _, err) = run(&["comb", "decompose", &corpus("supermaps/loopback.json")]);
    assert_eq!(code, 1);
    assert!(err.contains("not a comb"));
}

#[test]
fn polycat_eval_and_check() {
    let (code, v) = json(&["polycat", "eval", &corpus("networks/switch_then_seq.json")]);
    assert_eq!(code, 0);
    assert_eq!(v["components"].as_array().unwrap().len(), 1);
    assert!(v["components"][0]["unitarity_defect"].as_f64().unwrap() < 1e-9);
    let (code, v) = json(&["polycat", "check", &corpus("networks/loop.json")]);
    assert_eq!(code, 1);
    assert_eq!(v["rejected"]["kind"], "already_connected");
    assert_eq!(v["rejected"]["composition"], 1);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["bogus"]).0, 2);
    assert_eq!(run(&["verify"]).0, 2);
    assert_eq!(run(&["--trials", "0", "demo", "loop"]).0, 2);
    assert_eq!(run(&["--tol=-1", "demo", "loop"]).0, 2);
    assert_eq!(run(&["verify", "/nonexistent.json"]).0, 2);
    assert_eq!(run(&["pathing", "check", "--constraint", "{\"source\":[5],\"target\":[0]}", &corpus("gates/cnot.json")]).0, 2);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn fixtures_regen_then_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(run(&["fixtures", "regen", d]).0, 0);
    assert_eq!(run(&["fixtures", "check", d]).0, 0);
    std::fs::write(dir.path().join("gates/cnot.json"), "{}\n").unwrap();
    assert_eq!(run(&["fixtures", "check", d]).0, 1);
}

#[test]
fn binary_output_is_byte_identical_across_runs() {
    let exe = env!("CARGO_BIN_EXE_polyslot");
    let cases: [&[&str]; 3] = [
        &["--format", "json", "demo", "loop"],
        &["--format", "json", "--trials", "5", "demo", "switch"],
        &["--format", "json", "--trials", "5", "verify", "--cat", "fqc", &corpus("supermaps/identity.json")],
    ];
    for args in cases {
        let a = Command::new(exe).args(args).env_remove("POLYSLOT_SEED").output().unwrap();
        let b = Command::new(exe).args(args).env_remove("POLYSLOT_SEED").output().unwrap();
        assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn seed_falls_back_to_environment() {
    let exe = env!("CARGO_BIN_EXE_polyslot");
    let out = Command::new(exe)
        .args(["--format", "json", "--trials", "3", "switch", "demo"])
        .env("POLYSLOT_SEED", "77")
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["demo"]["seed"], 77);
}
