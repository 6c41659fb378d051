//! End-to-end tests of the command-line surface: file formats, exit codes
//! and cross-command workflows.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ionshuttle"))
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ionshuttle-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn ionshuttle")
}

#[test]
fn gen_qv_is_deterministic_and_square() {
    let out1 = run(bin().args(["gen-qv", "--n", "6", "--seed", "3"]));
    let out2 = run(bin().args(["gen-qv", "--n", "6", "--seed", "3"]));
    assert!(out1.status.success());
    assert_eq!(out1.stdout, out2.stdout);
    let text = String::from_utf8(out1.stdout).unwrap();
    assert_eq!(text.lines().count(), 18); // 6 layers x 3 gates
    let differently = run(bin().args(["gen-qv", "--n", "6", "--seed", "4"]));
    assert_ne!(text.as_bytes(), differently.stdout.as_slice());
}

#[test]
fn compile_heuristic_and_exact_agree_on_replayable_schedules() {
    let dir = tempdir("compile");
    let circuit = dir.join("c.txt");
    write(&circuit, "1 2\n2 3\n");
    let sched = dir.join("h.json");
    let st = run(bin().args([
        "compile",
        "--chip",
        "builtin:x6",
        "--circuit",
        circuit.to_str().unwrap(),
        "--method",
        "heuristic",
        "--out",
        sched.to_str().unwrap(),
    ]));
    assert!(st.status.success());
    let h: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sched).unwrap()).unwrap();
    assert_eq!(h["method"], "heuristic");
    assert!(h["total_duration"].as_f64().unwrap() > 0.0);

    let esched = dir.join("e.json");
    let st = run(bin().args([
        "compile",
        "--chip",
        "builtin:x6",
        "--circuit",
        circuit.to_str().unwrap(),
        "--method",
        "exact",
        "--out",
        esched.to_str().unwrap(),
    ]));
    assert!(st.status.success());
    let e: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&esched).unwrap()).unwrap();
    assert!(e["total_duration"].as_f64().unwrap() <= h["total_duration"].as_f64().unwrap());
}

#[test]
fn invalid_inputs_exit_with_code_two() {
    let dir = tempdir("bad");
    let bad = dir.join("bad.txt");
    write(&bad, "1 1\n"); // self-gate
    let st = run(bin().args([
        "compile",
        "--chip",
        "builtin:x6",
        "--circuit",
        bad.to_str().unwrap(),
    ]));
    assert_eq!(st.status.code(), Some(2));
    // missing checkpoint for rl
    let ok = dir.join("ok.txt");
    write(&ok, "1 2\n");
    let st = run(bin().args([
        "compile",
        "--chip",
        "builtin:x6",
        "--circuit",
        ok.to_str().unwrap(),
        "--method",
        "rl",
    ]));
    assert_eq!(st.status.code(), Some(2));
    // unknown chip
    let st = run(bin().args([
        "compile",
        "--chip",
        "builtin:nope",
        "--circuit",
        ok.to_str().unwrap(),
    ]));
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn oracle_reports_proven_optimum() {
    let dir = tempdir("oracle");
    let circuit = dir.join("c.txt");
    write(&circuit, "1 2\n");
    let out = dir.join("oracle.json");
    let st = run(bin().args([
        "oracle",
        "--chip",
        "builtin:x6",
        "--circuit",
        circuit.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert!(st.status.success());
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["proven_optimal"], true);
    assert_eq!(r["schedule"]["total_duration"], 2.0);
}

#[test]
fn animate_dumps_one_frame_per_action_plus_start() {
    let dir = tempdir("animate");
    let circuit = dir.join("c.txt");
    write(&circuit, "1 2\n1 3\n");
    let sched = dir.join("s.json");
    assert!(run(bin().args([
        "compile",
        "--chip",
        "builtin:x6",
        "--circuit",
        circuit.to_str().unwrap(),
        "--method",
        "exact",
        "--out",
        sched.to_str().unwrap(),
    ]))
    .status
    .success());
    let frames_path = dir.join("frames.json");
    assert!(run(bin().args([
        "animate",
        "--chip",
        "builtin:x6",
        "--circuit",
        circuit.to_str().unwrap(),
        "--schedule",
        sched.to_str().unwrap(),
        "--out",
        frames_path.to_str().unwrap(),
    ]))
    .status
    .success());
    let frames: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&frames_path).unwrap()).unwrap();
    let frames = frames.as_array().unwrap();
    let sched: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sched).unwrap()).unwrap();
    assert_eq!(frames.len(), sched["entries"].as_array().unwrap().len() + 1);
    // 9 cells on the x6 chip, occupancy tracked per frame
    assert_eq!(frames[0]["cells"].as_array().unwrap().len(), 9);
    assert_eq!(frames.last().unwrap()["remaining_gates"], 0);
}

#[test]
fn bench_writes_csv_and_json() {
    let dir = tempdir("bench");
    let st = run(bin().args([
        "bench",
        "--chip",
        "builtin:x6",
        "--suite",
        "random:3:3:4",
        "--methods",
        "exact,heuristic",
        "--bootstrap-draws",
        "200",
        "--seed",
        "5",
        "--out",
        dir.to_str().unwrap(),
    ]));
    assert!(st.status.success());
    let csv = std::fs::read_to_string(dir.join("bench.csv")).unwrap();
    assert!(csv.starts_with("instance,method,budget,duration"));
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("bench.json")).unwrap()).unwrap();
    assert_eq!(report["aggregates"].as_array().unwrap().len(), 2);
}

#[test]
fn train_then_compile_round_trip() {
    let dir = tempdir("train");
    let cfg = dir.join("cfg.json");
    // tiny budget: enough to exercise the full train -> checkpoint -> rl
    // compile path, not to learn anything
    write(
        &cfg,
        r#"{
  "n_envs": 8, "n_steps": 16, "minibatch": 64, "epochs": 2,
  "total_iters": 3, "n_gates_budget": 4, "episode_cap": 64, "seed": 9,
  "net": {"hidden": 32, "blocks": 1}, "obs": {"n_gates_budget": 4}
}"#,
    );
    let run_dir = dir.join("run");
    let st = run(bin().args([
        "train",
        "--chip",
        "builtin:x2",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]));
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    // metrics are line-delimited JSON, one per learning step
    let metrics = std::fs::read_to_string(run_dir.join("metrics.ndjson")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 3);
    for line in &lines {
        let m: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(m["loss"].is_number());
        assert!(m["entropy"].is_number());
    }
    let ckpt = run_dir.join("checkpoint.json");
    assert!(ckpt.exists());

    let circuit = dir.join("c.txt");
    write(&circuit, "1 2\n");
    let sched = dir.join("s.json");
    let st = run(bin().args([
        "compile",
        "--chip",
        "builtin:x2",
        "--circuit",
        circuit.to_str().unwrap(),
        "--method",
        "rl",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--max-rollouts",
        "64",
        "--out",
        sched.to_str().unwrap(),
    ]));
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sched).unwrap()).unwrap();
    assert_eq!(s["method"], "rl");
    // checkpoint trained on x2 rejects the wider chip
    let st = run(bin().args([
        "compile",
        "--chip",
        "builtin:x6",
        "--circuit",
        circuit.to_str().unwrap(),
        "--method",
        "rl",
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]));
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn chip_file_round_trips_through_cli() {
    let dir = tempdir("chipfile");
    let chip_path = dir.join("chip.json");
    write(
        &chip_path,
        r#"{
  "family": "q",
  "zones": [
    {"kind": "compute", "capacity": 2},
    {"kind": "spam", "capacity": 1},
    {"kind": "ring", "capacity": 4}
  ],
  "durations": {"default": 1.0, "fast_rotation": 0.5}
}"#,
    );
    let circuit = dir.join("c.txt");
    write(&circuit, "1 2\n");
    let sched = dir.join("s.json");
    let st = run(bin().args([
        "compile",
        "--chip",
        chip_path.to_str().unwrap(),
        "--circuit",
        circuit.to_str().unwrap(),
        "--method",
        "exact",
        "--out",
        sched.to_str().unwrap(),
    ]));
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sched).unwrap()).unwrap();
    // fast rotations of the custom chip show up in the durations
    let durations: Vec<f64> = s["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["duration"].as_f64().unwrap())
        .collect();
    assert!(durations.iter().all(|d| *d == 0.5 || *d == 1.0));
}

#[test]
fn gen_random_respects_requested_size() {
    let out = run(bin().args(["gen-random", "--qubits", "5", "--gates", "12", "--seed", "2"]));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 12);
    for line in text.lines() {
        let mut it = line.split_whitespace();
        let x: u16 = it.next().unwrap().parse().unwrap();
        let y: u16 = it.next().unwrap().parse().unwrap();
        assert!(x != y && (1..=5).contains(&x) && (1..=5).contains(&y));
    }
}
