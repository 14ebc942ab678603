//! CLI acceptance: every pipeline command re-run from its manifest must
//! reproduce byte-identical artifacts, results must not depend on the
//! worker count, and exit codes must follow the contract (0 ok, 2 usage,
//! 3 data error).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

fn cf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cf"))
}

fn run_in(dir: &Path, args: &[&str]) -> std::process::Output {
    cf().current_dir(dir).args(args).output().expect("spawn cf")
}

fn run_ok(dir: &Path, args: &[&str]) {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "cf {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn planted_spec_json() -> &'static str {
    r#"{
  "n_samples": 2500,
  "n_features": 30,
  "malware_fraction": 0.3,
  "duplicate_groups": [
    { "members": [20, 21], "activation_benign": 0.3, "activation_malware": 0.05 }
  ],
  "blocks": [
    { "members": [0,1,2,3,4], "activation_benign": 0.4, "activation_malware": 0.05,
      "member_prob": 0.6, "core": [0,1,2], "core_prob": 0.4, "core_shared": true },
    { "members": [5,6,7,8,9], "activation_benign": 0.35, "activation_malware": 0.04,
      "member_prob": 0.6, "core": [5,6,7], "core_prob": 0.4, "core_shared": true },
    { "members": [10,11,12], "activation_benign": 0.03, "activation_malware": 0.5,
      "member_prob": 0.9 },
    { "members": [13], "activation_benign": 0.02, "activation_malware": 0.5 },
    { "members": [14], "activation_benign": 0.02, "activation_malware": 0.45 }
  ],
  "background": 0.05,
  "noise": 0.0
}"#
}

/// Reads the output paths recorded in a command's manifest.
fn manifest_outputs(dir: &Path, primary: &str) -> Vec<PathBuf> {
    let path = dir.join(format!("{primary}.manifest.json"));
    let text = fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing manifest {}: {e}", path.display()));
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| dir.join(v.as_str().unwrap()))
        .collect()
}

/// Snapshots artifacts, replays the command from its manifest, and
/// asserts every artifact byte-identical.
fn assert_replay_identical(dir: &Path, primary: &str) {
    let outputs = manifest_outputs(dir, primary);
    assert!(!outputs.is_empty(), "{primary}: manifest lists no outputs");
    let mut snapshot: BTreeMap<PathBuf, Vec<u8>> = BTreeMap::new();
    for path in &outputs {
        snapshot.insert(path.clone(), fs::read(path).unwrap());
    }
    run_ok(
        dir,
        &["replay", "--manifest", &format!("{primary}.manifest.json")],
    );
    for (path, before) in snapshot {
        let after = fs::read(&path).unwrap();
        assert_eq!(
            before,
            after,
            "{primary}: artifact {} not byte-identical after replay",
            path.display()
        );
    }
}

#[test]
fn criterion_9_manifest_determinism() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    fs::write(dir.join("spec.json"), planted_spec_json()).unwrap();

    run_ok(
        dir,
        &[
            "synth",
            "--spec",
            "spec.json",
            "--out",
            "data.txt",
            "--seed",
            "5",
        ],
    );
    run_ok(
        dir,
        &[
            "learn",
            "--data",
            "data.txt",
            "--out",
            "gamma.json",
            "--stats-out",
            "stats.json",
            "--min-cost",
            "0.15",
            "--seed",
            "5",
        ],
    );
    run_ok(
        dir,
        &[
            "transform",
            "--data",
            "data.txt",
            "--constraints",
            "gamma.json",
            "--out",
            "robust.txt",
        ],
    );
    run_ok(
        dir,
        &[
            "train",
            "--data",
            "data.txt",
            "--out",
            "model.json",
            "--epochs",
            "20",
            "--lambda",
            "0.001",
            "--seed",
            "5",
        ],
    );
    run_ok(
        dir,
        &[
            "train",
            "--data",
            "robust.txt",
            "--out",
            "model_h.json",
            "--epochs",
            "20",
            "--lambda",
            "0.001",
            "--seed",
            "6",
        ],
    );
    run_ok(
        dir,
        &[
            "evaluate",
            "--model",
            "model.json",
            "--data",
            "data.txt",
            "--out",
            "eval.json",
        ],
    );
    run_ok(
        dir,
        &[
            "attack",
            "--model",
            "model.json",
            "--data",
            "data.txt",
            "--mode",
            "constrained",
            "--constraints",
            "gamma.json",
            "--max-added",
            "20",
            "--out",
            "campaign.json",
            "--seed",
            "5",
        ],
    );
    run_ok(
        dir,
        &[
            "csr",
            "--report",
            "campaign.json",
            "--constraints",
            "gamma.json",
            "--data",
            "data.txt",
            "--out",
            "csr.json",
        ],
    );
    // a constrained campaign satisfies its own constraints exactly
    let csr: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("csr.json")).unwrap()).unwrap();
    assert_eq!(csr["csr_mean"].as_f64(), Some(1.0));
    run_ok(
        dir,
        &[
            "retrain",
            "--data",
            "data.txt",
            "--constraints",
            "gamma.json",
            "--k",
            "40",
            "--variants",
            "4",
            "--jitter-q",
            "12",
            "--max-added",
            "20",
            "--epochs",
            "20",
            "--lambda",
            "0.001",
            "--out",
            "model2.json",
            "--seed",
            "5",
        ],
    );

    for primary in [
        "data.txt",
        "gamma.json",
        "robust.txt",
        "model.json",
        "model_h.json",
        "eval.json",
        "campaign.json",
        "csr.json",
        "model2.json",
    ] {
        assert_replay_identical(dir, primary);
    }
    println!(
        "[PASS] criterion 9 (determinism): 9 pipeline commands replayed byte-identically ({:.2}s)",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn results_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    fs::write(dir.join("spec.json"), planted_spec_json()).unwrap();
    run_ok(
        dir,
        &[
            "synth",
            "--spec",
            "spec.json",
            "--out",
            "data.txt",
            "--seed",
            "7",
        ],
    );
    run_ok(
        dir,
        &[
            "learn",
            "--data",
            "data.txt",
            "--out",
            "g1.json",
            "--threads",
            "1",
            "--seed",
            "7",
        ],
    );
    run_ok(
        dir,
        &[
            "learn",
            "--data",
            "data.txt",
            "--out",
            "g4.json",
            "--threads",
            "4",
            "--seed",
            "7",
        ],
    );
    assert_eq!(
        fs::read(dir.join("g1.json")).unwrap(),
        fs::read(dir.join("g4.json")).unwrap()
    );
    run_ok(
        dir,
        &[
            "train", "--data", "data.txt", "--out", "m.json", "--seed", "7",
        ],
    );
    run_ok(
        dir,
        &[
            "attack",
            "--model",
            "m.json",
            "--data",
            "data.txt",
            "--max-added",
            "15",
            "--out",
            "c1.json",
            "--threads",
            "1",
        ],
    );
    run_ok(
        dir,
        &[
            "attack",
            "--model",
            "m.json",
            "--data",
            "data.txt",
            "--max-added",
            "15",
            "--out",
            "c4.json",
            "--threads",
            "4",
        ],
    );
    assert_eq!(
        fs::read(dir.join("c1.json")).unwrap(),
        fs::read(dir.join("c4.json")).unwrap()
    );
}

#[test]
fn exit_codes_follow_contract() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();

    // usage error: unknown flag
    let out = run_in(dir, &["learn", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));

    // data error: missing input file
    let out = run_in(dir, &["learn", "--data", "absent.txt", "--out", "g.json"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("absent.txt"),
        "error names the file: {stderr}"
    );

    // data error: malformed dataset reports the line number
    fs::write(dir.join("bad.txt"), "#d=5\n1 2\n0 9\n").unwrap();
    let out = run_in(dir, &["learn", "--data", "bad.txt", "--out", "g.json"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("line 3"),
        "parse error carries the line: {stderr}"
    );

    // data error: empty dataset
    fs::write(dir.join("empty.txt"), "#d=5\n").unwrap();
    let out = run_in(dir, &["learn", "--data", "empty.txt", "--out", "g.json"]);
    assert_eq!(out.status.code(), Some(3));

    // constrained attack without constraints
    fs::write(
        dir.join("m.json"),
        r#"{"dim":2,"bias":0.5,"weights":[-1.0,1.0]}"#,
    )
    .unwrap();
    fs::write(dir.join("d.txt"), "#d=2\n1 1\n").unwrap();
    let out = run_in(
        dir,
        &[
            "attack",
            "--model",
            "m.json",
            "--data",
            "d.txt",
            "--mode",
            "constrained",
            "--out",
            "c.json",
        ],
    );
    assert_eq!(out.status.code(), Some(3));

    // artifact dimension mismatch names the offending artifact
    fs::write(dir.join("d3.txt"), "#d=3\n1 1 2\n0\n").unwrap();
    let out = run_in(
        dir,
        &[
            "evaluate", "--model", "m.json", "--data", "d3.txt", "--out", "e.json",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn transform_identity_without_constraints_structure() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    // a dataset with no dependency structure at all: transform with the
    // learned (empty) constraint set keeps every non-constant feature
    fs::write(dir.join("flat.txt"), "#d=4\n1 0\n0 1\n1 2\n0 0 1 2\n").unwrap();
    run_ok(dir, &["learn", "--data", "flat.txt", "--out", "g.json"]);
    run_ok(
        dir,
        &[
            "transform",
            "--data",
            "flat.txt",
            "--constraints",
            "g.json",
            "--out",
            "h.txt",
        ],
    );
    let original = fs::read_to_string(dir.join("flat.txt")).unwrap();
    let transformed = fs::read_to_string(dir.join("h.txt")).unwrap();
    // feature 3 never appears (constant-absent): dropped, dims shrink
    assert!(transformed.starts_with("#d=3"));
    // rows preserved modulo the dropped dimension
    for (a, b) in original.lines().skip(1).zip(transformed.lines().skip(1)) {
        assert_eq!(a, b);
    }
}
