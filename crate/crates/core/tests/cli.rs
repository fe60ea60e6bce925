//! End-to-end runs of the `homchain` binary.

use std::path::Path;
use std::process::{Command, Output};

fn homchain(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homchain"))
        .args(args)
        .current_dir(dir)
        .env("HOMCHAIN_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_UNIFORM: &str = r#"{
    "schema": "homchain/v1",
    "distribution": {"kind": "iid_uniform_box", "box": {"delta": [1, 2], "epsilon": [3, 4]}},
    "z_grid": [-1, 0.8, 1.0, 1.2, 1.6, 2.0, 3.0],
    "z": 2.0,
    "schedule": [50, 100],
    "samples": 4,
    "probes": 3,
    "solver": {"n_starts": 2}
}"#;

#[test]
fn tabulate_writes_table_with_inf_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMALL_UNIFORM);
    let out = homchain(&["tabulate", "--config", &cfg, "--out", "res", "--jobs", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("res/jhom.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next(), Some("z,value,ci"));
    assert_eq!(lines.next(), Some("-1,inf,0"));
    assert!(dir.path().join("res/jhom.meta.json").exists());
}

#[test]
fn seed_flag_changes_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &SMALL_UNIFORM.replace("[-1, 0.8, 1.0, 1.2, 1.6, 2.0, 3.0]", "[1.2, 2.0]"));
    let a = homchain(&["tabulate", "--config", &cfg, "--out", "a"], dir.path());
    let b = homchain(&["tabulate", "--config", &cfg, "--out", "b", "--seed", "9"], dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let ta = std::fs::read_to_string(dir.path().join("a/jhom.csv")).unwrap();
    let tb = std::fs::read_to_string(dir.path().join("b/jhom.csv")).unwrap();
    assert_ne!(ta.lines().next(), tb.lines().next());
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = homchain(&["tabulate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let bad = write(dir.path(), "bad.json", &SMALL_UNIFORM.replace("\"probes\"", "\"probez\""));
    let out = homchain(&["tabulate", "--config", &bad], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let missing = homchain(&["verify", "--config", "nope.json"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn verify_passes_on_uniform_box() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMALL_UNIFORM);
    let out = homchain(&["verify", "--config", &cfg, "--out", "v"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("stationarity") && stdout.contains("subadditivity"));
}

#[test]
fn verify_catches_sequential_rng_misuse() {
    let dir = tempfile::tempdir().unwrap();
    let planted = SMALL_UNIFORM.replace("\"epsilon\": [3, 4]}", "\"epsilon\": [3, 4]}, \"fixture\": \"sequential_rng\"");
    let cfg = write(dir.path(), "c.json", &planted);
    let out = homchain(&["verify", "--config", &cfg, "--out", "v"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(2), "{stdout}");
    let line = stdout.lines().find(|l| l.starts_with("stationarity")).unwrap();
    assert!(line.contains("FAIL"), "{line}");
}

#[test]
fn verify_catches_planted_nonconvex_table() {
    let dir = tempfile::tempdir().unwrap();
    let planted = SMALL_UNIFORM.replace("\"probes\": 3", "\"probes\": 1, \"table_fixture\": \"nonconvex\"");
    let cfg = write(dir.path(), "c.json", &planted);
    let out = homchain(&["verify", "--config", &cfg, "--out", "v"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(2), "{stdout}");
    let line = stdout.lines().find(|l| l.starts_with("convexity")).unwrap();
    assert!(line.contains("FAIL"), "{line}");
}

#[test]
fn minimize_deterministic_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"schema": "homchain/v1",
            "distribution": {"kind": "iid_discrete",
                "support": [{"potential": {"kind": "classical_lj", "delta": 2, "epsilon": 1}, "probability": 1}]},
            "ell": 3, "chain_n": [250, 1000], "schedule": [200, 800], "samples": 1}"#,
    );
    let out = homchain(&["minimize", "--config", &cfg, "--out", "m"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    let csv = std::fs::read_to_string(dir.path().join("m/comparison.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("n,min_value,min_ci,jhom,jhom_ci,gap"));
    let tight = cfg.replace(".json", "_tight.json");
    std::fs::write(&tight, std::fs::read_to_string(&cfg).unwrap().replace("\"samples\": 1", "\"samples\": 1, \"tolerance\": 1e-9")).unwrap();
    let out = homchain(&["minimize", "--config", &tight, "--out", "m2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
