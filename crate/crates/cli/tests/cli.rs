use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn pmbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmbm")).args(args).output().unwrap()
}

/// Runs a short coalescence experiment into `out` with extra arguments.
fn short_run(out: &Path, extra: &[&str]) -> Output {
    let sc = scenario("coalescence.json");
    let mut args = vec![
        "run",
        "--scenario",
        sc.to_str().unwrap(),
        "--runs",
        "2",
        "--set",
        "scenario.duration=30",
        "--out-dir",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = pmbm(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn estimates(dir: &Path) -> Vec<Value> {
    fs::read_to_string(dir.join("estimates.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn validate_only_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let sc = scenario("many_targets.json");
    let o = pmbm(&["run", "--scenario", sc.to_str().unwrap(), "--validate-only", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(!out.exists());

    let o = pmbm(&[
        "run",
        "--scenario",
        sc.to_str().unwrap(),
        "--validate-only",
        "--set",
        "tracker.update.k_best=0",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("k_best"));
    assert!(!out.exists());
}

#[test]
fn bad_input_is_reported() {
    let o = pmbm(&["run", "--scenario", "/nonexistent/scenario.json", "--validate-only"]);
    assert!(!o.status.success());
    let sc = scenario("coalescence.json");
    let o = pmbm(&["run", "--scenario", sc.to_str().unwrap(), "--validate-only", "--set", "tracker.unknown_field=1"]);
    assert!(!o.status.success());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    short_run(&a, &[]);
    short_run(&b, &[]);
    for f in ["metrics.csv", "estimates.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let csv = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 30);

    let c = tmp.path().join("c");
    short_run(&c, &["--seed", "99"]);
    assert_ne!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(c.join("metrics.csv")).unwrap());
}

#[test]
fn filter_estimates_match_current_tracker() {
    let tmp = tempfile::tempdir().unwrap();
    let cur = tmp.path().join("current");
    let fil = tmp.path().join("filter");
    let every = ["--set", "output.estimates=every_step"];
    short_run(&cur, &[&["--tracker", "current"][..], &every].concat());
    short_run(&fil, &[&["--tracker", "filter"][..], &every].concat());
    let a = estimates(&cur);
    let b = estimates(&fil);
    assert_eq!(a.len(), b.len());
    assert!(!a.is_empty());
    for (x, y) in a.iter().zip(&b) {
        for key in ["run", "time", "track", "birth", "end"] {
            assert_eq!(x[key], y[key], "{key}");
        }
        // The filter keeps only the last state of each trajectory.
        let xs = x["states"].as_array().unwrap();
        let ys = y["states"].as_array().unwrap();
        assert_eq!(ys.len(), 4);
        for (u, v) in xs[xs.len() - 4..].iter().zip(ys) {
            let (u, v) = (u.as_f64().unwrap(), v.as_f64().unwrap());
            assert!((u - v).abs() <= 1e-8 * (1.0 + u.abs()), "{u} vs {v}");
        }
    }
}

#[test]
fn run_writes_summary_and_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = short_run(&out, &["--tracker", "all"]);
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("Switch") && table.contains("all"));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], 2);
    assert_eq!(summary["variant"], "all");
    let total = summary["mean_summed"]["total"].as_f64().unwrap();
    let parts: f64 = ["location", "missed", "false_", "switch"].iter().map(|k| summary["mean_summed"][k].as_f64().unwrap()).sum();
    assert!((total - parts).abs() < 1e-6 * total.max(1.0));
    // Final estimates only, all from the last step.
    assert!(estimates(&out).iter().all(|e| e["time"] == 29));
}

#[test]
fn exact_mode_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let sc = scenario("coalescence.json");
    let o = pmbm(&[
        "run",
        "--scenario",
        sc.to_str().unwrap(),
        "--runs",
        "1",
        "--set",
        "scenario.duration=4",
        "--exact-mode",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("summary.json").exists());
}

#[test]
fn simulate_writes_one_line_per_step() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("sim.jsonl");
    let sc = scenario("coalescence.json");
    let o = pmbm(&["simulate", "--scenario", sc.to_str().unwrap(), "--run", "3", "--out", file.to_str().unwrap()]);
    assert!(o.status.success());
    let text = fs::read_to_string(&file).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 100);
    for (k, l) in lines.iter().enumerate() {
        assert_eq!(l["time"], k);
        assert_eq!(l["truth"].as_array().unwrap().len(), 3);
    }
    let stdout = pmbm(&["simulate", "--scenario", sc.to_str().unwrap(), "--run", "3"]);
    assert_eq!(stdout.stdout, text.as_bytes());
}
