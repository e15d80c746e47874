use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const TINY: &str = r#"
seed = 3
classes = 2
tau_gs = 4.0
epochs = 2
eval_every = 2

[[layers]]
neurons = 48
arity = 2

[[layers]]
neurons = 24
arity = 2

[encoder]
kind = "distributive"
bits_per_feature = 3

[optimizer]
batch_size = 32

[data]
kind = "synth"
seed = 11
synth_samples = 400
synth_features = 4
synth_classes = 2
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_warp-lnn"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.toml");
    fs::write(&p, TINY).unwrap();
    p
}

fn train(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let cfg = tiny_config(dir);
    let out = dir.join(name);
    let mut args = vec!["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--no-wallclock"];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

fn records(run_dir: &Path) -> Vec<Value> {
    fs::read_to_string(run_dir.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn train_writes_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = train(tmp.path(), "run", &[]);
    for f in ["metrics.jsonl", "checkpoint.json", "model.netlist", "config.toml"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let recs = records(&out);
    assert!(recs.len() >= 2);
    for r in &recs {
        for key in ["step", "epoch", "loss", "acc_relaxed", "acc_discrete", "gap", "wallclock_ms", "mode"] {
            assert!(r.get(key).is_some(), "record lacks {key}: {r}");
        }
        assert_eq!(r["wallclock_ms"], 0);
    }
    let entries: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries.len(), 2, "only the config and the run directory: {entries:?}");
}

#[test]
fn same_seed_gives_identical_metrics() {
    let tmp = TempDir::new().unwrap();
    let a = train(tmp.path(), "a", &["--seed", "7"]);
    let b = train(tmp.path(), "b", &["--seed", "7"]);
    let c = train(tmp.path(), "c", &["--seed", "8"]);
    let read = |d: &Path| fs::read(d.join("metrics.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(fs::read(a.join("model.netlist")).unwrap(), fs::read(b.join("model.netlist")).unwrap());
}

#[test]
fn mode_is_recorded() {
    let tmp = TempDir::new().unwrap();
    let g = train(tmp.path(), "g", &["--mode", "gumbel-soft"]);
    let s = train(tmp.path(), "s", &["--mode", "soft"]);
    assert!(records(&g).iter().all(|r| r["mode"] == "gumbel-soft"));
    assert!(records(&s).iter().all(|r| r["mode"] == "soft"));
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let out = train(tmp.path(), "run", &["--arity", "3", "--bits-per-feature", "2", "--depth-factor", "2", "--epochs", "1"]);
    let text = fs::read_to_string(out.join("config.toml")).unwrap();
    let cfg = warp_lnn::NetworkConfig::from_toml_str(&text).unwrap();
    assert!(cfg.layers.iter().all(|l| l.arity == 3));
    assert_eq!(cfg.encoder.bits_per_feature, 2);
    assert_eq!(cfg.depth_factor, 2);
    assert_eq!(cfg.epochs, 1);
    assert_eq!(cfg.seed, 3);
}

#[test]
fn eval_reproduces_final_discrete_accuracy() {
    let tmp = TempDir::new().unwrap();
    let out = train(tmp.path(), "run", &[]);
    let last = records(&out).pop().unwrap();
    let report = ok(&[
        "eval",
        "--netlist",
        out.join("model.netlist").to_str().unwrap(),
        "--config",
        out.join("config.toml").to_str().unwrap(),
    ]);
    let r: Value = serde_json::from_str(&report).unwrap();
    assert_eq!(r["accuracy"], last["acc_discrete"]);
    assert_eq!(r["samples"], 80);
    assert_eq!(r["split"], "val");
    let confusion = r["confusion"].as_array().unwrap();
    assert_eq!(confusion.len(), 2);
    let total: u64 = confusion.iter().flat_map(|row| row.as_array().unwrap()).map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 80);
    let diag: u64 = (0..2).map(|c| confusion[c][c].as_u64().unwrap()).sum();
    assert_eq!(r["correct"].as_u64().unwrap(), diag);
    assert!(r["samples_per_sec"].as_f64().unwrap() > 0.0);
}

#[test]
fn eval_rejects_empty_dataset() {
    let tmp = TempDir::new().unwrap();
    let out = train(tmp.path(), "run", &[]);
    let res = run(&[
        "eval",
        "--netlist",
        out.join("model.netlist").to_str().unwrap(),
        "--config",
        out.join("config.toml").to_str().unwrap(),
        "--split",
        "all",
        "--limit",
        "0",
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("empty"));
    assert!(res.stdout.is_empty());
}

#[test]
fn eval_reports_width_mismatch() {
    let tmp = TempDir::new().unwrap();
    let out = train(tmp.path(), "run", &[]);
    let csv = tmp.path().join("narrow.csv");
    fs::write(&csv, "a,b,label\n0.1,0.2,0\n0.3,0.4,1\n").unwrap();
    let res = run(&[
        "eval",
        "--netlist",
        out.join("model.netlist").to_str().unwrap(),
        "--dataset",
        "csv",
        "--data-path",
        csv.to_str().unwrap(),
        "--split",
        "all",
    ]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("expected 4") && err.contains("got 2"), "{err}");
}

#[test]
fn residual_init_inspects_as_pass_through() {
    let tmp = TempDir::new().unwrap();
    let out = train(tmp.path(), "init", &["--epochs", "0"]);
    let text = ok(&["inspect", out.join("model.netlist").to_str().unwrap()]);
    assert_eq!(text.matches("pass-through 48 (100.0%)").count(), 1, "{text}");
    assert_eq!(text.matches("pass-through 24 (100.0%)").count(), 1, "{text}");
    let summary: Value = serde_json::from_str(&ok(&["inspect", "--json", out.join("model.netlist").to_str().unwrap()])).unwrap();
    for layer in summary["layers"].as_array().unwrap() {
        let gates = layer["gate_counts"].as_array().unwrap();
        let id: u64 = [3, 5].iter().map(|&j| gates[j].as_u64().unwrap()).sum();
        assert_eq!(id, layer["nodes"].as_u64().unwrap());
    }
    assert_eq!(summary["warp_params"], 4 * 72);
    assert_eq!(summary["dlgn_equivalent_params"], 16 * 72);
}

const XOR_NETLIST: &str = "warp-netlist v1
seed 0
config -
encoder 2 1
omega 0 0.5 0.5
layers 1
layer 0 2 1
L0 2 0 1 6
groupsum 1 1 1.0
end
";

#[test]
fn hand_xor_circuit_histogram() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("xor.netlist");
    fs::write(&p, XOR_NETLIST).unwrap();
    let text = ok(&["inspect", p.to_str().unwrap()]);
    let xor_line = text.lines().find(|l| l.trim_start().starts_with("XOR ")).expect("XOR row");
    assert_eq!(xor_line.split_whitespace().nth(1), Some("1"));
    assert_eq!(text.lines().filter(|l| l.ends_with('%') && l.starts_with("    ")).count(), 1);
}

#[test]
fn all_sixteen_gate_names_appear() {
    let tmp = TempDir::new().unwrap();
    let mut text = String::from("warp-netlist v1\nseed 0\nconfig -\nencoder 2 1\nomega 0 0.5 0.5\nlayers 1\nlayer 0 2 16\n");
    for j in 0..16u32 {
        // lexicographic index j lists f(00) first; the hex table has address 0 at bit 0
        let bits: u32 = (0..4).map(|a| ((j >> (3 - a)) & 1) << a).sum();
        text.push_str(&format!("L0 2 0 1 {bits:x}\n"));
    }
    text.push_str("groupsum 2 8 1.0\nend\n");
    let p = tmp.path().join("all.netlist");
    fs::write(&p, text).unwrap();
    let out = ok(&["inspect", p.to_str().unwrap()]);
    for name in warp_lnn::neurons::GATE_NAMES {
        let row = out.lines().find(|l| l.split_whitespace().next() == Some(name));
        assert!(row.is_some_and(|r| r.split_whitespace().nth(1) == Some("1")), "{name} missing:\n{out}");
    }
    for name in ["AND", "OR", "XOR", "NAND", "NOR", "XNOR"] {
        assert!(out.contains(name));
    }
}

#[test]
fn compile_matches_training_netlist() {
    let tmp = TempDir::new().unwrap();
    let out = train(tmp.path(), "run", &[]);
    let compiled = tmp.path().join("again.netlist");
    ok(&[
        "compile",
        "--checkpoint",
        out.join("checkpoint.json").to_str().unwrap(),
        "--out",
        compiled.to_str().unwrap(),
    ]);
    assert_eq!(fs::read(compiled).unwrap(), fs::read(out.join("model.netlist")).unwrap());
}

#[test]
fn config_errors_name_the_file() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "epochs = \"many\"\n").unwrap();
    let res = run(&["train", "--config", bad.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("bad.toml"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn malformed_netlist_reports_line() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("broken.netlist");
    fs::write(&p, XOR_NETLIST.replace("L0 2 0 1 6", "L0 2 0 7 6")).unwrap();
    let res = run(&["inspect", p.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("line 8") && err.contains("dangling wire 7"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["train"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--out", "/nonexistent/x", "--mode", "fuzzy"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}
