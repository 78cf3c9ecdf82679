//! Exercises the binary end to end on a tiny dataset.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skelattack")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn tiny(dir: &Path) {
    fs::write(dir.join("spec.toml"), "class_count = 3\nsamples_per_class = 8\nframe_count = 16\n").unwrap();
    ok(dir, &["gen-data", "--spec", "spec.toml", "--out", "data"]);
    ok(dir, &["train", "--arch", "frame-mlp", "--data", "data", "--out", "m.ckpt", "--epochs", "15", "--batch-size", "8"]);
}

#[test]
fn version_lists_format_versions() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok(dir.path(), &["--version"]);
    assert!(v.contains(env!("CARGO_PKG_VERSION")) && v.contains("checkpoint format 1"), "{v}");
}

#[test]
fn default_spec_summary_names_eight_classes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["gen-data", "--out", "d"]);
    assert!(out.starts_with("8 classes, 800 motions"), "{out}");
    assert!(dir.path().join("d/manifest.json").is_file());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "class_count = 0\n").unwrap();
    fs::write(d.join("unknown.toml"), "colour = 1\n").unwrap();
    for args in [
        vec!["gen-data", "--spec", "bad.toml", "--out", "x"],
        vec!["gen-data", "--spec", "unknown.toml", "--out", "x"],
        vec!["eval", "--ckpt", "missing.ckpt", "--data", "x"],
        vec!["--config", "missing.toml", "gen-data", "--out", "x"],
    ] {
        let out = run(d, &args);
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn pipeline_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny(d);

    let eval: serde_json::Value = serde_json::from_str(&ok(d, &["eval", "--ckpt", "m.ckpt", "--data", "data"])).unwrap();
    let acc = eval["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(eval["confusion"].as_array().unwrap().len(), 3);

    // abn:N needs N below the class count
    assert!(!run(d, &["attack", "--ckpt", "m.ckpt", "--data", "data", "--strategy", "abn:3", "--out", "x"]).status.success());

    ok(d, &["--seed", "3", "attack", "--ckpt", "m.ckpt", "--data", "data", "--strategy", "ab", "--max-iters", "30", "--out", "adv"]);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(d.join("adv/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 3);
    let motions = m["motions"].as_array().unwrap();
    assert!(!motions.is_empty());
    let rate = m["success_rate"].as_f64().unwrap();
    let successes = motions.iter().filter(|x| x["success"] == true).count();
    assert_eq!(rate, successes as f64 / motions.len() as f64);
    for x in motions {
        let doc: serde_json::Value = serde_json::from_slice(&fs::read(d.join("adv").join(x["file"].as_str().unwrap())).unwrap()).unwrap();
        assert_eq!(doc["origin_id"], x["id"]);
        assert_eq!(doc["attack"]["success"], x["success"]);
    }

    // analyzing a dataset against itself gives zero displacement everywhere
    ok(d, &["analyze", "--orig", "data", "--adv", "data", "--out", "same"]);
    let rows = csv_rows(&d.join("same/samples.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() == 0.0));

    ok(d, &["analyze", "--orig", "data", "--adv", "adv", "--out", "rep", "--by-class"]);
    for f in ["disp_disp.csv", "disp_vel.csv", "disp_acc.csv", "summary.json", "samples.csv"] {
        assert!(d.join("rep").join(f).is_file(), "{f}");
    }

    let report: serde_json::Value = serde_json::from_str(&ok(
        d,
        &["transfer", "--surrogate", "m.ckpt", "--targets", "m.ckpt", "--data", "data", "--max-iters", "30"],
    ))
    .unwrap();
    assert_eq!(report["targets"][0]["success_rate"], report["white_box_success_rate"]);
}

/// Data rows of a headered CSV with no quoted fields.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), "seed = 9\n[dataset]\nclass_count = 3\nsamples_per_class = 5\nframe_count = 12\n").unwrap();
    let out = ok(d, &["--config", "run.toml", "gen-data", "--out", "data"]);
    assert!(out.contains("seed 9"), "{out}");
    assert!(out.starts_with("3 classes, 15 motions"), "{out}");
}

#[test]
fn gradcheck_passes_on_one_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["gradcheck", "--arch", "bone-tconv", "--motions", "2"]);
    assert!(!out.contains("FAIL"), "{out}");
    assert!(out.contains("objective/bone-tconv/abn"));
}
