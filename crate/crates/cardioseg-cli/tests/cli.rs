//! End-to-end tests of the `cardioseg` binary: every subcommand, the exit
//! code contract, and artifact layout.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cardioseg"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn cardioseg")
}

fn assert_ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_smoke_cfg(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("smoke.cfg");
    std::fs::write(
        &path,
        "recipe = toy\nepochs = 1\nbatch_size = 2\nimage_size = 32\nbase_width = 2\n\
         n_points = 12\npointnet_width = 4\nd_width_div = 32\ncheckpoint_every = 1\nseed = 11\n",
    )
    .unwrap();
    path
}

fn gen_tiny(data: &Path) {
    let out = run(&[
        "gen-data",
        "--out",
        data.to_str().unwrap(),
        "--source-split",
        "2,1,0",
        "--target-split",
        "2,0,1",
        "--image-size",
        "40",
        "--slices",
        "3",
        "--seed",
        "3",
    ]);
    assert_ok(&out);
}

/// Map from relative path to file bytes, for whole-tree comparisons.
fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn usage_errors_exit_2_and_help_exits_0() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("gen-data") && text.contains("ablate"));

    let bad = run(&["train", "--bogus-flag"]);
    assert_eq!(bad.status.code(), Some(2));

    let unknown = run(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1_with_message() {
    let out = run(&["report", "--input", "/definitely/not/there.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_smoke_cfg(dir.path());
    let noset = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "epochs", // missing =value
        "--data",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(noset.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&noset.stderr).contains("KEY=VALUE"));
}

#[test]
fn gen_data_is_deterministic_and_respects_force() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    gen_tiny(&a);
    gen_tiny(&b);
    let ta = tree_bytes(&a);
    let tb = tree_bytes(&b);
    // Identical trees up to the manifest's timestamp/argv (same layout).
    assert_eq!(
        ta.keys().collect::<Vec<_>>(),
        tb.keys().collect::<Vec<_>>()
    );
    for (rel, bytes) in &ta {
        if rel == "run_manifest.json" {
            continue;
        }
        assert_eq!(bytes, &tb[rel], "file {rel} differs between identical runs");
    }

    // Refuses to clobber without --force, replaces with it.
    let refuse = bin()
        .args(["gen-data", "--out", a.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(refuse.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&refuse.stderr).contains("--force"));
    let forced = run(&[
        "gen-data",
        "--out",
        a.to_str().unwrap(),
        "--force",
        "--source-split",
        "2,1,0",
        "--target-split",
        "2,0,1",
        "--image-size",
        "40",
        "--slices",
        "3",
        "--seed",
        "3",
    ]);
    assert_ok(&forced);
    let ta2 = tree_bytes(&a);
    for (rel, bytes) in &ta2 {
        if rel == "run_manifest.json" {
            continue;
        }
        assert_eq!(bytes, &ta[rel], "file {rel} differs after forced regeneration");
    }
}

#[test]
fn split_fractions_default_to_70_10_20() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = run(&[
        "gen-data",
        "--out",
        data.to_str().unwrap(),
        "--source",
        "10",
        "--target",
        "10",
        "--image-size",
        "40",
        "--slices",
        "2",
    ]);
    assert_ok(&out);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(data.join("manifest.json")).unwrap()).unwrap();
    for domain in ["source", "target"] {
        assert_eq!(manifest[domain]["train"].as_array().unwrap().len(), 7);
        assert_eq!(manifest[domain]["val"].as_array().unwrap().len(), 1);
        assert_eq!(manifest[domain]["test"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn train_eval_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_tiny(&data);
    let cfg = write_smoke_cfg(dir.path());
    let run_dir = dir.path().join("run");

    let train = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    let text = assert_ok(&train);
    assert!(text.contains("best val dice"));
    assert!(run_dir.join("checkpoint.safetensors").is_file());
    assert!(run_dir.join("history.jsonl").is_file());
    assert!(run_dir.join("config.txt").is_file());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run_dir.join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["build_hash"].as_str().unwrap().len(), 64);

    let eval_dir = dir.path().join("eval");
    let eval = run(&[
        "eval",
        "--checkpoint",
        run_dir.join("checkpoint.safetensors").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert_ok(&eval);
    assert!(eval_dir.join("report.json").is_file());
    assert!(eval_dir.join("emd_boxplot.svg").is_file());

    let report = run(&["report", "--input", eval_dir.join("report.json").to_str().unwrap()]);
    let text = assert_ok(&report);
    assert!(text.contains("LV") && text.contains("mean slice EMD"));
}

#[test]
fn echo_gt_eval_scores_all_ones() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_tiny(&data);
    let cfg = write_smoke_cfg(dir.path());
    let out_dir = dir.path().join("echo");
    let eval = run(&[
        "eval",
        "--echo-gt",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_ok(&eval);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert!((report["average_dice"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    for ps in report["per_structure"].as_array().unwrap() {
        assert!((ps["dice"]["mean"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!(ps["hd"]["mean"].as_f64().unwrap().abs() < 1e-12);
    }
}

#[test]
fn ablate_writes_one_row_per_arm() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_tiny(&data);
    let cfg = write_smoke_cfg(dir.path());
    let out_dir = dir.path().join("ablate");
    let out = run(&[
        "ablate",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--grid",
        "none;d2",
        "--seeds",
        "1",
    ]);
    let table = assert_ok(&out);
    assert!(table.contains("baseline") && table.contains("d2"));
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(json["arms"].as_array().unwrap().len(), 2);
    assert!(out_dir.join("baseline/seed1/eval/report.json").is_file());
    assert!(out_dir.join("d2/seed1/checkpoint.safetensors").is_file());
}

#[test]
fn pointcloud_utilities_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.xyz");
    let b = dir.path().join("b.xyz");
    // Four corners of a unit square at z = 0.5 and a translated copy.
    std::fs::write(
        &a,
        "0 0 0.5\n1 0 0.5\n0 1 0.5\n1 1 0.5\n",
    )
    .unwrap();
    std::fs::write(
        &b,
        "0.1 0 0.5\n1.1 0 0.5\n0.1 1 0.5\n1.1 1 0.5\n",
    )
    .unwrap();

    let emd_out = run(&["pointcloud", "emd", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap()]);
    let cost: f64 = assert_ok(&emd_out).trim().parse().unwrap();
    assert!((cost - 0.4).abs() < 1e-9, "cost {cost}");

    let with_matching = run(&[
        "pointcloud",
        "emd",
        "--a",
        a.to_str().unwrap(),
        "--b",
        b.to_str().unwrap(),
        "--matching",
    ]);
    let text = assert_ok(&with_matching);
    assert!(text.contains("0 -> 0") && text.contains("3 -> 3"));

    let chamfer_out =
        run(&["pointcloud", "chamfer", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap()]);
    let ch: f64 = assert_ok(&chamfer_out).trim().parse().unwrap();
    assert!(ch > 0.0);

    let sub = dir.path().join("sub.xyz");
    let fps = run(&[
        "pointcloud",
        "fps",
        "--input",
        a.to_str().unwrap(),
        "--k",
        "2",
        "--output",
        sub.to_str().unwrap(),
    ]);
    assert_ok(&fps);
    let lines = std::fs::read_to_string(&sub).unwrap();
    assert_eq!(lines.lines().count(), 2);
}
