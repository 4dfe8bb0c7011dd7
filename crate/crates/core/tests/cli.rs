//! End-to-end runs of the command-line binary.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::quick_config;
use stn_grasp::cli::{GraspOutput, RunManifest};
use stn_grasp::render::{base_image, render, OverlayMeta, TRACE_PANELS};
use stn_grasp::train::TrainConfig;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stn-grasp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, count: usize) -> PathBuf {
    let data = dir.join("data");
    ok(&["synth-data", "--out", s(&data), "--count", &count.to_string(), "--seed", "3"]);
    data
}

fn write_config(dir: &Path, name: &str, cfg: &TrainConfig) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn validate_data_reports_counts_and_skips() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 2);
    let out = ok(&["validate-data", "--data", s(&data), "--out", s(&tmp.path().join("v1"))]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("images: 2"), "{text}");
    assert!(text.contains("skipped rectangles: 0"));
    let m = manifest(&tmp.path().join("v1"));
    assert_eq!(m.command, "validate-data");
    assert!(m.dataset_hash.is_some());

    let cpos = data.join("pcd0100cpos.txt");
    let mut text = fs::read_to_string(&cpos).unwrap();
    text.push_str("NaN NaN\nNaN NaN\nNaN NaN\nNaN NaN\n");
    fs::write(&cpos, text).unwrap();
    let out = ok(&["validate-data", "--data", s(&data), "--out", s(&tmp.path().join("v2"))]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("skipped rectangles: 1"));

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(bin(&["validate-data", "--data", s(&empty)]).status.code(), Some(2));
    assert_eq!(bin(&["validate-data"]).status.code(), Some(2));
}

#[test]
fn train_eval_and_error_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 5);
    let mut cfg = quick_config(1);
    cfg.train_ratio = 0.8;
    let config = write_config(tmp.path(), "train.toml", &cfg);
    let run = tmp.path().join("run");
    ok(&["train", "--data", s(&data), "--config", s(&config), "--out", s(&run), "--phases", ""]);
    let m = manifest(&run);
    assert_eq!(m.command, "train");
    assert_eq!(m.seed, Some(cfg.seed));
    assert!(m.config_hash.is_some() && m.dataset_hash.is_some());
    for f in ["model.ckpt", "train_log.jsonl", "train_summary.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("train_summary.json")).unwrap()).unwrap();
    assert!(summary["finetune"].as_array().unwrap().is_empty());

    let ckpt = run.join("model.ckpt");
    let eval = tmp.path().join("eval");
    let out = ok(&[
        "eval", "--data", s(&data), "--checkpoint", s(&ckpt), "--split", "0", "--method", "both", "--config",
        s(&config), "--out", s(&eval),
    ]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("Direct regression") && table.contains("Multi-stage STN"), "{table}");
    assert!(eval.join("eval_report.json").is_file() && eval.join("eval_table.txt").is_file());

    let mut other = cfg.clone();
    other.model.num_candidates = 3;
    let other = write_config(tmp.path(), "other.toml", &other);
    let r = bin(&[
        "eval", "--data", s(&data), "--checkpoint", s(&ckpt), "--split", "0", "--config", s(&other), "--out",
        s(&eval),
    ]);
    assert_eq!(r.status.code(), Some(4), "{}", String::from_utf8_lossy(&r.stderr));

    let r = bin(&["train", "--data", s(&data), "--config", s(&config), "--out", s(&run), "--phases", "stage7"]);
    assert_eq!(r.status.code(), Some(2));

    let mut wild = cfg.clone();
    // The first update overflows the f32 parameter storage.
    wild.pretrain.lr = 1e39;
    let wild = write_config(tmp.path(), "wild.toml", &wild);
    let bad = tmp.path().join("bad");
    let r = bin(&["train", "--data", s(&data), "--config", s(&wild), "--out", s(&bad), "--phases", ""]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(bad.join("model.ckpt.aborted").is_file());
    assert!(bad.join("model.ckpt").is_file());
    assert_eq!(manifest(&bad).command, "train");
}

#[test]
fn detect_and_trace_write_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 1);
    let init = tmp.path().join("init");
    ok(&["init", "--out", s(&init)]);
    let ckpt = init.join("model.ckpt");
    let (rgb, depth) = (data.join("pcd0100r.png"), data.join("pcd0100d.png"));

    let run = |dir: &str| {
        let out = tmp.path().join(dir);
        ok(&["detect", "--image", s(&rgb), "--depth", s(&depth), "--checkpoint", s(&ckpt), "--out", s(&out)]);
        out
    };
    let (a, b) = (run("d1"), run("d2"));
    let g: GraspOutput = serde_json::from_str(&fs::read_to_string(a.join("grasp.json")).unwrap()).unwrap();
    assert_eq!((g.x, g.y, g.theta_deg, g.w, g.h, g.score), (200.0, 200.0, 0.0, 60.0, 30.0, 0.5));
    for f in ["grasp.json", "detection.png", "detection.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs across runs");
    }
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!((ma.config_hash, ma.dataset_hash), (mb.config_hash, mb.dataset_hash));

    let trace = tmp.path().join("trace");
    ok(&["trace", "--image", s(&rgb), "--depth", s(&depth), "--checkpoint", s(&ckpt), "--out", s(&trace)]);
    let t: serde_json::Value = serde_json::from_str(&fs::read_to_string(trace.join("trace.json")).unwrap()).unwrap();
    assert_eq!(t["candidates"].as_array().unwrap().len(), 4);
    let base = base_image(&stn_grasp::cli::load_frame(&rgb, &depth).unwrap());
    for panel in TRACE_PANELS {
        let meta: OverlayMeta =
            serde_json::from_str(&fs::read_to_string(trace.join(format!("{panel}.json"))).unwrap()).unwrap();
        let png = image::open(trace.join(format!("{panel}.png"))).unwrap().to_rgb8();
        assert!(render(&base, &meta) == png, "{panel} does not match its sidecar");
    }

    let small = tmp.path().join("small.png");
    image::RgbImage::new(100, 100).save(&small).unwrap();
    let small_d = tmp.path().join("small_d.png");
    image::ImageBuffer::<image::Luma<u16>, _>::from_pixel(100, 100, image::Luma([700u16])).save(&small_d).unwrap();
    let r = bin(&["detect", "--image", s(&small), "--depth", s(&small_d), "--checkpoint", s(&ckpt), "--out", s(&a)]);
    assert_eq!(r.status.code(), Some(2));
    let r = bin(&["detect", "--image", s(&rgb), "--depth", s(&depth), "--checkpoint", s(&rgb), "--out", s(&a)]);
    assert_ne!(r.status.code(), Some(0));
}

#[test]
fn default_config_round_trips() {
    let out = ok(&["default-config"]);
    let cfg = TrainConfig::from_toml(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(cfg, TrainConfig::default());
}
