use std::fs;

use crf_depth::config::PipelineConfig;
use crf_depth::error::{Error, ErrorClass};
use crf_depth::io::checkpoint::{reseal_with_version, Checkpoint};
use crf_depth::pipeline::{end_to_end, CHECKPOINT_FILE};
use crf_depth::recon::read_cloud;
use crf_depth::Exec;

fn tiny() -> PipelineConfig {
    PipelineConfig::from_json(&format!(
        r#"{{"seed": 23,
            "render": {{"count": 10, "frames_per_scene": 5, "camera": {{"width": 24, "height": 24}}}},
            "superpixel": {{"slic": {{"g_target": 16}}}},
            "unary": {{"conv_channels": [4, 4], "hidden": [8, 8]}},
            "train": {{"epochs": 2, "batch_size": 2, "split": [0.5, 0.2, 0.3]}},
            "recon": {{"frames": 2}}}}"#
    ))
    .unwrap()
}

#[test]
fn end_to_end_writes_every_artifact_and_reproduces() {
    let cfg = tiny();
    let tmp = tempfile::tempdir().unwrap();
    let a = end_to_end(&cfg, &tmp.path().join("a"), Exec::Sequential).unwrap();
    let b = end_to_end(&cfg, &tmp.path().join("b"), Exec::Parallel).unwrap();

    let methods: Vec<&str> = a.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["Unary (FCN Only)", "Unary (Smooth)", "CNN-CRF"]);
    assert_eq!(a.split_sizes, [5, 2, 3]);
    assert_eq!(a.table, b.table);
    assert_eq!(a.rows, b.rows);

    let root = tmp.path().join("a");
    for dir in ["crf", "unary", "unary-smooth"] {
        let bytes = fs::read(root.join(dir).join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(bytes, fs::read(tmp.path().join("b").join(dir).join(CHECKPOINT_FILE)).unwrap(), "{dir}");
    }
    for f in ["comparison.json", "comparison.txt", "eval/crf.json", "eval/unary.json", "eval/unary-smooth.json", "data/manifest.json"] {
        assert!(root.join(f).is_file(), "{f}");
    }
    assert_eq!(a.clouds.len(), 2);
    for c in &a.clouds {
        assert!(!read_cloud(c).unwrap().is_empty());
    }
    assert_eq!(fs::read_to_string(root.join("comparison.txt")).unwrap(), a.table);
}

#[test]
fn failing_stage_is_named() {
    // no validation frames: training cannot select a checkpoint
    let mut cfg = tiny();
    cfg.train.split = [1.0, 0.0, 0.0];
    let tmp = tempfile::tempdir().unwrap();
    let err = end_to_end(&cfg, tmp.path(), Exec::Sequential).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "train-crf", .. }), "{err}");
    assert!(err.to_string().starts_with("stage `train-crf` failed"));
    assert_eq!(err.class(), ErrorClass::Config);
}

#[test]
fn checkpoint_fixtures_on_disk() {
    let cfg = tiny();
    let tmp = tempfile::tempdir().unwrap();
    end_to_end(&cfg, tmp.path(), Exec::Sequential).unwrap();
    let path = tmp.path().join("crf").join(CHECKPOINT_FILE);
    let good = fs::read(&path).unwrap();
    let ckpt = Checkpoint::load(&path).unwrap();
    assert_eq!(ckpt.encode().unwrap(), good);

    let mut flipped = good.clone();
    let mid = good.len() / 2;
    flipped[mid] ^= 0x01;
    let bad = tmp.path().join("flipped.ckpt");
    fs::write(&bad, &flipped).unwrap();
    assert!(matches!(Checkpoint::load(&bad), Err(Error::HashMismatch)));

    fs::write(&bad, &good[..good.len() - 7]).unwrap();
    assert!(matches!(Checkpoint::load(&bad), Err(Error::Truncated { .. })));

    fs::write(&bad, reseal_with_version(&good, 99)).unwrap();
    assert!(matches!(Checkpoint::load(&bad), Err(Error::UnsupportedVersion { found: 99, expected: 1 })));
}
