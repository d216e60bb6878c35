use std::path::Path;
use std::process::{Command, Output};

fn crf_depth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crf-depth"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("CRF_DEPTH_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = crf_depth(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small enough that a full train/eval round trip takes seconds.
const TINY: &str = r#"{
  "seed": 5,
  "render": {"count": 8, "frames_per_scene": 4, "camera": {"width": 24, "height": 24}},
  "superpixel": {"slic": {"g_target": 16}},
  "unary": {"conv_channels": [4, 4], "hidden": [8, 8]},
  "train": {"epochs": 2, "batch_size": 2, "split": [0.5, 0.25, 0.25]}
}"#;

#[test]
fn gen_data_writes_pairs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    ok(&["--threads", "1", "gen-data", "--count", "5", "--seed", "7", "--res", "24x20", "--out", p(&out)]);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let entries = manifest.as_array().unwrap();
    assert_eq!(entries.len(), 5);
    for e in entries {
        assert!(out.join(e["image"].as_str().unwrap()).is_file());
        assert!(out.join(e["depth"].as_str().unwrap()).is_file());
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = crf_depth(&["gen-data", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(crf_depth(&[]).status.code(), Some(2));
}

#[test]
fn error_classes_map_to_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"trian": {}}"#).unwrap();
    let config = crf_depth(&["--config", p(&cfg), "verify"]);
    assert_eq!(config.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&config.stderr).contains("config"));

    let missing = crf_depth(&["eval", "--ckpt", p(&dir.path().join("none.ckpt")), "--data", p(dir.path())]);
    assert_eq!(missing.status.code(), Some(6));

    let garbage = dir.path().join("garbage.ckpt");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    let data = crf_depth(&["predict", "--ckpt", p(&garbage), "--image", p(&garbage), "--out", p(&dir.path().join("o.pfm"))]);
    assert_eq!(data.status.code(), Some(4));

    assert_eq!(crf_depth(&["--threads", "0", "verify"]).status.code(), Some(3));
}

#[test]
fn verify_passes() {
    let stdout = ok(&["verify"]);
    assert!(stdout.contains("all 9 suites passed"), "{stdout}");
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn segment_train_eval_predict_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = root.join("tiny.json");
    std::fs::write(&cfg, TINY).unwrap();
    let data = root.join("data");
    let c = ["--threads", "1", "--config", p(&cfg)];
    let with = |rest: &[&str]| -> Vec<String> { c.iter().chain(rest).map(|s| s.to_string()).collect() };
    let run = |rest: &[&str]| {
        let args = with(rest);
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
    };

    run(&["gen-data", "--out", p(&data)]);
    let graph = root.join("graph.json");
    run(&["segment", "--in", p(&data.join("frame_00000.png")), "--depth", p(&data.join("frame_00000.pfm")), "--g", "12", "--out", p(&graph)]);
    let g: serde_json::Value = serde_json::from_slice(&std::fs::read(&graph).unwrap()).unwrap();
    assert_eq!(g["features"].as_array().unwrap().len(), g["g"].as_u64().unwrap() as usize);
    assert!(g["S"].as_object().unwrap().len() == 2);

    let ck = root.join("crf");
    run(&["train", "--data", p(&data), "--mode", "crf", "--out", p(&ck)]);
    assert!(ck.join("model.ckpt").is_file());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(ck.join("train_report.json")).unwrap()).unwrap();
    assert_eq!(report["epochs"].as_array().unwrap().len(), 2);

    let eval_out = root.join("eval.json");
    let table = run(&["eval", "--ckpt", p(&ck.join("model.ckpt")), "--data", p(&data), "--split", "test", "--out", p(&eval_out)]);
    assert!(table.contains("CNN-CRF"), "{table}");
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(&eval_out).unwrap()).unwrap();
    assert_eq!(rep["frames"].as_array().unwrap().len(), 2);

    let pfm = root.join("pred.pfm");
    run(&["predict", "--ckpt", p(&ck.join("model.ckpt")), "--image", p(&data.join("frame_00006.png")), "--out", p(&pfm)]);
    assert!(pfm.is_file());

    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(data.join("manifest.json")).unwrap()).unwrap();
    let pose = root.join("pose.json");
    std::fs::write(&pose, manifest[6]["pose"].to_string()).unwrap();
    let cloud = root.join("cloud.ply");
    let msg = run(&["reconstruct", "--ckpt", p(&ck.join("model.ckpt")), "--image", p(&data.join("frame_00006.png")), "--pose", p(&pose), "--out", p(&cloud)]);
    assert!(msg.contains("points"));
    let truth = root.join("truth.ply");
    run(&["reconstruct", "--depth", p(&data.join("frame_00006.pfm")), "--pose", p(&pose), "--out", p(&truth)]);
    assert!(std::fs::read_to_string(&truth).unwrap().starts_with("ply\n"));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    std::fs::write(&cfg, TINY).unwrap();
    let mut ckpts = Vec::new();
    for k in 0..2 {
        let data = dir.path().join(format!("data{k}"));
        let out = dir.path().join(format!("ck{k}"));
        ok(&["--threads", "1", "--config", p(&cfg), "gen-data", "--out", p(&data)]);
        ok(&["--threads", "1", "--config", p(&cfg), "train", "--data", p(&data), "--mode", "unary-smooth", "--out", p(&out)]);
        ckpts.push(std::fs::read(out.join("model.ckpt")).unwrap());
    }
    assert_eq!(ckpts[0], ckpts[1]);
}
