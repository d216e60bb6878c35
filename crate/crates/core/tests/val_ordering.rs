//! Joint training against the unary-only baseline on validation rel error.
//! Takes ~10 min on one core; run with `cargo test --test val_ordering -- --ignored`.

use crf_depth::config::PipelineConfig;
use crf_depth::pipeline::train_to_dir;
use crf_depth::render::generate_dataset;
use crf_depth::sample::{load_samples, Split};
use crf_depth::train::{Mode, TrainReport};
use crf_depth::Exec;

fn best_val_rel(report: &TrainReport) -> f64 {
    let best = report.best_epoch.expect("epochs ran");
    report.epochs[best].val.rel
}

#[test]
#[ignore = "full-scale training run"]
fn crf_beats_unary_on_validation_rel() {
    let cfg = PipelineConfig::from_json(
        r#"{"render": {"count": 200, "camera": {"width": 64, "height": 64}},
            "superpixel": {"slic": {"g_target": 100}},
            "train": {"epochs": 60}}"#,
    )
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let exec = Exec::Parallel;
    let manifest = generate_dataset(&cfg.render, &tmp.path().join("data"), exec).unwrap();
    let samples = load_samples(&manifest, &cfg.superpixel, exec).unwrap();
    let split = Split::contiguous(samples.len(), cfg.train.split).unwrap();

    let (_, crf) = train_to_dir(Mode::Crf, &samples, &split, &cfg, &tmp.path().join("crf"), exec).unwrap();
    let (_, unary) = train_to_dir(Mode::Unary, &samples, &split, &cfg, &tmp.path().join("unary"), exec).unwrap();
    let (c, u) = (best_val_rel(&crf), best_val_rel(&unary));
    println!("val rel: CNN-CRF {c:.4}, unary {u:.4}");
    assert!(c < u, "CNN-CRF {c} vs unary {u}");
}
