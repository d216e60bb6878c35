//! Sequential vs data-parallel execution of the three hot loops: frame
//! rendering, the per-graph training gradient, and evaluation.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use crf_depth::eval::{evaluate_samples, EvalMode, Predictor};
use crf_depth::render::{render_dataset_frame, DatasetConfig};
use crf_depth::sample::{render_samples, Sample};
use crf_depth::superpixel::SuperpixelConfig;
use crf_depth::train::{batch_eval, Loss, Standardization, TrainConfig, TrainState};
use crf_depth::unary::{Architecture, UnaryModel};
use crf_depth::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn dataset() -> DatasetConfig {
    let mut cfg = DatasetConfig {
        count: 8,
        frames_per_scene: 4,
        ..DatasetConfig::default()
    };
    cfg.camera.width = 64;
    cfg.camera.height = 64;
    cfg
}

fn render(c: &mut Criterion) {
    let cfg = dataset();
    let mut group = c.benchmark_group("render_frame");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| render_dataset_frame(&cfg, 0, exec).unwrap())
        });
    }
    group.finish();
}

fn training_and_eval(c: &mut Criterion) {
    let samples = render_samples(&dataset(), &SuperpixelConfig::default(), Exec::default()).unwrap();
    let batch: Vec<&Sample> = samples.iter().collect();
    let model = UnaryModel::init(Architecture::default(), 0).unwrap();
    let st = Standardization::fit(samples.iter().flat_map(|s| s.targets().iter().copied())).unwrap();
    let state = TrainState::new(model.clone(), vec![0.5, 0.5]);
    let cfg = TrainConfig::default();

    let mut group = c.benchmark_group("batch_gradient");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| batch_eval(&batch, &state, Loss::Nll, &st, &cfg, exec).unwrap())
        });
    }
    group.finish();

    let predictor = Predictor {
        model,
        beta: Some(crf_depth::crf::CrfParams::new(vec![0.5, 0.5])),
        standardization: st,
    };
    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate_samples(&predictor, &batch, EvalMode::Superpixel, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, render, training_and_eval);
criterion_main!(benches);
