//! The full experiment: generate data, train the CNN-CRF and the unary
//! baseline, evaluate the three methods side by side, and reconstruct a few
//! test frames as point clouds.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{self, format_table, MetricReport, Predictor, TableRow};
use crate::io::checkpoint::Checkpoint;
use crate::io::write_json;
use crate::par::Exec;
use crate::recon::{backproject, export_cloud, PointCloud};
use crate::render::generate_dataset;
use crate::sample::{load_samples, Sample, Split};
use crate::train::{self, Mode, TrainReport};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Train one method and write its checkpoint and report into `out`.
/// The smoothed baseline trains the unary model and then fixes β.
pub fn train_to_dir(
    mode: Mode,
    samples: &[Sample],
    split: &Split,
    cfg: &PipelineConfig,
    out: &Path,
    exec: Exec,
) -> Result<(Checkpoint, TrainReport)> {
    let (ckpt, report) = match mode {
        Mode::Crf => train::fit(samples, split, &cfg.unary, &cfg.train, exec)?,
        Mode::Unary => train::fit_unary_only(samples, split, &cfg.unary, &cfg.train, exec)?,
        Mode::UnarySmooth => {
            let (unary, mut report) = train::fit_unary_only(samples, split, &cfg.unary, &cfg.train, exec)?;
            report.mode = Mode::UnarySmooth;
            (train::smoothed(&unary, &cfg.train.smooth_beta)?, report)
        }
    };
    write_artifacts(&ckpt, Some(&report), out)?;
    Ok((ckpt, report))
}

fn write_artifacts(ckpt: &Checkpoint, report: Option<&TrainReport>, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    ckpt.save(&out.join(CHECKPOINT_FILE))?;
    if let Some(r) = report {
        write_json(&out.join(TRAIN_REPORT_FILE), r)?;
    }
    Ok(())
}

/// Predicted depth broadcast to pixels and back-projected, coloured by intensity.
pub fn reconstruct_sample(predictor: &Predictor, sample: &Sample, exec: Exec) -> Result<PointCloud> {
    let nodes = predictor.predict(&sample.intensity, &sample.graph)?;
    let dense = eval::broadcast(&sample.graph, &nodes);
    backproject(&dense, &sample.pose, Some(&sample.intensity), exec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEndReport {
    pub rows: Vec<TableRow>,
    pub table: String,
    pub split_sizes: [usize; 3],
    pub crf_beta: Vec<f64>,
    pub crf_best_epoch: Option<usize>,
    pub unary_best_epoch: Option<usize>,
    pub clouds: Vec<PathBuf>,
    /// Wall-clock per stage; excluded from reproducibility comparisons.
    pub timings: Vec<StageTiming>,
}

/// Run every stage, writing artifacts under `out`:
/// `data/`, `crf/`, `unary/`, `unary-smooth/`, `eval/`, `recon/`,
/// `comparison.json` and `comparison.txt`.
pub fn end_to_end(cfg: &PipelineConfig, out: &Path, exec: Exec) -> Result<EndToEndReport> {
    cfg.validate()?;
    ensure_dir(out)?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |stage: &str, timings: &mut Vec<StageTiming>| {
        timings.push(StageTiming {
            stage: stage.into(),
            seconds: clock.elapsed().as_secs_f64(),
        });
        log::info!("stage {stage} done in {:.1}s", clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let data_dir = out.join("data");
    let manifest = generate_dataset(&cfg.render, &data_dir, exec).map_err(|e| e.in_stage("gen-data"))?;
    lap("gen-data", &mut timings);

    let samples = load_samples(&manifest, &cfg.superpixel, exec).map_err(|e| e.in_stage("segment"))?;
    let split = Split::contiguous(samples.len(), cfg.train.split).map_err(|e| e.in_stage("segment"))?;
    lap("segment", &mut timings);

    let (crf, crf_report) =
        train_to_dir(Mode::Crf, &samples, &split, cfg, &out.join("crf"), exec).map_err(|e| e.in_stage("train-crf"))?;
    lap("train-crf", &mut timings);
    let (unary, unary_report) = train_to_dir(Mode::Unary, &samples, &split, cfg, &out.join("unary"), exec)
        .map_err(|e| e.in_stage("train-unary"))?;
    let smooth = train::smoothed(&unary, &cfg.train.smooth_beta).map_err(|e| e.in_stage("train-unary"))?;
    let mut smooth_report = unary_report.clone();
    smooth_report.mode = Mode::UnarySmooth;
    write_artifacts(&smooth, Some(&smooth_report), &out.join("unary-smooth")).map_err(|e| e.in_stage("train-unary"))?;
    lap("train-unary", &mut timings);

    let part: Vec<&Sample> = split.get(cfg.eval.split).iter().map(|&i| &samples[i]).collect();
    let eval_dir = out.join("eval");
    ensure_dir(&eval_dir).map_err(|e| e.in_stage("eval"))?;
    let mut rows = Vec::new();
    for (ckpt, name) in [(&unary, "unary"), (&smooth, "unary-smooth"), (&crf, "crf")] {
        let (report, row): (MetricReport, TableRow) =
            eval::evaluate_checkpoint(ckpt, &part, cfg.eval.mode, exec).map_err(|e| e.in_stage("eval"))?;
        write_json(&eval_dir.join(format!("{name}.json")), &report).map_err(|e| e.in_stage("eval"))?;
        rows.push(row);
    }
    let table = format_table(&rows);
    lap("eval", &mut timings);

    let recon_dir = out.join("recon");
    ensure_dir(&recon_dir).map_err(|e| e.in_stage("reconstruct"))?;
    let predictor = Predictor::from_checkpoint(&crf).map_err(|e| e.in_stage("reconstruct"))?;
    let mut clouds = Vec::new();
    for &i in split.test.iter().take(cfg.recon.frames) {
        let s = &samples[i];
        let cloud = reconstruct_sample(&predictor, s, exec).map_err(|e| e.in_stage("reconstruct"))?;
        let stem = Path::new(&s.id).file_stem().map_or_else(|| s.id.clone(), |x| x.to_string_lossy().into_owned());
        let path = recon_dir.join(format!("{stem}.ply"));
        export_cloud(&cloud, &path).map_err(|e| e.in_stage("reconstruct"))?;
        clouds.push(path);
    }
    lap("reconstruct", &mut timings);

    let report = EndToEndReport {
        rows,
        table,
        split_sizes: [split.train.len(), split.val.len(), split.test.len()],
        crf_beta: crf.beta.clone(),
        crf_best_epoch: crf_report.best_epoch,
        unary_best_epoch: unary_report.best_epoch,
        clouds,
        timings,
    };
    write_json(&out.join("comparison.json"), &report.rows)?;
    fs::write(out.join("comparison.txt"), &report.table).map_err(|e| Error::io(out.join("comparison.txt"), e))?;
    Ok(report)
}
