//! Depth metrics (rel, rms, log10) and checkpoint evaluation.
//!
//! Metrics are computed per superpixel by default; [`EvalMode::Pixel`]
//! broadcasts each node's depth to its member pixels and compares against
//! the per-pixel ground truth instead.

use serde::{Deserialize, Serialize};

use crate::crf::{self, CrfParams};
use crate::error::{Error, Result};
use crate::io::checkpoint::Checkpoint;
use crate::par::Exec;
use crate::render::DEPTH_SENTINEL;
use crate::sample::Sample;
use crate::superpixel::{SuperpixelGraph, UNASSIGNED};
use crate::train::{Mode, Standardization};
use crate::unary::UnaryModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub rel: f64,
    pub rms: f64,
    pub log10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub id: String,
    pub rel: f64,
    pub rms: f64,
    pub log10: f64,
    pub n_values: usize,
    pub log10_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rel: f64,
    pub rms: f64,
    /// NaN (serialised as null) when no estimate was positive.
    pub log10: f64,
    pub n_values: usize,
    /// Estimates `≤ 0` left out of the log10 average.
    pub log10_excluded: usize,
    pub frames: Vec<FrameMetrics>,
}

impl MetricReport {
    pub fn summary(&self) -> MetricSummary {
        MetricSummary {
            rel: self.rel,
            rms: self.rms,
            log10: self.log10,
        }
    }
}

/// rel = mean |gt − est| / gt, rms = sqrt(mean (gt − est)²),
/// log10 = mean |log10 gt − log10 est| over positive estimates.
pub fn metrics(gt: &[f64], est: &[f64]) -> Result<MetricReport> {
    if gt.len() != est.len() {
        return Err(Error::dim("eval", gt.len(), est.len()));
    }
    if gt.is_empty() {
        return Err(Error::Data("no values to evaluate".into()));
    }
    if let Some(i) = gt.iter().position(|&g| !(g > 0.0)) {
        return Err(Error::Data(format!("ground truth at index {i} is {} (must be > 0)", gt[i])));
    }
    let (mut rel, mut sq, mut lg) = (0.0, 0.0, 0.0);
    let mut excluded = 0usize;
    for (&g, &e) in gt.iter().zip(est) {
        rel += (g - e).abs() / g;
        sq += (g - e) * (g - e);
        if e > 0.0 {
            lg += (g.log10() - e.log10()).abs();
        } else {
            excluded += 1;
        }
    }
    let n = gt.len();
    let n_log = n - excluded;
    Ok(MetricReport {
        rel: rel / n as f64,
        rms: (sq / n as f64).sqrt(),
        log10: if n_log > 0 { lg / n_log as f64 } else { f64::NAN },
        n_values: n,
        log10_excluded: excluded,
        frames: Vec::new(),
    })
}

/// Pool per-frame reports: count-weighted means for rel and log10, the
/// pooled quadratic mean for rms. Frame breakdowns are concatenated.
pub fn pool(reports: &[MetricReport]) -> Result<MetricReport> {
    let n: usize = reports.iter().map(|r| r.n_values).sum();
    if n == 0 {
        return Err(Error::Data("no values to evaluate".into()));
    }
    let excluded: usize = reports.iter().map(|r| r.log10_excluded).sum();
    let n_log = n - excluded;
    let rel = reports.iter().map(|r| r.rel * r.n_values as f64).sum::<f64>() / n as f64;
    let sq = reports.iter().map(|r| r.rms * r.rms * r.n_values as f64).sum::<f64>() / n as f64;
    let lg = reports
        .iter()
        .filter(|r| r.n_values > r.log10_excluded)
        .map(|r| r.log10 * (r.n_values - r.log10_excluded) as f64)
        .sum::<f64>();
    Ok(MetricReport {
        rel,
        rms: sq.sqrt(),
        log10: if n_log > 0 { lg / n_log as f64 } else { f64::NAN },
        n_values: n,
        log10_excluded: excluded,
        frames: reports.iter().flat_map(|r| r.frames.iter().cloned()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    #[default]
    Superpixel,
    Pixel,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "superpixel" => Ok(EvalMode::Superpixel),
            "pixel" => Ok(EvalMode::Pixel),
            other => Err(Error::Config(format!("unknown eval mode {other:?} (expected superpixel or pixel)"))),
        }
    }
}

/// A trained model ready to produce per-node depths in mm.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub model: UnaryModel,
    /// Pairwise weights applied by MAP inference; `None` for the raw unary output.
    pub beta: Option<CrfParams>,
    pub standardization: Standardization,
}

impl Predictor {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Predictor> {
        Ok(Predictor {
            model: ckpt.model()?,
            beta: (ckpt.mode != Mode::Unary).then(|| CrfParams::new(ckpt.beta.clone())),
            standardization: ckpt.standardization,
        })
    }

    /// Depth per node of `graph`, in mm.
    pub fn predict(&self, intensity: &[f64], graph: &SuperpixelGraph) -> Result<Vec<f64>> {
        let h = self.model.predict(intensity, graph)?;
        let y = match &self.beta {
            Some(beta) => crf::predict(&h, &crf::assemble(graph, beta)?)?,
            None => h,
        };
        Ok(y.into_iter().map(|z| self.standardization.invert(z)).collect())
    }
}

/// Broadcast node values to their pixels; unassigned pixels get the sentinel.
pub fn broadcast(graph: &SuperpixelGraph, values: &[f64]) -> Vec<f64> {
    graph
        .assignment
        .iter()
        .map(|&a| if a == UNASSIGNED { DEPTH_SENTINEL } else { values[a as usize] })
        .collect()
}

fn frame_metrics(sample: &Sample, est_nodes: &[f64], mode: EvalMode) -> Result<MetricReport> {
    let mut r = match mode {
        EvalMode::Superpixel => metrics(sample.targets(), est_nodes)?,
        EvalMode::Pixel => {
            let dense = broadcast(&sample.graph, est_nodes);
            let (gt, est): (Vec<f64>, Vec<f64>) = sample
                .depth
                .iter()
                .zip(&dense)
                .filter(|(&g, &e)| g != DEPTH_SENTINEL && g > 0.0 && e != DEPTH_SENTINEL)
                .map(|(&g, &e)| (g, e))
                .unzip();
            metrics(&gt, &est)?
        }
    };
    r.frames = vec![FrameMetrics {
        id: sample.id.clone(),
        rel: r.rel,
        rms: r.rms,
        log10: r.log10,
        n_values: r.n_values,
        log10_excluded: r.log10_excluded,
    }];
    Ok(r)
}

/// Predict every sample and pool the metrics in sample order.
pub fn evaluate_samples(predictor: &Predictor, samples: &[&Sample], mode: EvalMode, exec: Exec) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::Data("evaluation split is empty".into()));
    }
    let per_frame = exec.try_map_range(samples.len(), |i| {
        let s = samples[i];
        let est = predictor.predict(&s.intensity, &s.graph)?;
        frame_metrics(s, &est, mode)
    })?;
    pool(&per_frame)
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub rel: f64,
    pub log10: f64,
    pub rms: f64,
}

impl TableRow {
    pub fn new(method: impl Into<String>, r: &MetricReport) -> Self {
        TableRow {
            method: method.into(),
            rel: r.rel,
            log10: r.log10,
            rms: r.rms,
        }
    }
}

pub fn evaluate_checkpoint(ckpt: &Checkpoint, samples: &[&Sample], mode: EvalMode, exec: Exec) -> Result<(MetricReport, TableRow)> {
    let predictor = Predictor::from_checkpoint(ckpt)?;
    let report = evaluate_samples(&predictor, samples, mode, exec)?;
    let row = TableRow::new(ckpt.mode.label(), &report);
    Ok((report, row))
}

/// Aligned text table with columns `Method | rel | log10 | rms`.
pub fn format_table(rows: &[TableRow]) -> String {
    let width = rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max("Method".len());
    let mut out = format!("{:<width$}  {:>8}  {:>8}  {:>8}\n", "Method", "rel", "log10", "rms");
    for r in rows {
        out.push_str(&format!("{:<width$}  {:>8.4}  {:>8.4}  {:>8.4}\n", r.method, r.rel, r.log10, r.rms));
    }
    out
}
