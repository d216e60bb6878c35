//! Joint SGD over the unary parameters γ and the pairwise weights β.
//!
//! The objective is the mean negative log-likelihood over a batch plus
//! `λ1/2 ‖γ‖² + λ2/2 ‖β‖²`. Updates use classical momentum
//! (`v ← μv − lr·g; θ ← θ + v`) followed by projecting β onto `β ≥ 0`.
//! Depth targets are z-scored with statistics of the training nodes, and the
//! epoch with the lowest validation log10 error is kept.
//!
//! The unary-only baseline runs the identical loop with the least-squares
//! loss `Σ (y_i − h_i)²` and no β. Per-graph work inside a batch may run in
//! parallel; gradients are summed in batch order so results do not depend on
//! the thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crf::{self, CrfParams};
use crate::error::{Error, Result};
use crate::eval::{self, MetricSummary, Predictor};
use crate::io::checkpoint::Checkpoint;
use crate::par::Exec;
use crate::sample::{Sample, Split};
use crate::seed::derive_seed;
use crate::superpixel::graph::CHANNEL_NAMES;
use crate::unary::{Architecture, InputNorm, UnaryModel};

const INIT_STREAM: u64 = 11;
const SHUFFLE_STREAM: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Joint unary + CRF training on the exact NLL.
    Crf,
    /// Least-squares unary regressor, no pairwise term.
    Unary,
    /// Unary regressor smoothed after training with a fixed β.
    UnarySmooth,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Crf => "CNN-CRF",
            Mode::Unary => "Unary (FCN Only)",
            Mode::UnarySmooth => "Unary (Smooth)",
        }
    }

    fn loss(self) -> Loss {
        match self {
            Mode::Crf => Loss::Nll,
            Mode::Unary | Mode::UnarySmooth => Loss::LeastSquares,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "crf" => Ok(Mode::Crf),
            "unary" => Ok(Mode::Unary),
            "unary-smooth" => Ok(Mode::UnarySmooth),
            other => Err(Error::Config(format!("unknown mode {other:?} (expected crf, unary or unary-smooth)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Nll,
    LeastSquares,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Base learning rate, before variance scaling.
    pub lr0: f64,
    /// Divide `lr0` by the variance of the training depths (mm²). Off by
    /// default: on standardised targets `lr0` already works unscaled.
    pub scale_lr_by_variance: bool,
    pub momentum: f64,
    /// Weight decay on γ.
    pub lambda1: f64,
    /// Weight decay on β.
    pub lambda2: f64,
    /// Fractional learning-rate decrease applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Train / validation / test fractions over frames, in order.
    pub split: [f64; 3],
    pub seed: u64,
    /// Initial β for every similarity channel.
    pub beta_init: f64,
    /// Fixed β used by the post-hoc smoothed unary baseline.
    pub smooth_beta: Vec<f64>,
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-5,
            scale_lr_by_variance: false,
            momentum: 0.9,
            lambda1: 0.0007,
            lambda2: 0.0007,
            lr_decay: 0.2,
            decay_every: 20,
            epochs: 60,
            batch_size: 4,
            split: [0.55, 0.40, 0.05],
            seed: 0,
            beta_init: 0.1,
            smooth_beta: vec![1.0; CHANNEL_NAMES.len()],
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("train: {m}")));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad("weight decay must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.lr_decay) {
            return bad(format!("lr_decay must be in [0, 1), got {}", self.lr_decay));
        }
        if self.decay_every == 0 || self.batch_size == 0 {
            return bad("decay_every and batch_size must be positive".into());
        }
        if self.split.iter().any(|f| !(0.0..=1.0).contains(f)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split {:?} must sum to 1", self.split));
        }
        if !(self.beta_init >= 0.0) || self.smooth_beta.iter().any(|b| !(*b >= 0.0)) {
            return bad("beta values must be non-negative".into());
        }
        if self.smooth_beta.len() != CHANNEL_NAMES.len() {
            return bad(format!("smooth_beta needs {} values", CHANNEL_NAMES.len()));
        }
        Ok(())
    }

    /// Learning rate in effect during (0-based) `epoch`, before variance scaling.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * (1.0 - self.lr_decay).powi((epoch / self.decay_every) as i32)
    }
}

/// Affine depth transform `z = (d - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

impl Default for Standardization {
    fn default() -> Self {
        Standardization { mean: 0.0, std: 1.0 }
    }
}

impl Standardization {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Err(Error::Data("no depth values to standardize".into()));
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
        let std = if var > 1e-12 { var.sqrt() } else { 1.0 };
        Ok(Standardization { mean, std })
    }

    pub fn apply(&self, d: f64) -> f64 {
        (d - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        self.mean + self.std * z
    }
}

/// Mutable optimisation state.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: UnaryModel,
    pub beta: Vec<f64>,
    pub vel_gamma: Vec<f64>,
    pub vel_beta: Vec<f64>,
    pub epoch: usize,
}

impl TrainState {
    pub fn new(model: UnaryModel, beta: Vec<f64>) -> Self {
        let n = model.params().len();
        let k = beta.len();
        TrainState {
            model,
            beta,
            vel_gamma: vec![0.0; n],
            vel_beta: vec![0.0; k],
            epoch: 0,
        }
    }
}

/// Objective value and gradients for one batch.
#[derive(Debug, Clone)]
pub struct BatchEval {
    pub objective: f64,
    /// Mean data term without the regularisers.
    pub data_loss: f64,
    pub grad_gamma: Vec<f64>,
    pub grad_beta: Vec<f64>,
    /// Number of CRF likelihood evaluations performed.
    pub crf_evaluations: u64,
}

/// Objective and gradient over `batch`; targets are standardised with `st`.
pub fn batch_eval(
    batch: &[&Sample],
    state: &TrainState,
    loss: Loss,
    st: &Standardization,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<BatchEval> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let params = CrfParams::new(state.beta.clone());
    let per_graph = exec.try_map_range(batch.len(), |b| -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let s = batch[b];
        let y: Vec<f64> = s.graph.targets()?.iter().map(|&d| st.apply(d)).collect();
        let (h, cache) = state.model.forward(&s.intensity, &s.graph)?;
        match loss {
            Loss::Nll => {
                let m = crf::assemble(&s.graph, &params)?;
                let ev = crf::evaluate(&y, &h, &m, &s.graph)?;
                let gg = state.model.backward(&cache, &ev.grad_h)?;
                Ok((ev.nll, gg, ev.grad_beta))
            }
            Loss::LeastSquares => {
                let value = y.iter().zip(&h).map(|(y, h)| (y - h) * (y - h)).sum();
                let gh: Vec<f64> = y.iter().zip(&h).map(|(y, h)| 2.0 * (h - y)).collect();
                let gg = state.model.backward(&cache, &gh)?;
                Ok((value, gg, vec![0.0; state.beta.len()]))
            }
        }
    })?;

    let inv = 1.0 / batch.len() as f64;
    let mut data_loss = 0.0;
    let mut grad_gamma = vec![0.0; state.model.params().len()];
    let mut grad_beta = vec![0.0; state.beta.len()];
    for (value, gg, gb) in &per_graph {
        data_loss += value;
        grad_gamma.iter_mut().zip(gg).for_each(|(a, b)| *a += b);
        grad_beta.iter_mut().zip(gb).for_each(|(a, b)| *a += b);
    }
    data_loss *= inv;
    grad_gamma.iter_mut().for_each(|g| *g *= inv);
    grad_beta.iter_mut().for_each(|g| *g *= inv);

    let reg = regularizer(state, loss, cfg);
    for (g, p) in grad_gamma.iter_mut().zip(state.model.params()) {
        *g += cfg.lambda1 * p;
    }
    if loss == Loss::Nll {
        for (g, b) in grad_beta.iter_mut().zip(&state.beta) {
            *g += cfg.lambda2 * b;
        }
    }
    Ok(BatchEval {
        objective: data_loss + reg,
        data_loss,
        grad_gamma,
        grad_beta,
        crf_evaluations: if loss == Loss::Nll { batch.len() as u64 } else { 0 },
    })
}

/// `λ1/2 ‖γ‖² + λ2/2 ‖β‖²`; β only counts under the NLL loss.
fn regularizer(state: &TrainState, loss: Loss, cfg: &TrainConfig) -> f64 {
    let g2: f64 = state.model.params().iter().map(|p| p * p).sum();
    let b2: f64 = if loss == Loss::Nll { state.beta.iter().map(|b| b * b).sum() } else { 0.0 };
    0.5 * cfg.lambda1 * g2 + 0.5 * cfg.lambda2 * b2
}

/// Regularised mean NLL of a batch.
pub fn objective(batch: &[&Sample], state: &TrainState, st: &Standardization, cfg: &TrainConfig) -> Result<f64> {
    let params = CrfParams::new(state.beta.clone());
    let mut total = 0.0;
    for s in batch {
        let y: Vec<f64> = s.graph.targets()?.iter().map(|&d| st.apply(d)).collect();
        let h = state.model.predict(&s.intensity, &s.graph)?;
        let m = crf::assemble(&s.graph, &params)?;
        total += crf::nll(&y, &h, &m)?;
    }
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    Ok(total / batch.len() as f64 + regularizer(state, Loss::Nll, cfg))
}

/// One momentum update followed by the projection `β ← max(β, 0)`.
pub fn step(state: &mut TrainState, grad_gamma: &[f64], grad_beta: &[f64], lr: f64, momentum: f64) -> Result<()> {
    if grad_gamma.len() != state.vel_gamma.len() {
        return Err(Error::dim("train", state.vel_gamma.len(), grad_gamma.len()));
    }
    if grad_beta.len() != state.vel_beta.len() {
        return Err(Error::dim("train", state.vel_beta.len(), grad_beta.len()));
    }
    if let Some(i) = grad_gamma.iter().position(|g| !g.is_finite()) {
        return Err(Error::Divergence(state.model.block_of(i)));
    }
    if let Some(k) = grad_beta.iter().position(|g| !g.is_finite()) {
        return Err(Error::Divergence(format!("beta[{k}]")));
    }
    for (v, g) in state.vel_gamma.iter_mut().zip(grad_gamma) {
        *v = momentum * *v - lr * g;
    }
    for (v, g) in state.vel_beta.iter_mut().zip(grad_beta) {
        *v = momentum * *v - lr * g;
    }
    let vel = &state.vel_gamma;
    state.model.update_params(|p| p.iter_mut().zip(vel).for_each(|(p, v)| *p += v));
    for (b, v) in state.beta.iter_mut().zip(&state.vel_beta) {
        *b = (*b + v).max(0.0);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0-based epoch index.
    pub epoch: usize,
    pub lr: f64,
    /// Mean of the batch objectives seen during the epoch.
    pub train_objective: f64,
    pub val: MetricSummary,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: Mode,
    pub lr0_effective: f64,
    pub standardization: Standardization,
    pub input_norm: InputNorm,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_log10: Option<f64>,
    pub crf_evaluations: u64,
}

/// Train in `mode` on the `split.train` frames, selecting by `split.val`.
pub fn fit_mode(
    mode: Mode,
    samples: &[Sample],
    split: &Split,
    arch: &Architecture,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<(Checkpoint, TrainReport)> {
    cfg.validate()?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Config(format!(
            "split leaves {} training and {} validation frames; both must be non-empty",
            split.train.len(),
            split.val.len()
        )));
    }
    if let Some(&i) = split.train.iter().chain(&split.val).find(|&&i| i >= samples.len()) {
        return Err(Error::Config(format!("split references frame {i} but only {} exist", samples.len())));
    }
    let train: Vec<&Sample> = split.train.iter().map(|&i| &samples[i]).collect();
    let val: Vec<&Sample> = split.val.iter().map(|&i| &samples[i]).collect();
    let loss = mode.loss();

    let st = if cfg.standardize {
        let mut all = Vec::new();
        for s in &train {
            all.extend_from_slice(s.graph.targets()?);
        }
        Standardization::fit(all)?
    } else {
        Standardization::default()
    };
    let lr_scale = if cfg.standardize && cfg.scale_lr_by_variance { 1.0 / (st.std * st.std) } else { 1.0 };

    let mut model = UnaryModel::init(arch.clone(), derive_seed(cfg.seed, &[INIT_STREAM]))?;
    model.set_norm(InputNorm::fit(train.iter().map(|s| s.intensity.as_slice())));
    let beta0 = match loss {
        Loss::Nll => vec![cfg.beta_init; CHANNEL_NAMES.len()],
        Loss::LeastSquares => vec![0.0; CHANNEL_NAMES.len()],
    };
    let mut state = TrainState::new(model, beta0);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[SHUFFLE_STREAM]));

    let mut report = TrainReport {
        mode,
        lr0_effective: lr_scale * cfg.lr0,
        standardization: st,
        input_norm: state.model.norm(),
        epochs: Vec::new(),
        best_epoch: None,
        best_val_log10: None,
        crf_evaluations: 0,
    };
    let mut best = snapshot(&state, None);

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        state.epoch = epoch;
        let lr = lr_scale * cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut obj_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| train[i]).collect();
            let ev = batch_eval(&batch, &state, loss, &st, cfg, exec)?;
            report.crf_evaluations += ev.crf_evaluations;
            if !ev.objective.is_finite() {
                return Err(Error::Divergence(format!("objective (epoch {epoch})")));
            }
            obj_sum += ev.objective;
            batches += 1;
            step(&mut state, &ev.grad_gamma, &ev.grad_beta, lr, cfg.momentum)?;
        }

        let predictor = Predictor {
            model: state.model.clone(),
            beta: (loss == Loss::Nll).then(|| CrfParams::new(state.beta.clone())),
            standardization: st,
        };
        let val_report = eval::evaluate_samples(&predictor, &val, eval::EvalMode::Superpixel, exec)?;
        let summary = val_report.summary();
        log::info!(
            "{} epoch {epoch}: lr {lr:.3e} objective {:.4} val rel {:.4} log10 {:.4} rms {:.3} beta {:?}",
            mode.label(),
            obj_sum / batches as f64,
            summary.rel,
            summary.log10,
            summary.rms,
            state.beta
        );
        if report.best_val_log10.is_none_or(|b| summary.log10 < b) {
            report.best_val_log10 = Some(summary.log10);
            report.best_epoch = Some(epoch);
            best = snapshot(&state, Some(epoch));
        }
        report.epochs.push(EpochRecord {
            epoch,
            lr,
            train_objective: obj_sum / batches as f64,
            val: summary,
            beta: state.beta.clone(),
        });
    }

    let (params, beta, selected) = best;
    let beta = match mode {
        Mode::Crf => beta,
        Mode::Unary => vec![0.0; CHANNEL_NAMES.len()],
        Mode::UnarySmooth => cfg.smooth_beta.clone(),
    };
    let ckpt = Checkpoint {
        mode,
        architecture: arch.clone(),
        params,
        input_norm: state.model.norm(),
        beta,
        standardization: st,
        config: cfg.clone(),
        seed: cfg.seed,
        selected_epoch: selected,
    };
    Ok((ckpt, report))
}

fn snapshot(state: &TrainState, epoch: Option<usize>) -> (Vec<f64>, Vec<f64>, Option<usize>) {
    (state.model.params().to_vec(), state.beta.clone(), epoch)
}

/// Joint CNN-CRF training.
pub fn fit(samples: &[Sample], split: &Split, arch: &Architecture, cfg: &TrainConfig, exec: Exec) -> Result<(Checkpoint, TrainReport)> {
    fit_mode(Mode::Crf, samples, split, arch, cfg, exec)
}

/// Least-squares unary baseline.
pub fn fit_unary_only(
    samples: &[Sample],
    split: &Split,
    arch: &Architecture,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<(Checkpoint, TrainReport)> {
    fit_mode(Mode::Unary, samples, split, arch, cfg, exec)
}

/// Derive the post-hoc smoothed baseline from a trained unary checkpoint.
pub fn smoothed(unary: &Checkpoint, beta: &[f64]) -> Result<Checkpoint> {
    if unary.mode == Mode::Crf {
        return Err(Error::Config("smoothing applies to unary checkpoints, not CNN-CRF ones".into()));
    }
    if beta.len() != CHANNEL_NAMES.len() || beta.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::param("train", format!("smoothing beta {beta:?} must hold {} non-negative values", CHANNEL_NAMES.len())));
    }
    let mut out = unary.clone();
    out.mode = Mode::UnarySmooth;
    out.beta = beta.to_vec();
    out.config.smooth_beta = beta.to_vec();
    Ok(out)
}
