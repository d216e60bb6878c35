//! Desk-scale comparison of the three methods on an in-memory dataset.
//! Usage: ablation [frames] [epochs] [lr0] [frames_per_scene]

use crf_depth::eval::{evaluate_checkpoint, format_table, EvalMode};
use crf_depth::render::DatasetConfig;
use crf_depth::sample::{render_samples, Sample, Split};
use crf_depth::superpixel::SuperpixelConfig;
use crf_depth::train::{fit, fit_unary_only, smoothed, TrainConfig};
use crf_depth::unary::Architecture;
use crf_depth::Exec;

fn main() -> crf_depth::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let frames: usize = args.get(1).map_or(200, |a| a.parse().unwrap());
    let epochs: usize = args.get(2).map_or(60, |a| a.parse().unwrap());
    let mut cfg = TrainConfig { epochs, ..TrainConfig::default() };
    if let Some(lr) = args.get(3) {
        cfg.lr0 = lr.parse().unwrap();
    }
    let mut data = DatasetConfig { count: frames, ..DatasetConfig::default() };
    if let Some(f) = args.get(4) {
        data.frames_per_scene = f.parse().unwrap();
    }
    let t = std::time::Instant::now();
    let samples = render_samples(&data, &SuperpixelConfig::default(), Exec::default())?;
    eprintln!("rendered {} frames in {:?}", samples.len(), t.elapsed());
    let split = Split::contiguous(samples.len(), cfg.split)?;
    let arch = Architecture::default();
    let (crf, rc) = fit(&samples, &split, &arch, &cfg, Exec::default())?;
    eprintln!("crf best epoch {:?} beta {:?} after {:?}", rc.best_epoch, crf.beta, t.elapsed());
    let (unary, ru) = fit_unary_only(&samples, &split, &arch, &cfg, Exec::default())?;
    eprintln!("unary best epoch {:?} after {:?}", ru.best_epoch, t.elapsed());
    let smooth = smoothed(&unary, &cfg.smooth_beta)?;
    let val: Vec<&Sample> = split.val.iter().map(|&i| &samples[i]).collect();
    for b in [0.03, 0.1, 0.3, 1.0] {
        let (_, row) = evaluate_checkpoint(&smoothed(&unary, &[b, b])?, &val, EvalMode::Superpixel, Exec::default())?;
        eprintln!("val smooth beta {b}: rel {:.4}", row.rel);
    }
    for (name, part) in [("val", &split.val), ("test", &split.test)] {
        let set: Vec<&Sample> = part.iter().map(|&i| &samples[i]).collect();
        let rows = [&unary, &smooth, &crf]
            .iter()
            .map(|c| evaluate_checkpoint(c, &set, EvalMode::Superpixel, Exec::default()).map(|r| r.1))
            .collect::<crf_depth::Result<Vec<_>>>()?;
        println!("{name}\n{}", format_table(&rows));
    }
    Ok(())
}
