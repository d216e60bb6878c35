//! Render one dataset frame and its superpixel boundaries to PNGs.

use std::path::PathBuf;

use crf_depth::io::image::write_intensity;
use crf_depth::render::{render_dataset_frame, DatasetConfig};
use crf_depth::superpixel::{segment, SuperpixelConfig};
use crf_depth::Exec;

fn main() -> crf_depth::Result<()> {
    let index: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let out = PathBuf::from(std::env::args().nth(2).unwrap_or_else(|| ".".into()));
    let cfg = DatasetConfig::default();
    let f = render_dataset_frame(&cfg, index, Exec::default())?;
    write_intensity(&out.join("preview_intensity.png"), f.width, f.height, &f.intensity)?;
    let max = f.depth.iter().cloned().fold(0.0, f64::max);
    let d: Vec<f64> = f.depth.iter().map(|v| v / max).collect();
    write_intensity(&out.join("preview_depth.png"), f.width, f.height, &d)?;
    let g = segment(f.width, f.height, &f.intensity, Some(&f.depth), &SuperpixelConfig::default())?;
    let mut edges = f.intensity.clone();
    for p in 0..edges.len() {
        let (x, y) = (p % f.width, p / f.width);
        if (x + 1 < f.width && g.assignment[p] != g.assignment[p + 1])
            || (y + 1 < f.height && g.assignment[p] != g.assignment[p + f.width])
        {
            edges[p] = 1.0;
        }
    }
    write_intensity(&out.join("preview_slic.png"), f.width, f.height, &edges)?;
    let depths = g.gt_depth.as_ref().unwrap();
    let dmin = depths.iter().cloned().fold(f64::MAX, f64::min);
    let dmax = depths.iter().cloned().fold(0.0, f64::max);
    let imean = f.intensity.iter().sum::<f64>() / f.intensity.len() as f64;
    println!(
        "g={} edges={} depth range {dmin:.1}..{dmax:.1} mm, pixel max {max:.1}, mean intensity {imean:.3}, fov {:.1}",
        g.g(),
        g.edges.len(),
        f.pose.fov_deg
    );
    Ok(())
}
