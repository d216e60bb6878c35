//! Back-projection of distance-depth maps into point clouds, and ASCII PLY
//! export.
//!
//! Depth is the Euclidean distance from the camera centre to the surface,
//! as produced by the renderer — not the z-depth most vision tools assume.
//! A pixel's point is therefore `position + depth · unit_ray(pixel)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::par::Exec;
use crate::render::{CameraPose, DEPTH_SENTINEL};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// One colouring value per point (depth unless another field is given).
    pub scalars: Vec<f64>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn valid_depth(d: f64) -> bool {
    d != DEPTH_SENTINEL && d > 0.0 && d.is_finite()
}

/// Map every non-sentinel pixel through the pinhole model. `scalars`, when
/// given, supplies the per-pixel colouring value; otherwise depth is used.
/// An all-sentinel map yields an empty cloud and a warning.
pub fn backproject(depth: &[f64], pose: &CameraPose, scalars: Option<&[f64]>, exec: Exec) -> Result<PointCloud> {
    pose.validate()?;
    let (w, h) = (pose.width, pose.height);
    if depth.len() != w * h {
        return Err(Error::dim("recon", w * h, depth.len()));
    }
    if let Some(s) = scalars {
        if s.len() != w * h {
            return Err(Error::dim("recon", w * h, s.len()));
        }
    }
    let rows = exec.map_range(h, |row| {
        let mut pts = Vec::new();
        let mut vals = Vec::new();
        for col in 0..w {
            let i = row * w + col;
            let d = depth[i];
            if valid_depth(d) {
                pts.push(pose.position + pose.pixel_ray(col, row) * d);
                vals.push(scalars.map_or(d, |s| s[i]));
            }
        }
        (pts, vals)
    });
    let mut cloud = PointCloud::default();
    for (p, v) in rows {
        cloud.points.extend(p);
        cloud.scalars.extend(v);
    }
    if cloud.is_empty() {
        log::warn!("recon: depth map has no valid pixels; point cloud is empty");
    }
    Ok(cloud)
}

/// ASCII PLY with `double x y z value` per vertex. Values use Rust's
/// shortest round-trip formatting, so read → write reproduces the bytes.
pub fn encode_ply(cloud: &PointCloud) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\ncomment crf-depth point cloud (distance-depth, mm)\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\nproperty double value\nend_header\n");
    for (p, s) in cloud.points.iter().zip(&cloud.scalars) {
        let _ = writeln!(out, "{} {} {} {}", p.x, p.y, p.z, s);
    }
    out
}

pub fn decode_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let bad = |message: String| Error::Format {
        kind: "PLY",
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(bad("missing `ply` magic line".into()));
    }
    let mut count = None;
    let mut props = Vec::new();
    loop {
        let line = lines.next().ok_or_else(|| bad("header has no end_header".into()))?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "ascii", "1.0"] => {}
            ["format", other, ..] => return Err(bad(format!("unsupported format {other}"))),
            ["comment", ..] | [] => {}
            ["element", "vertex", n] => count = Some(n.parse::<usize>().map_err(|_| bad(format!("bad vertex count {n:?}")))?),
            ["element", other, ..] => return Err(bad(format!("unsupported element {other}"))),
            ["property", "double" | "float", name] => props.push(name.to_string()),
            ["end_header"] => break,
            _ => return Err(bad(format!("unexpected header line {line:?}"))),
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element".into()))?;
    if props.len() != 4 || props[..3] != ["x", "y", "z"] {
        return Err(bad(format!("expected properties x y z <value>, found {props:?}")));
    }
    let mut cloud = PointCloud::default();
    for k in 0..count {
        let line = lines.next().ok_or_else(|| bad(format!("file ends after {k} of {count} vertices")))?;
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("vertex {k}: unparsable value in {line:?}")))?;
        if v.len() != 4 {
            return Err(bad(format!("vertex {k}: expected 4 values, found {}", v.len())));
        }
        cloud.points.push(Vec3::new(v[0], v[1], v[2]));
        cloud.scalars.push(v[3]);
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(bad("trailing data after the last vertex".into()));
    }
    Ok(cloud)
}

pub fn export_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    fs::write(path, encode_ply(cloud)).map_err(|e| Error::io(path, e))
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_ply(&text, path)
}
