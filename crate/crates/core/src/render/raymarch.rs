//! Sphere-traced rendering of intensity and distance-depth.

use serde::{Deserialize, Serialize};

use super::camera::{CameraPose, LightRig};
use super::scene::Scene;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::par::Exec;

/// Depth value written where a ray leaves the scene without a hit.
pub const DEPTH_SENTINEL: f64 = -1.0;

/// Surface is considered hit once the SDF drops below this (mm).
pub const HIT_TOLERANCE: f64 = 1e-4;

const MAX_STEPS: usize = 2048;
const STEP_SCALE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub scene_id: u64,
    pub seed: u64,
}

/// Rendered grayscale intensity in [0, 1] and distance-depth (mm), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub intensity: Vec<f64>,
    pub depth: Vec<f64>,
    pub pose: CameraPose,
    pub meta: FrameMeta,
}

impl Frame {
    pub fn is_hit(&self, idx: usize) -> bool {
        self.depth[idx] != DEPTH_SENTINEL
    }
}

/// Unclamped render output, for photometric checks.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRender {
    pub radiance: Vec<f64>,
    pub depth: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    /// 2x2 supersampling of the intensity; depth always uses the pixel-center ray.
    pub supersample: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings { supersample: true }
    }
}

/// Distance along the unit ray `dir` from `origin` to the first surface hit.
pub fn trace(scene: &Scene, origin: Vec3, dir: Vec3, max_dist: f64) -> Option<f64> {
    let mut t = 0.0;
    let mut prev = 0.0;
    for _ in 0..MAX_STEPS {
        let f = scene.sdf(origin + dir * t);
        if f < 0.0 {
            return Some(bisect(scene, origin, dir, prev, t));
        }
        if f < HIT_TOLERANCE {
            return Some(refine(scene, origin, dir, t));
        }
        prev = t;
        t += (f * STEP_SCALE).max(HIT_TOLERANCE * 0.5);
        if t > max_dist {
            return None;
        }
    }
    Some(t)
}

/// Bracket the zero crossing just beyond `t` (at most 1 mm ahead) and bisect it.
fn refine(scene: &Scene, origin: Vec3, dir: Vec3, t: f64) -> f64 {
    let mut delta = HIT_TOLERANCE;
    while delta <= 1.0 {
        if scene.sdf(origin + dir * (t + delta)) < 0.0 {
            return bisect(scene, origin, dir, t, t + delta);
        }
        delta *= 2.0;
    }
    t
}

/// Refine a bracket `[lo, hi]` with sdf(lo) > 0 > sdf(hi).
fn bisect(scene: &Scene, origin: Vec3, dir: Vec3, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f = scene.sdf(origin + dir * mid);
        if f.abs() < 1e-9 || hi - lo < 1e-12 {
            return mid;
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lambertian shading with inverse-square fall-off, unclamped.
pub fn shade(scene: &Scene, pose: &CameraPose, lights: &LightRig, hit: Vec3) -> f64 {
    let n = scene.normal(hit);
    let mut sum = 0.0;
    for (offset, power) in lights.offsets.iter().zip(&lights.radiant_power) {
        let to_light = pose.to_world(*offset) - hit;
        let d2 = to_light.norm_sq();
        let cos = n.dot(to_light / d2.sqrt()).max(0.0);
        sum += power * cos / d2;
    }
    scene.albedo * sum
}

fn check_interior(scene: &Scene, pose: &CameraPose, lights: &LightRig) -> Result<()> {
    pose.validate()?;
    lights.validate()?;
    let clearance = scene.sdf(pose.position);
    if !(clearance > 0.0) {
        return Err(Error::Pose(format!(
            "camera at {:?} has surface clearance {clearance:.4} mm",
            pose.position.to_array()
        )));
    }
    Ok(())
}

/// Render without clamping; radiance is the mean over the (super)samples that hit.
pub fn render_raw(
    scene: &Scene,
    pose: &CameraPose,
    lights: &LightRig,
    settings: RenderSettings,
    exec: Exec,
) -> Result<RawRender> {
    check_interior(scene, pose, lights)?;
    let (w, h) = (pose.width, pose.height);
    let max_dist = scene.bounding_diameter();
    let offsets: &[(f64, f64)] = if settings.supersample {
        &[(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]
    } else {
        &[(0.5, 0.5)]
    };
    let rows = exec.map_range(h, |row| {
        let mut radiance = Vec::with_capacity(w);
        let mut depth = Vec::with_capacity(w);
        for col in 0..w {
            let center = pose.pixel_ray(col, row);
            let Some(d) = trace(scene, pose.position, center, max_dist) else {
                radiance.push(0.0);
                depth.push(DEPTH_SENTINEL);
                continue;
            };
            depth.push(d);
            let mut acc = 0.0;
            for &(du, dv) in offsets {
                let dir = pose.ray_dir(col as f64 + du, row as f64 + dv);
                let t = if (du, dv) == (0.5, 0.5) {
                    Some(d)
                } else {
                    trace(scene, pose.position, dir, max_dist)
                };
                if let Some(t) = t {
                    acc += shade(scene, pose, lights, pose.position + dir * t);
                }
            }
            radiance.push(acc / offsets.len() as f64);
        }
        (radiance, depth)
    });
    let mut out = RawRender {
        radiance: Vec::with_capacity(w * h),
        depth: Vec::with_capacity(w * h),
    };
    for (r, d) in rows {
        out.radiance.extend(r);
        out.depth.extend(d);
    }
    Ok(out)
}

pub fn render_frame_with(
    scene: &Scene,
    pose: &CameraPose,
    lights: &LightRig,
    settings: RenderSettings,
    exec: Exec,
) -> Result<Frame> {
    let raw = render_raw(scene, pose, lights, settings, exec)?;
    let intensity = raw
        .radiance
        .iter()
        .zip(&raw.depth)
        .map(|(&r, &d)| if d == DEPTH_SENTINEL { 0.0 } else { r.clamp(0.0, 1.0) })
        .collect();
    Ok(Frame {
        width: pose.width,
        height: pose.height,
        intensity,
        depth: raw.depth,
        pose: *pose,
        meta: FrameMeta {
            scene_id: scene.id,
            seed: scene.id,
        },
    })
}

/// Render a frame with the default settings (2x2 supersampling, clamped intensity).
pub fn render_frame(scene: &Scene, pose: &CameraPose, lights: &LightRig) -> Result<Frame> {
    render_frame_with(scene, pose, lights, RenderSettings::default(), Exec::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_tube_hits_match_analytic_intersection() {
        let scene = Scene::straight_tube(10.0, 200.0).unwrap();
        let origin = Vec3::new(0.0, 0.0, 20.0);
        for deg in [20.0f64, 45.0, 70.0, 89.0] {
            let a = deg.to_radians();
            let dir = Vec3::new(a.sin(), 0.0, a.cos());
            let t = trace(&scene, origin, dir, 1e3).unwrap();
            let expect = 10.0 / a.sin();
            assert!((t - expect).abs() < 1e-8, "{deg}: {t} vs {expect}");
        }
        // straight down the axis onto the end cap
        let t = trace(&scene, origin, Vec3::Z, 1e3).unwrap();
        assert!((t - 180.0).abs() < 1e-8);
    }

    #[test]
    fn grazing_light_gives_zero() {
        let scene = Scene::straight_tube(10.0, 200.0).unwrap();
        let pose = CameraPose::new(Vec3::new(0.0, 0.0, 20.0), Vec3::Z, Vec3::Y, 90.0, 4, 4).unwrap();
        // light placed on the wall plane tangent at the hit point: n.l = 0
        let hit = Vec3::new(10.0, 0.0, 60.0);
        let lights = LightRig {
            offsets: [Vec3::new(-10.0, 0.0, 10.0), Vec3::new(-10.0, 0.0, 50.0)],
            radiant_power: [1.0, 1.0],
        };
        // right = forward x up = -x, so offset.x = -10 puts the lights at world x = 10
        let i = shade(&scene, &pose, &lights, hit);
        assert!(i.abs() < 1e-6, "{i}");
    }

    #[test]
    fn outside_pose_is_rejected() {
        let scene = Scene::straight_tube(10.0, 200.0).unwrap();
        let pose = CameraPose::new(Vec3::new(0.0, 12.0, 20.0), Vec3::Z, Vec3::Y, 90.0, 4, 4).unwrap();
        let err = render_frame(&scene, &pose, &LightRig::default()).unwrap_err();
        assert!(matches!(err, Error::Pose(_)));
    }

    #[test]
    fn power_scales_radiance_linearly() {
        let scene = Scene::straight_tube(10.0, 200.0).unwrap();
        let pose = CameraPose::new(Vec3::new(0.0, 0.0, 20.0), Vec3::Z, Vec3::Y, 120.0, 16, 16).unwrap();
        let lights = LightRig::default();
        let a = render_raw(&scene, &pose, &lights, RenderSettings::default(), Exec::Sequential).unwrap();
        let b = render_raw(&scene, &pose, &lights.scaled(3.0), RenderSettings::default(), Exec::Sequential).unwrap();
        for (x, y) in a.radiance.iter().zip(&b.radiance) {
            assert!((y - 3.0 * x).abs() <= 1e-12 * y.abs().max(1.0));
        }
        assert_eq!(a.depth, b.depth);
    }

    #[test]
    fn frame_invariants() {
        let scene = Scene::straight_tube(10.0, 200.0).unwrap();
        let pose = CameraPose::new(Vec3::new(0.0, 0.0, 20.0), Vec3::Z, Vec3::Y, 130.0, 24, 24).unwrap();
        let f = render_frame(&scene, &pose, &LightRig::default()).unwrap();
        assert_eq!(f.intensity.len(), f.depth.len());
        for (i, d) in f.intensity.iter().zip(&f.depth) {
            assert!((0.0..=1.0).contains(i));
            if *d == DEPTH_SENTINEL {
                assert_eq!(*i, 0.0);
            } else {
                assert!(*d > 0.0 && *d <= scene.bounding_diameter());
            }
        }
        let g = render_frame(&scene, &pose, &LightRig::default()).unwrap();
        assert_eq!(f, g);
    }
}
