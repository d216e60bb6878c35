use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::camera::CameraPose;
use super::scene::Scene;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub fov_min_deg: f64,
    pub fov_max_deg: f64,
    pub width: usize,
    pub height: usize,
    /// Minimum camera-to-wall distance (mm).
    pub min_clearance_mm: f64,
    /// Fraction of the tube length kept free at each end.
    pub end_margin: f64,
    pub max_retries: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            fov_min_deg: 110.0,
            fov_max_deg: 140.0,
            width: 96,
            height: 96,
            min_clearance_mm: 2.0,
            end_margin: 0.1,
            max_retries: 100,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov_min_deg > 0.0 && self.fov_min_deg <= self.fov_max_deg && self.fov_max_deg < 180.0) {
            return Err(Error::Config(format!(
                "trajectory: invalid fov range [{}, {}]",
                self.fov_min_deg, self.fov_max_deg
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("trajectory: resolution must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.end_margin) || self.min_clearance_mm <= 0.0 {
            return Err(Error::Config("trajectory: invalid margin or clearance".into()));
        }
        Ok(())
    }
}

/// `n` camera poses spread along the centerline, each with a random axial
/// offset along the local tangent and a random roll in [0, 180] degrees.
pub fn sample_trajectory(scene: &Scene, n: usize, seed: u64, config: &TrajectoryConfig) -> Result<Vec<CameraPose>> {
    config.validate()?;
    if n == 0 {
        return Err(Error::param("render", "trajectory needs at least one pose"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = scene.length();
    let lo = config.end_margin * len;
    let hi = (1.0 - config.end_margin) * len;
    let spacing = (hi - lo) / n as f64;
    let mut poses = Vec::with_capacity(n);
    for i in 0..n {
        let base = lo + (i as f64 + 0.5) * spacing;
        let mut accepted = None;
        for _ in 0..config.max_retries.max(1) {
            let s = base + rng.random_range(-0.5..=0.5) * spacing;
            let roll = rng.random_range(0.0..=180.0f64).to_radians();
            let fov = if config.fov_min_deg == config.fov_max_deg {
                config.fov_min_deg
            } else {
                rng.random_range(config.fov_min_deg..=config.fov_max_deg)
            };
            let (position, forward, normal) = scene.frame_at(s);
            let up = normal.rotate_about(forward, roll);
            let up = (up - forward * up.dot(forward)).normalized();
            if scene.sdf(position) < config.min_clearance_mm {
                continue;
            }
            accepted = Some(CameraPose::new(position, forward, up, fov, config.width, config.height)?);
            break;
        }
        match accepted {
            Some(p) => poses.push(p),
            None => {
                return Err(Error::Generation(format!(
                    "pose {i} of scene {} violated clearance after {} retries",
                    scene.id, config.max_retries
                )))
            }
        }
    }
    Ok(poses)
}
