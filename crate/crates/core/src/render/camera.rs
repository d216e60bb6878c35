use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Rigid, Vec3};

/// Pinhole endoscope camera. `fov_deg` is the horizontal field of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraPose {
    pub fn new(position: Vec3, forward: Vec3, up: Vec3, fov_deg: f64, width: usize, height: usize) -> Result<Self> {
        let pose = CameraPose {
            position,
            forward,
            up,
            fov_deg,
            width,
            height,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        const EPS: f64 = 1e-9;
        if !self.position.is_finite() {
            return Err(Error::param("render", "camera position is not finite"));
        }
        if (self.forward.norm() - 1.0).abs() > EPS || (self.up.norm() - 1.0).abs() > EPS {
            return Err(Error::param("render", "camera forward/up must be unit vectors"));
        }
        if self.forward.dot(self.up).abs() > EPS {
            return Err(Error::param("render", "camera forward and up must be orthogonal"));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::param("render", format!("fov {} outside (0, 180)", self.fov_deg)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("render", "resolution must be positive"));
        }
        Ok(())
    }

    pub fn right(&self) -> Vec3 {
        self.forward.cross(self.up)
    }

    /// Focal length in pixels.
    pub fn focal_px(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.fov_deg.to_radians()).tan()
    }

    /// Unit ray direction through image point `(u, v)` in pixel coordinates,
    /// where pixel `(i, j)` spans `[i, i+1) x [j, j+1)`.
    pub fn ray_dir(&self, u: f64, v: f64) -> Vec3 {
        let f = self.focal_px();
        let x = u - 0.5 * self.width as f64;
        let y = v - 0.5 * self.height as f64;
        (self.forward * f + self.right() * x - self.up * y).normalized()
    }

    /// Ray through the center of pixel `(col, row)`.
    pub fn pixel_ray(&self, col: usize, row: usize) -> Vec3 {
        self.ray_dir(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Camera-frame offset `(right, up, forward)` expressed in world coordinates.
    pub fn to_world(&self, offset: Vec3) -> Vec3 {
        self.position + self.right() * offset.x + self.up * offset.y + self.forward * offset.z
    }

    pub fn transformed(&self, t: &Rigid) -> CameraPose {
        CameraPose {
            position: t.apply(self.position),
            forward: t.rotate(self.forward),
            up: t.rotate(self.up),
            ..*self
        }
    }
}

/// Two point lights rigidly attached to the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightRig {
    /// Offsets in the camera frame `(right, up, forward)`, mm.
    pub offsets: [Vec3; 2],
    pub radiant_power: [f64; 2],
}

impl Default for LightRig {
    fn default() -> Self {
        LightRig {
            offsets: [Vec3::new(-2.5, 0.0, 0.0), Vec3::new(2.5, 0.0, 0.0)],
            radiant_power: [200.0, 200.0],
        }
    }
}

impl LightRig {
    pub fn colocated(power_each: f64) -> Self {
        LightRig {
            offsets: [Vec3::ZERO; 2],
            radiant_power: [power_each; 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.radiant_power.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::param("render", "radiant power must be positive"));
        }
        if self.offsets.iter().any(|o| !o.is_finite()) {
            return Err(Error::param("render", "light offsets must be finite"));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> LightRig {
        LightRig {
            radiant_power: self.radiant_power.map(|p| p * c),
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(w: usize, h: usize) -> CameraPose {
        CameraPose::new(Vec3::ZERO, Vec3::Z, Vec3::Y, 120.0, w, h).unwrap()
    }

    #[test]
    fn central_pixel_looks_forward() {
        let p = pose(5, 5);
        assert!((p.pixel_ray(2, 2) - Vec3::Z).norm() < 1e-15);
    }

    #[test]
    fn edge_of_image_matches_half_fov() {
        let p = pose(96, 96);
        let d = p.ray_dir(96.0, 48.0);
        let angle = d.dot(Vec3::Z).acos().to_degrees();
        assert!((angle - 60.0).abs() < 1e-9);
        // image y grows downward
        assert!(p.ray_dir(48.0, 0.0).dot(Vec3::Y) > 0.0);
    }

    #[test]
    fn rejects_bad_frames() {
        assert!(CameraPose::new(Vec3::ZERO, Vec3::Z, Vec3::Z, 120.0, 4, 4).is_err());
        assert!(CameraPose::new(Vec3::ZERO, Vec3::Z * 2.0, Vec3::Y, 120.0, 4, 4).is_err());
        assert!(CameraPose::new(Vec3::ZERO, Vec3::Z, Vec3::Y, 180.0, 4, 4).is_err());
        assert!(CameraPose::new(Vec3::ZERO, Vec3::Z, Vec3::Y, 120.0, 0, 4).is_err());
        assert!(LightRig::colocated(0.0).validate().is_err());
    }
}
