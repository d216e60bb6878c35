//! Procedural colon-like tube: a bent centerline, a varying radius and
//! spherical-cap protrusions, all described analytically by a signed
//! distance bound that is positive inside the lumen.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Closed interval used for every randomised scene parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Span { min, max }
    }

    pub const fn fixed(v: f64) -> Self {
        Span { min: v, max: v }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(Error::Config(format!(
                "scene.{name}: invalid range [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Number of centerline spans; control points = spans + 1.
    pub spans: usize,
    pub span_length_mm: Span,
    pub bend_deg: Span,
    pub radius_mm: Span,
    /// Relative amplitude of the radius modulation along the tube, in [0, 0.5].
    pub radius_variation: Span,
    pub bump_count: [usize; 2],
    pub bump_height_mm: Span,
    pub bump_width_mm: Span,
    pub albedo: Span,
    pub samples_per_span: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            spans: 5,
            span_length_mm: Span::new(35.0, 55.0),
            bend_deg: Span::new(10.0, 45.0),
            radius_mm: Span::new(14.0, 22.0),
            radius_variation: Span::new(0.0, 0.15),
            bump_count: [2, 6],
            bump_height_mm: Span::new(1.5, 5.0),
            bump_width_mm: Span::new(4.0, 9.0),
            albedo: Span::new(0.85, 1.0),
            samples_per_span: 8,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.span_length_mm.validate("span_length_mm")?;
        self.bend_deg.validate("bend_deg")?;
        self.radius_mm.validate("radius_mm")?;
        self.radius_variation.validate("radius_variation")?;
        self.bump_height_mm.validate("bump_height_mm")?;
        self.bump_width_mm.validate("bump_width_mm")?;
        self.albedo.validate("albedo")?;
        if self.spans == 0 || self.samples_per_span == 0 {
            return Err(Error::Config("scene: spans and samples_per_span must be >= 1".into()));
        }
        if self.bump_count[0] > self.bump_count[1] {
            return Err(Error::Config(format!(
                "scene.bump_count: invalid range [{}, {}]",
                self.bump_count[0], self.bump_count[1]
            )));
        }
        if self.span_length_mm.min <= 0.0 || self.radius_mm.min <= 0.0 {
            return Err(Error::Config("scene: lengths and radii must be positive".into()));
        }
        if self.radius_variation.min < 0.0 || self.radius_variation.max > 0.5 {
            return Err(Error::Config("scene.radius_variation must lie in [0, 0.5]".into()));
        }
        if self.bump_height_mm.min <= 0.0 && self.bump_count[1] > 0 {
            return Err(Error::Config("scene.bump_height_mm must be positive".into()));
        }
        if self.bump_width_mm.min <= 0.0 && self.bump_count[1] > 0 {
            return Err(Error::Config("scene.bump_width_mm must be positive".into()));
        }
        if self.albedo.min <= 0.0 || self.albedo.max > 1.0 {
            return Err(Error::Config("scene.albedo must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Radius as a function of arclength: `base * (1 + sum a sin(2 pi s / wavelength + phase))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusProfile {
    pub base_mm: f64,
    /// (relative amplitude, wavelength mm, phase rad)
    pub terms: Vec<(f64, f64, f64)>,
}

impl RadiusProfile {
    pub fn constant(r: f64) -> Self {
        RadiusProfile {
            base_mm: r,
            terms: Vec::new(),
        }
    }

    pub fn at(&self, s: f64) -> f64 {
        let m: f64 = self
            .terms
            .iter()
            .map(|&(a, w, p)| a * (std::f64::consts::TAU * s / w + p).sin())
            .sum();
        self.base_mm * (1.0 + m)
    }

    pub fn max(&self) -> f64 {
        self.base_mm * (1.0 + self.terms.iter().map(|t| t.0.abs()).sum::<f64>())
    }
}

/// Hemispherical-style protrusion into the lumen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub arclength_mm: f64,
    pub angle_rad: f64,
    pub height_mm: f64,
    pub width_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    a: Vec3,
    ab: Vec3,
    inv_len_sq: f64,
    s0: f64,
    r0: f64,
    r1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct CapSphere {
    center: Vec3,
    radius: f64,
}

/// Analytic tube world. Build with [`build_scene`] or [`Scene::from_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: u64,
    pub control_points: Vec<Vec3>,
    pub radius: RadiusProfile,
    pub bumps: Vec<Bump>,
    pub albedo: f64,
    samples_per_span: usize,
    centerline: Vec<Vec3>,
    arclength: Vec<f64>,
    normals: Vec<Vec3>,
    segments: Vec<Segment>,
    caps: Vec<CapSphere>,
    bound_diameter: f64,
}

impl Scene {
    /// Assemble a scene from explicit parts, validating the scene invariants.
    pub fn from_parts(
        id: u64,
        control_points: Vec<Vec3>,
        samples_per_span: usize,
        radius: RadiusProfile,
        bumps: Vec<Bump>,
        albedo: f64,
    ) -> Result<Scene> {
        if control_points.len() < 2 {
            return Err(Error::param("render", "centerline needs at least two control points"));
        }
        if !(albedo > 0.0 && albedo <= 1.0) {
            return Err(Error::param("render", format!("albedo {albedo} outside (0, 1]")));
        }
        let centerline = sample_catmull_rom(&control_points, samples_per_span.max(1));
        let mut arclength = Vec::with_capacity(centerline.len());
        let mut acc = 0.0;
        arclength.push(0.0);
        for w in centerline.windows(2) {
            acc += (w[1] - w[0]).norm();
            arclength.push(acc);
        }
        if centerline.windows(2).any(|w| (w[1] - w[0]).norm() < 1e-9) {
            return Err(Error::param("render", "degenerate centerline segment"));
        }
        let normals = transport_frames(&centerline);

        // radius must stay positive along the whole tube
        let total = acc;
        let steps = (total.ceil() as usize).max(16) * 4;
        let min_r = (0..=steps)
            .map(|i| radius.at(total * i as f64 / steps as f64))
            .fold(f64::INFINITY, f64::min);
        if !(min_r > 0.0) {
            return Err(Error::param("render", "radius profile is not positive everywhere"));
        }

        let segments = centerline
            .windows(2)
            .zip(arclength.windows(2))
            .map(|(p, s)| {
                let ab = p[1] - p[0];
                Segment {
                    a: p[0],
                    ab,
                    inv_len_sq: 1.0 / ab.norm_sq(),
                    s0: s[0],
                    r0: radius.at(s[0]),
                    r1: radius.at(s[1]),
                }
            })
            .collect();

        let mut scene = Scene {
            id,
            control_points,
            radius,
            bumps: Vec::new(),
            albedo,
            samples_per_span,
            centerline,
            arclength,
            normals,
            segments,
            caps: Vec::new(),
            bound_diameter: 0.0,
        };
        for b in &bumps {
            let r = scene.radius.at(b.arclength_mm);
            if !(b.height_mm > 0.0 && b.height_mm < r && b.width_mm > 0.0) {
                return Err(Error::param(
                    "render",
                    format!("bump height {} must lie in (0, local radius {r})", b.height_mm),
                ));
            }
            scene.caps.push(scene.cap_sphere(b));
        }
        scene.bumps = bumps;

        let rmax = scene.radius.max();
        let (mut lo, mut hi) = (Vec3::new(f64::MAX, f64::MAX, f64::MAX), Vec3::new(f64::MIN, f64::MIN, f64::MIN));
        for p in &scene.centerline {
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        scene.bound_diameter = (hi - lo).norm() + 2.0 * rmax;
        Ok(scene)
    }

    /// Straight tube along +z from the origin, constant radius, no bumps.
    pub fn straight_tube(radius_mm: f64, length_mm: f64) -> Result<Scene> {
        Scene::from_parts(
            0,
            vec![Vec3::ZERO, Vec3::new(0.0, 0.0, length_mm)],
            1,
            RadiusProfile::constant(radius_mm),
            Vec::new(),
            1.0,
        )
    }

    pub fn samples_per_span(&self) -> usize {
        self.samples_per_span
    }

    pub fn length(&self) -> f64 {
        *self.arclength.last().unwrap()
    }

    pub fn centerline(&self) -> &[Vec3] {
        &self.centerline
    }

    /// Diameter of a ball enclosing the whole tube.
    pub fn bounding_diameter(&self) -> f64 {
        self.bound_diameter
    }

    /// Centerline point, unit tangent and unit normal at arclength `s` (clamped).
    pub fn frame_at(&self, s: f64) -> (Vec3, Vec3, Vec3) {
        let s = s.clamp(0.0, self.length());
        let k = match self.arclength.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) => i.min(self.segments.len() - 1),
            Err(i) => i.saturating_sub(1).min(self.segments.len() - 1),
        };
        let seg = &self.segments[k];
        let len = seg.ab.norm();
        let t = ((s - seg.s0) / len).clamp(0.0, 1.0);
        let tangent = seg.ab / len;
        let n = self.normals[k];
        let n = (n - tangent * n.dot(tangent)).normalized();
        (seg.a + seg.ab * t, tangent, n)
    }

    fn cap_sphere(&self, b: &Bump) -> CapSphere {
        let (c, t, n) = self.frame_at(b.arclength_mm);
        let binormal = t.cross(n);
        let dir = n * b.angle_rad.cos() + binormal * b.angle_rad.sin();
        let wall = c + dir * self.radius.at(b.arclength_mm);
        let h = b.height_mm;
        let w = b.width_mm;
        let radius = (w * w + h * h) / (2.0 * h);
        CapSphere {
            center: wall + dir * (radius - h),
            radius,
        }
    }

    /// Signed distance bound to the lumen wall: positive inside the free space,
    /// negative inside tissue. Exact for a straight constant-radius tube.
    pub fn sdf(&self, p: Vec3) -> f64 {
        let mut tube = f64::NEG_INFINITY;
        for seg in &self.segments {
            let d = p - seg.a;
            let t = (d.dot(seg.ab) * seg.inv_len_sq).clamp(0.0, 1.0);
            let r = seg.r0 + (seg.r1 - seg.r0) * t;
            let dist = (d - seg.ab * t).norm();
            tube = tube.max(r - dist);
        }
        let first = &self.segments[0];
        let last = &self.segments[self.segments.len() - 1];
        let t0 = first.ab * first.inv_len_sq.sqrt();
        let t1 = last.ab * last.inv_len_sq.sqrt();
        let start = (p - first.a).dot(t0);
        let end = (last.a + last.ab - p).dot(t1);
        let mut f = tube.min(start).min(end);
        for cap in &self.caps {
            f = f.min((p - cap.center).norm() - cap.radius);
        }
        f
    }

    /// Unit normal pointing into the free space, from central differences of the SDF.
    pub fn normal(&self, p: Vec3) -> Vec3 {
        const H: f64 = 1e-5;
        let g = Vec3::new(
            self.sdf(p + Vec3::X * H) - self.sdf(p - Vec3::X * H),
            self.sdf(p + Vec3::Y * H) - self.sdf(p - Vec3::Y * H),
            self.sdf(p + Vec3::Z * H) - self.sdf(p - Vec3::Z * H),
        );
        g.normalized()
    }

    /// Checks that centerline samples far apart in arclength are far apart in space.
    pub fn self_intersects(&self) -> bool {
        let rmax = self.radius.max();
        let pts = &self.centerline;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                if self.arclength[j] - self.arclength[i] > 4.0 * rmax
                    && (pts[j] - pts[i]).norm() < 2.0 * rmax
                {
                    return true;
                }
            }
        }
        false
    }

    /// Stable textual form used for equality checks and hashing.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "id": self.id,
            "control_points": self.control_points,
            "samples_per_span": self.samples_per_span,
            "radius": self.radius,
            "bumps": self.bumps,
            "albedo": self.albedo,
        })
    }
}

fn sample_catmull_rom(ctrl: &[Vec3], per_span: usize) -> Vec<Vec3> {
    let n = ctrl.len();
    let get = |i: isize| -> Vec3 {
        if i < 0 {
            ctrl[0] * 2.0 - ctrl[1]
        } else if i as usize >= n {
            ctrl[n - 1] * 2.0 - ctrl[n - 2]
        } else {
            ctrl[i as usize]
        }
    };
    let mut out = Vec::with_capacity((n - 1) * per_span + 1);
    for k in 0..n - 1 {
        let (p0, p1, p2, p3) = (
            get(k as isize - 1),
            get(k as isize),
            get(k as isize + 1),
            get(k as isize + 2),
        );
        for j in 0..per_span {
            let t = j as f64 / per_span as f64;
            let t2 = t * t;
            let t3 = t2 * t;
            let p = (p1 * 2.0
                + (p2 - p0) * t
                + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2
                + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * t3)
                * 0.5;
            out.push(p);
        }
    }
    out.push(ctrl[n - 1]);
    out
}

/// Parallel-transported normals, one per centerline segment.
fn transport_frames(pts: &[Vec3]) -> Vec<Vec3> {
    let mut normals = Vec::with_capacity(pts.len() - 1);
    let mut prev_t = (pts[1] - pts[0]).normalized();
    let mut n = prev_t.any_orthogonal();
    for w in pts.windows(2) {
        let t = (w[1] - w[0]).normalized();
        let axis = prev_t.cross(t);
        let s = axis.norm();
        if s > 1e-12 {
            let angle = s.atan2(prev_t.dot(t));
            n = n.rotate_about(axis / s, angle);
        }
        n = (n - t * n.dot(t)).normalized();
        normals.push(n);
        prev_t = t;
    }
    normals
}

/// Build a random scene. Deterministic in `seed`.
pub fn build_scene(seed: u64, config: &SceneConfig) -> Result<Scene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const ATTEMPTS: usize = 64;
    for _ in 0..ATTEMPTS {
        let mut pts = vec![Vec3::ZERO];
        let mut dir = Vec3::Z;
        for _ in 0..config.spans {
            let len = config.span_length_mm.sample(&mut rng);
            let last = *pts.last().unwrap();
            pts.push(last + dir * len);
            let bend = config.bend_deg.sample(&mut rng).to_radians();
            let roll = rng.random_range(0.0..std::f64::consts::TAU);
            let axis = dir.any_orthogonal().rotate_about(dir, roll);
            dir = dir.rotate_about(axis, bend).normalized();
        }

        let base = config.radius_mm.sample(&mut rng);
        let variation = config.radius_variation.sample(&mut rng);
        let terms = if variation > 0.0 {
            let split: f64 = rng.random_range(0.2..0.8);
            vec![
                (variation * split, rng.random_range(40.0..90.0), rng.random_range(0.0..std::f64::consts::TAU)),
                (variation * (1.0 - split), rng.random_range(15.0..35.0), rng.random_range(0.0..std::f64::consts::TAU)),
            ]
        } else {
            Vec::new()
        };
        let radius = RadiusProfile { base_mm: base, terms };
        let albedo = config.albedo.sample(&mut rng);

        let mut scene = match Scene::from_parts(seed, pts, config.samples_per_span, radius, Vec::new(), albedo) {
            Ok(s) => s,
            Err(_) => continue,
        };
        if scene.self_intersects() {
            continue;
        }

        let count = if config.bump_count[0] == config.bump_count[1] {
            config.bump_count[0]
        } else {
            rng.random_range(config.bump_count[0]..=config.bump_count[1])
        };
        let len = scene.length();
        let mut bumps = Vec::with_capacity(count);
        for _ in 0..count {
            let s = rng.random_range(0.1 * len..=0.9 * len);
            let local_r = scene.radius.at(s);
            let height = config.bump_height_mm.sample(&mut rng).min(0.5 * local_r);
            bumps.push(Bump {
                arclength_mm: s,
                angle_rad: rng.random_range(0.0..std::f64::consts::TAU),
                height_mm: height,
                width_mm: config.bump_width_mm.sample(&mut rng),
            });
        }
        scene = Scene::from_parts(
            seed,
            scene.control_points,
            config.samples_per_span,
            scene.radius,
            bumps,
            albedo,
        )?;
        return Ok(scene);
    }
    Err(Error::Generation(format!(
        "no non-self-intersecting centerline after {ATTEMPTS} attempts (seed {seed})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let c = SceneConfig::default();
        let a = build_scene(42, &c).unwrap();
        let b = build_scene(42, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().to_string(), b.to_json().to_string());
    }

    #[test]
    fn different_seeds_differ() {
        let c = SceneConfig::default();
        let a = build_scene(1, &c).unwrap();
        let b = build_scene(2, &c).unwrap();
        assert!(a
            .control_points
            .iter()
            .zip(&b.control_points)
            .any(|(p, q)| p != q));
    }

    #[test]
    fn zero_bumps_gives_smooth_tube() {
        let c = SceneConfig {
            bump_count: [0, 0],
            ..SceneConfig::default()
        };
        let s = build_scene(3, &c).unwrap();
        assert!(s.bumps.is_empty());
    }

    #[test]
    fn invalid_range_is_config_error() {
        let c = SceneConfig {
            radius_mm: Span::new(20.0, 10.0),
            ..SceneConfig::default()
        };
        assert!(matches!(build_scene(1, &c), Err(Error::Config(_))));
        let c = SceneConfig {
            bump_count: [5, 1],
            ..SceneConfig::default()
        };
        assert!(matches!(build_scene(1, &c), Err(Error::Config(_))));
    }

    #[test]
    fn invariants_hold_across_seeds() {
        let c = SceneConfig::default();
        for seed in 0..20 {
            let s = build_scene(seed, &c).unwrap();
            assert!(!s.self_intersects());
            for b in &s.bumps {
                assert!(b.height_mm < s.radius.at(b.arclength_mm));
            }
            let l = s.length();
            for i in 0..=100 {
                assert!(s.radius.at(l * i as f64 / 100.0) > 0.0);
            }
        }
    }

    #[test]
    fn straight_tube_sdf_is_exact() {
        let s = Scene::straight_tube(10.0, 100.0).unwrap();
        assert!((s.sdf(Vec3::new(0.0, 0.0, 50.0)) - 10.0).abs() < 1e-12);
        assert!((s.sdf(Vec3::new(3.0, 4.0, 50.0)) - 5.0).abs() < 1e-12);
        assert!((s.sdf(Vec3::new(0.0, 0.0, 97.0)) - 3.0).abs() < 1e-12);
        assert!(s.sdf(Vec3::new(0.0, 11.0, 50.0)) < 0.0);
        let n = s.normal(Vec3::new(10.0, 0.0, 50.0));
        assert!((n - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn bump_protrudes_by_its_height() {
        let mut s = Scene::straight_tube(10.0, 100.0).unwrap();
        let b = Bump {
            arclength_mm: 50.0,
            angle_rad: 0.0,
            height_mm: 3.0,
            width_mm: 4.0,
        };
        s = Scene::from_parts(0, s.control_points, 1, s.radius, vec![b], 1.0).unwrap();
        let (c, t, n) = s.frame_at(50.0);
        assert!((c - Vec3::new(0.0, 0.0, 50.0)).norm() < 1e-12);
        assert!(t.dot(n).abs() < 1e-12);
        // the wall along the bump direction now sits 7 mm from the axis
        let p = c + n * 7.0;
        assert!(s.sdf(p).abs() < 1e-9);
    }
}
