//! Self-checks run by `crf-depth verify`: each suite compares the library
//! against an independent oracle (finite differences, iterative
//! maximisation, quadrature, analytic geometry, hand arithmetic) and
//! reports its worst error against a fixed tolerance.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::crf::{self, CrfGraph, CrfParams};
use crate::error::Result;
use crate::eval;
use crate::geom::Vec3;
use crate::par::Exec;
use crate::recon::backproject;
use crate::render::{
    build_scene, render_frame, render_raw, sample_trajectory, CameraPose, LightRig, RenderSettings, Scene, SceneConfig,
    TrajectoryConfig, DEPTH_SENTINEL,
};
use crate::superpixel::{build_graph, GraphParams};
use crate::unary::{Architecture, UnaryModel};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error (or deviation) and the tolerance it was held to.
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

fn judge(name: &'static str, started: Instant, worst: Result<f64>, tolerance: f64) -> SuiteResult {
    let worst = worst.unwrap_or(f64::INFINITY);
    SuiteResult {
        name,
        passed: worst.is_finite() && worst < tolerance,
        worst,
        tolerance,
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Random graph over `n` nodes: a path plus random chords, two channels.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> CrfGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if j == i + 1 || rng.random_bool(0.3) {
                edges.push((i as u32, j as u32));
            }
        }
    }
    let similarity = (0..2).map(|_| edges.iter().map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    CrfGraph { n, edges, similarity }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Relative error with a small floor so vanishing gradients compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn crf_gradient_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=10);
        let g = random_graph(&mut rng, n);
        let beta = vec![rng.random_range(0.05..2.0), rng.random_range(0.05..2.0)];
        let y = random_vec(&mut rng, n, 2.0);
        let h = random_vec(&mut rng, n, 2.0);
        let m = crf::assemble(&g, &CrfParams::new(beta.clone()))?;
        let gb = crf::grad_beta(&y, &h, &m, &g)?;
        let gh = crf::grad_h(&y, &h, &m)?;
        let step = 1e-5;
        for k in 0..2 {
            let mut p = beta.clone();
            p[k] += step;
            let fp = crf::nll(&y, &h, &crf::assemble(&g, &CrfParams::new(p.clone()))?)?;
            p[k] -= 2.0 * step;
            let fm = crf::nll(&y, &h, &crf::assemble(&g, &CrfParams::new(p))?)?;
            worst = worst.max(rel_err(gb[k], (fp - fm) / (2.0 * step)));
        }
        for i in 0..n {
            let mut hp = h.clone();
            hp[i] += step;
            let fp = crf::nll(&y, &hp, &m)?;
            hp[i] -= 2.0 * step;
            let fm = crf::nll(&y, &hp, &m)?;
            worst = worst.max(rel_err(gh[i], (fp - fm) / (2.0 * step)));
        }
    }
    Ok(worst)
}

fn unary_gradient_error(seed: u64) -> Result<f64> {
    let (w, h) = (12, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
    let depth: Vec<f64> = (0..w * h).map(|_| rng.random_range(10.0..30.0)).collect();
    let assignment: Vec<u32> = (0..w * h).map(|p| ((p / w) / 5 * 3 + (p % w) / 4) as u32).collect();
    let graph = build_graph(w, h, &img, Some(&depth), &assignment, &GraphParams::default())?;
    let arch = Architecture {
        conv_channels: vec![3, 4],
        kernel: 3,
        hidden: vec![6, 5],
        centroid: true,
    };
    let model = UnaryModel::init(arch, seed)?;
    let beta = CrfParams::new(vec![0.6, 0.3]);
    let y: Vec<f64> = graph.targets()?.iter().map(|d| (d - 20.0) / 5.0).collect();
    let m = crf::assemble(&graph, &beta)?;
    let (hv, cache) = model.forward(&img, &graph)?;
    let grad = model.backward(&cache, &crf::grad_h(&y, &hv, &m)?)?;
    let nll_at = |model: &UnaryModel| -> Result<f64> { crf::nll(&y, &model.predict(&img, &graph)?, &m) };
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let i = rng.random_range(0..model.params().len());
        let mut plus = model.clone();
        plus.update_params(|p| p[i] += 1e-5);
        let mut minus = model.clone();
        minus.update_params(|p| p[i] -= 1e-5);
        let fd = (nll_at(&plus)? - nll_at(&minus)?) / 2e-5;
        worst = worst.max(rel_err(grad[i], fd));
    }
    Ok(worst)
}

/// Dense `I + L` built straight from the edge list.
fn dense_xi(g: &CrfGraph, beta: &[f64]) -> Vec<f64> {
    let n = g.n;
    let mut xi = vec![0.0; n * n];
    for i in 0..n {
        xi[i * n + i] = 1.0;
    }
    for (e, &(i, j)) in g.edges.iter().enumerate() {
        let a: f64 = (0..beta.len()).map(|k| beta[k] * g.similarity[k][e]).sum();
        let (i, j) = (i as usize, j as usize);
        xi[i * n + i] += a;
        xi[j * n + j] += a;
        xi[i * n + j] -= a;
        xi[j * n + i] -= a;
    }
    xi
}

fn map_oracle_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(1..=10);
        let g = random_graph(&mut rng, n);
        let beta = vec![rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)];
        let h = random_vec(&mut rng, n, 3.0);
        let xi = dense_xi(&g, &beta);
        // gradient ascent on 2 h'y - y'xi y; Gershgorin bounds the curvature
        let lmax = (0..n).map(|i| (0..n).map(|j| xi[i * n + j].abs()).sum::<f64>()).fold(0.0, f64::max);
        let step = 1.0 / (2.0 * lmax);
        let mut y = random_vec(&mut rng, n, 3.0);
        for _ in 0..200_000 {
            let grad: Vec<f64> = (0..n)
                .map(|i| 2.0 * h[i] - 2.0 * (0..n).map(|j| xi[i * n + j] * y[j]).sum::<f64>())
                .collect();
            if grad.iter().all(|g| g.abs() < 1e-13) {
                break;
            }
            y.iter_mut().zip(&grad).for_each(|(y, g)| *y += step * g);
        }
        let yhat = crf::predict(&h, &crf::assemble(&g, &CrfParams::new(beta))?)?;
        worst = worst.max(y.iter().zip(&yhat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    Ok(worst)
}

/// Gauss–Hermite nodes and weights for `∫ exp(-x²) f(x) dx`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn normalization_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nodes, weights) = gauss_hermite(20);
    let mut worst = 0.0f64;
    for t in 0..20 {
        let n = 1 + t % 2;
        let g = random_graph(&mut rng, n);
        let p = CrfParams::new(vec![rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)]);
        let h = random_vec(&mut rng, n, 2.0);
        let xi = dense_xi(&g, &p.beta);
        // analytic eigen-decomposition and mode of the 2x2 (or 1x1) precision
        let (lams, axes, mu): (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) = if n == 1 {
            (vec![xi[0]], vec![vec![1.0]], vec![h[0] / xi[0]])
        } else {
            let (a, b, d) = (xi[0], xi[1], xi[3]);
            let det = a * d - b * b;
            let mu = vec![(d * h[0] - b * h[1]) / det, (a * h[1] - b * h[0]) / det];
            let tr = a + d;
            let disc = ((a - d) * (a - d) / 4.0 + b * b).sqrt();
            let theta = 0.5 * (2.0 * b).atan2(a - d);
            let (c, s) = (theta.cos(), theta.sin());
            (vec![tr / 2.0 + disc, tr / 2.0 - disc], vec![vec![c, s], vec![-s, c]], mu)
        };
        let jac: f64 = lams.iter().map(|l| 1.0 / l.sqrt()).product();
        let mut integral = 0.0;
        let mut idx = vec![0usize; n];
        loop {
            let u: Vec<f64> = idx.iter().map(|&i| nodes[i]).collect();
            let wprod: f64 = idx.iter().map(|&i| weights[i]).product();
            let mut y = mu.clone();
            for k in 0..n {
                for (yi, ax) in y.iter_mut().zip(&axes[k]) {
                    *yi += ax * u[k] / lams[k].sqrt();
                }
            }
            let e = crf::energy_elementwise(&y, &h, &g, &p)?;
            let u2: f64 = u.iter().map(|v| v * v).sum();
            integral += wprod * (e + u2).exp();
            // odometer over the tensor grid
            let mut k = 0;
            while k < n {
                idx[k] += 1;
                if idx[k] < nodes.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
        integral *= jac;
        let m = crf::assemble(&g, &p)?;
        let mu_lib = crf::predict(&h, &m)?;
        let hxh: f64 = h.iter().zip(&mu_lib).map(|(a, b)| a * b).sum();
        let hh: f64 = h.iter().map(|v| v * v).sum();
        let prefactor =
            (0.5 * n as f64 * std::f64::consts::PI.ln() - 0.5 * m.log_det_xi() + hxh - hh).exp();
        worst = worst.max((integral / prefactor - 1.0).abs());
    }
    Ok(worst)
}

fn energy_form_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=10);
        let g = random_graph(&mut rng, n);
        let p = CrfParams::new(vec![rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)]);
        let y = random_vec(&mut rng, n, 4.0);
        let h = random_vec(&mut rng, n, 4.0);
        let a = crf::energy(&y, &h, &crf::assemble(&g, &p)?)?;
        let b = crf::energy_elementwise(&y, &h, &g, &p)?;
        worst = worst.max((a - b).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

/// Mean raw radiance of the central 3×3 pixels, facing the far cap of a
/// straight tube from `distance` mm with lights at the camera.
pub fn cap_patch_radiance(distance: f64) -> Result<f64> {
    let len = 200.0;
    let scene = Scene::straight_tube(20.0, len)?;
    let pose = CameraPose::new(Vec3::new(0.0, 0.0, len - distance), Vec3::Z, Vec3::Y, 120.0, 33, 33)?;
    let raw = render_raw(&scene, &pose, &LightRig::colocated(100.0), RenderSettings { supersample: false }, Exec::Sequential)?;
    let mut acc = 0.0;
    for row in 15..18 {
        for col in 15..18 {
            acc += raw.radiance[row * 33 + col];
        }
    }
    Ok(acc / 9.0)
}

fn inverse_square_deviation() -> Result<f64> {
    let ratio = cap_patch_radiance(10.0)? / cap_patch_radiance(20.0)?;
    Ok((ratio / 4.0 - 1.0).abs())
}

/// Largest relative spread of depth over the four axis directions at each
/// pixel radius, camera on the axis of a straight tube.
pub fn radial_asymmetry() -> Result<f64> {
    let scene = Scene::straight_tube(15.0, 300.0)?;
    let n = 65;
    let c = n / 2;
    let pose = CameraPose::new(Vec3::new(0.0, 0.0, 40.0), Vec3::Z, Vec3::Y, 120.0, n, n)?;
    let raw = render_raw(&scene, &pose, &LightRig::default(), RenderSettings { supersample: false }, Exec::Sequential)?;
    let at = |col: usize, row: usize| raw.depth[row * n + col];
    let mut worst = 0.0f64;
    for r in 1..=c {
        let ring = [at(c + r, c), at(c - r, c), at(c, c + r), at(c, c - r)];
        let diag = [at(c + r, c + r), at(c - r, c - r), at(c + r, c - r), at(c - r, c + r)];
        for set in [ring, diag] {
            let lo = set.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = set.iter().copied().fold(0.0, f64::max);
            worst = worst.max((hi - lo) / lo);
        }
    }
    Ok(worst)
}

/// Largest |SDF| of back-projected true depth over a few rendered frames.
pub fn reconstruction_error(seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 0..3 {
        let scene = build_scene(seed + k, &SceneConfig::default())?;
        let cfg = TrajectoryConfig {
            width: 48,
            height: 48,
            ..TrajectoryConfig::default()
        };
        for pose in sample_trajectory(&scene, 2, seed + k, &cfg)? {
            let frame = render_frame(&scene, &pose, &LightRig::default())?;
            let cloud = backproject(&frame.depth, &pose, None, Exec::Sequential)?;
            let hits = frame.depth.iter().filter(|&&d| d != DEPTH_SENTINEL).count();
            if cloud.len() != hits {
                return Ok(f64::INFINITY);
            }
            for p in &cloud.points {
                worst = worst.max(scene.sdf(*p).abs());
            }
        }
    }
    Ok(worst)
}

fn metric_example_error() -> Result<f64> {
    let r = eval::metrics(&[1.0, 2.0, 4.0], &[2.0, 4.0, 8.0])?;
    Ok((r.rel - 1.0).abs().max((r.log10 - 0.3010).abs()).max((r.rms - 2.6458).abs()))
}

/// Run every suite; `seed` varies the random instances.
pub fn run_all(seed: u64) -> Vec<SuiteResult> {
    let t = Instant::now;
    let mut out = Vec::new();
    let s = t();
    out.push(judge("crf gradients vs central differences", s, crf_gradient_error(seed), 1e-5));
    let s = t();
    out.push(judge("unary end-to-end gradient vs central differences", s, unary_gradient_error(seed), 1e-4));
    let s = t();
    out.push(judge("closed-form MAP vs gradient ascent", s, map_oracle_error(seed), 1e-6));
    let s = t();
    out.push(judge("density normalisation by Gauss-Hermite quadrature", s, normalization_error(seed), 1e-6));
    let s = t();
    out.push(judge("elementwise vs matrix energy", s, energy_form_error(seed), 1e-10));
    let s = t();
    out.push(judge("inverse-square intensity ratio at d and 2d", s, inverse_square_deviation(), 0.01));
    let s = t();
    out.push(judge("radial symmetry of on-axis tube depth", s, radial_asymmetry(), 0.01));
    let s = t();
    out.push(judge("back-projected true depth lies on the surface (mm)", s, reconstruction_error(seed), 1e-3));
    let s = t();
    out.push(judge("metric hand example", s, metric_example_error(), 1e-4));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_hermite_moments() {
        let (x, w) = gauss_hermite(20);
        let sp = std::f64::consts::PI.sqrt();
        assert!((w.iter().sum::<f64>() - sp).abs() < 1e-12);
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((m2 - sp / 2.0).abs() < 1e-12);
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m4 - 3.0 * sp / 4.0).abs() < 1e-11);
    }

    #[test]
    fn dense_xi_matches_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_graph(&mut rng, 6);
        let beta = [0.4, 1.1];
        let m = crf::assemble(&g, &CrfParams::new(beta.to_vec())).unwrap();
        let d = dense_xi(&g, &beta);
        for (a, b) in m.xi.iter().zip(&d) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
