use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn two_node() -> (CrfGraph, CrfParams) {
    (
        CrfGraph {
            n: 2,
            edges: vec![(0, 1)],
            similarity: vec![vec![0.5]],
        },
        CrfParams::new(vec![2.0]),
    )
}

/// Random connected-ish graph with K = 2 channels.
fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> CrfGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if j == i + 1 || rng.random_bool(0.3) {
                edges.push((i as u32, j as u32));
            }
        }
    }
    let similarity = (0..2)
        .map(|_| edges.iter().map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    CrfGraph { n, edges, similarity }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

#[test]
fn zero_beta_gives_identity() {
    let (g, _) = two_node();
    let m = assemble(&g, &CrfParams::zeros(1)).unwrap();
    assert_eq!(m.affinity, vec![0.0; 4]);
    assert_eq!(m.xi, vec![1.0, 0.0, 0.0, 1.0]);
    let h = [3.5, -1.25];
    assert_eq!(predict(&h, &m).unwrap(), h.to_vec());
}

#[test]
fn two_node_assembly_by_hand() {
    let (g, p) = two_node();
    let m = assemble(&g, &p).unwrap();
    assert_eq!(m.affinity, vec![0.0, 1.0, 1.0, 0.0]);
    assert_eq!(m.degree, vec![1.0, 1.0]);
    assert_eq!(m.xi, vec![2.0, -1.0, -1.0, 2.0]);
    let y = predict(&[3.0, 0.0], &m).unwrap();
    assert!((y[0] - 2.0).abs() < 1e-14 && (y[1] - 1.0).abs() < 1e-14);
}

#[test]
fn negative_beta_rejected() {
    let (g, _) = two_node();
    assert!(matches!(assemble(&g, &CrfParams::new(vec![-0.1])), Err(Error::Parameter { .. })));
    assert!(assemble(&g, &CrfParams::new(vec![1.0, 1.0])).is_err());
}

#[test]
fn energy_examples() {
    let (g, p) = two_node();
    let m = assemble(&g, &p).unwrap();
    let e = energy(&[1.0, 2.0], &[1.0, 1.0], &m).unwrap();
    let e6 = energy_elementwise(&[1.0, 2.0], &[1.0, 1.0], &g, &p).unwrap();
    assert!((e + 2.0).abs() < 1e-14);
    assert!((e6 + 2.0).abs() < 1e-14);

    let single = CrfGraph {
        n: 1,
        edges: vec![],
        similarity: vec![vec![]],
    };
    let m1 = assemble(&single, &CrfParams::zeros(1)).unwrap();
    assert_eq!(energy(&[3.0], &[5.0], &m1).unwrap(), -4.0);
    assert_eq!(energy(&[2.0, 7.0], &[2.0, 7.0], &assemble(&g, &CrfParams::zeros(1)).unwrap()).unwrap(), 0.0);
}

#[test]
fn dimension_mismatch_is_reported() {
    let (g, p) = two_node();
    let m = assemble(&g, &p).unwrap();
    assert!(matches!(energy(&[1.0], &[1.0, 2.0], &m), Err(Error::Dimension { .. })));
    assert!(nll(&[1.0, 2.0, 3.0], &[1.0, 2.0], &m).is_err());
    assert!(predict(&[1.0], &m).is_err());
    assert!(grad_h(&[1.0], &[1.0, 2.0], &m).is_err());
}

#[test]
fn single_node_nll_values() {
    let single = CrfGraph {
        n: 1,
        edges: vec![],
        similarity: vec![vec![]],
    };
    let m = assemble(&single, &CrfParams::zeros(1)).unwrap();
    let half_log_pi = 0.5 * std::f64::consts::PI.ln();
    assert!((nll(&[0.0], &[0.0], &m).unwrap() - half_log_pi).abs() < 1e-15);
    assert!((half_log_pi - 0.5724).abs() < 1e-4);
    assert!((nll(&[1.5], &[0.0], &m).unwrap() - (2.25 + half_log_pi)).abs() < 1e-14);
    // scalar calculus: d/dh [(y - h)^2] = 2h - 2y
    assert_eq!(grad_h(&[2.0], &[5.0], &m).unwrap(), vec![6.0]);
}

#[test]
fn nll_is_minimised_at_the_map_estimate() {
    let (g, p) = two_node();
    let m = assemble(&g, &p).unwrap();
    let h = [3.0, -1.0];
    let map = predict(&h, &m).unwrap();
    let best = nll(&map, &h, &m).unwrap();
    // grid search around the MAP estimate
    let mut grid_best = (f64::INFINITY, 0.0, 0.0);
    for a in -50..=50 {
        for b in -50..=50 {
            let y = [map[0] + a as f64 * 0.01, map[1] + b as f64 * 0.01];
            let v = nll(&y, &h, &m).unwrap();
            if v < grid_best.0 {
                grid_best = (v, y[0], y[1]);
            }
        }
    }
    assert!((grid_best.1 - map[0]).abs() < 1e-12 && (grid_best.2 - map[1]).abs() < 1e-12);
    assert!((grid_best.0 - best).abs() < 1e-14);
}

#[test]
fn constant_unary_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = random_graph(&mut rng, 8);
    let m = assemble(&g, &CrfParams::new(vec![3.0, 0.7])).unwrap();
    let y = predict(&[2.5; 8], &m).unwrap();
    assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-12));
}

#[test]
fn zero_channel_has_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = random_graph(&mut rng, 6);
    g.similarity[1].iter_mut().for_each(|s| *s = 0.0);
    let m = assemble(&g, &CrfParams::new(vec![0.4, 1.3])).unwrap();
    let y = random_vec(&mut rng, 6, 2.0);
    let h = random_vec(&mut rng, 6, 2.0);
    assert_eq!(grad_beta(&y, &h, &m, &g).unwrap()[1], 0.0);
}

fn fd_beta<G: Pairwise>(g: &G, beta: &[f64], y: &[f64], h: &[f64], k: usize, step: f64) -> f64 {
    let mut plus = beta.to_vec();
    let mut minus = beta.to_vec();
    plus[k] += step;
    minus[k] -= step;
    let fp = nll(y, h, &assemble(g, &CrfParams::new(plus)).unwrap()).unwrap();
    let fm = nll(y, h, &assemble(g, &CrfParams::new(minus)).unwrap()).unwrap();
    (fp - fm) / (2.0 * step)
}

#[test]
fn beta_gradient_at_zero_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g = random_graph(&mut rng, 5);
    let h = random_vec(&mut rng, 5, 2.0);
    let y = h.clone();
    let beta = [0.0, 0.0];
    let m = assemble(&g, &CrfParams::new(beta.to_vec())).unwrap();
    let analytic = grad_beta(&y, &h, &m, &g).unwrap();
    // one-sided at the boundary: beta must stay >= 0
    for k in 0..2 {
        let step = 1e-5;
        let mut p = beta.to_vec();
        p[k] = step;
        let mut p2 = beta.to_vec();
        p2[k] = 2.0 * step;
        let f0 = nll(&y, &h, &m).unwrap();
        let f1 = nll(&y, &h, &assemble(&g, &CrfParams::new(p)).unwrap()).unwrap();
        let f2 = nll(&y, &h, &assemble(&g, &CrfParams::new(p2)).unwrap()).unwrap();
        let fd = (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * step);
        assert!(rel_err(analytic[k], fd) < 1e-6, "{k}: {} vs {fd}", analytic[k]);
    }
}

#[test]
fn evaluate_matches_individual_calls() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = random_graph(&mut rng, 7);
    let m = assemble(&g, &CrfParams::new(vec![0.8, 0.3])).unwrap();
    let y = random_vec(&mut rng, 7, 3.0);
    let h = random_vec(&mut rng, 7, 3.0);
    let ev = evaluate(&y, &h, &m, &g).unwrap();
    assert_eq!(ev.nll, nll(&y, &h, &m).unwrap());
    assert_eq!(ev.grad_h, grad_h(&y, &h, &m).unwrap());
    assert_eq!(ev.grad_beta, grad_beta(&y, &h, &m, &g).unwrap());
    assert_eq!(ev.prediction, predict(&h, &m).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradients_match_central_differences(seed in any::<u64>(), n in 1usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n);
        let beta = vec![rng.random_range(0.05..2.0), rng.random_range(0.05..2.0)];
        let y = random_vec(&mut rng, n, 2.0);
        let h = random_vec(&mut rng, n, 2.0);
        let m = assemble(&g, &CrfParams::new(beta.clone())).unwrap();
        let gb = grad_beta(&y, &h, &m, &g).unwrap();
        for k in 0..2 {
            let fd = fd_beta(&g, &beta, &y, &h, k, 1e-5);
            prop_assert!(rel_err(gb[k], fd) < 1e-5, "beta {}: {} vs {}", k, gb[k], fd);
        }
        let gh = grad_h(&y, &h, &m).unwrap();
        for i in 0..n {
            let mut hp = h.clone();
            let mut hm = h.clone();
            hp[i] += 1e-5;
            hm[i] -= 1e-5;
            let fd = (nll(&y, &hp, &m).unwrap() - nll(&y, &hm, &m).unwrap()) / 2e-5;
            prop_assert!(rel_err(gh[i], fd) < 1e-6, "h {}: {} vs {}", i, gh[i], fd);
        }
    }

    #[test]
    fn map_beats_random_candidates(seed in any::<u64>(), n in 1usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n);
        let m = assemble(&g, &CrfParams::new(vec![rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)])).unwrap();
        let h = random_vec(&mut rng, n, 5.0);
        let map = predict(&h, &m).unwrap();
        let best = nll(&map, &h, &m).unwrap();
        for _ in 0..50 {
            let y = random_vec(&mut rng, n, 5.0);
            prop_assert!(best < nll(&y, &h, &m).unwrap());
        }
    }

    #[test]
    fn xi_is_positive_definite_with_unit_floor(seed in any::<u64>(), n in 1usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n);
        let m = assemble(&g, &CrfParams::new(vec![rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)])).unwrap();
        // L 1 = 0 and symmetric A with zero diagonal
        for i in 0..n {
            prop_assert_eq!(m.affinity[i * n + i], 0.0);
            let row: f64 = m.xi[i * n..(i + 1) * n].iter().sum();
            prop_assert!((row - 1.0).abs() < 1e-12);
            for j in 0..n {
                prop_assert_eq!(m.affinity[i * n + j], m.affinity[j * n + i]);
            }
        }
        // Rayleigh quotients never drop below 1
        for _ in 0..20 {
            let v = random_vec(&mut rng, n, 1.0);
            let q: f64 = v.iter().zip(m.xi_mul(&v)).map(|(a, b)| a * b).sum();
            let vv: f64 = v.iter().map(|a| a * a).sum();
            prop_assert!(q / vv >= 1.0 - 1e-10);
        }
    }

    #[test]
    fn energy_forms_agree(seed in any::<u64>(), n in 1usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n);
        let p = CrfParams::new(vec![rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)]);
        let m = assemble(&g, &p).unwrap();
        let y = random_vec(&mut rng, n, 4.0);
        let h = random_vec(&mut rng, n, 4.0);
        let a = energy(&y, &h, &m).unwrap();
        let b = energy_elementwise(&y, &h, &g, &p).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn more_smoothing_reduces_roughness(seed in any::<u64>(), n in 2usize..=10, k in 0usize..2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n);
        let h = random_vec(&mut rng, n, 4.0);
        let beta = vec![rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)];
        let roughness = |beta: &[f64]| {
            let m = assemble(&g, &CrfParams::new(beta.to_vec())).unwrap();
            let y = predict(&h, &m).unwrap();
            g.edges.iter().enumerate().map(|(e, &(i, j))| {
                let d = y[i as usize] - y[j as usize];
                g.similarity[k][e] * d * d
            }).sum::<f64>()
        };
        let mut more = beta.clone();
        more[k] += rng.random_range(0.01..2.0);
        prop_assert!(roughness(&more) <= roughness(&beta) + 1e-12);
    }

    #[test]
    fn relabelling_permutes_prediction(seed in any::<u64>(), n in 1usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n);
        let p = CrfParams::new(vec![1.2, 0.4]);
        let h = random_vec(&mut rng, n, 3.0);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let pg = CrfGraph {
            n,
            edges: g.edges.iter().map(|&(i, j)| (perm[i as usize] as u32, perm[j as usize] as u32)).collect(),
            similarity: g.similarity.clone(),
        };
        let mut ph = vec![0.0; n];
        for i in 0..n {
            ph[perm[i]] = h[i];
        }
        let y = predict(&h, &assemble(&g, &p).unwrap()).unwrap();
        let py = predict(&ph, &assemble(&pg, &p).unwrap()).unwrap();
        for i in 0..n {
            prop_assert!((py[perm[i]] - y[i]).abs() < 1e-12);
        }
    }
}
