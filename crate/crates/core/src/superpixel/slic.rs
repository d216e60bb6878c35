//! SLIC oversegmentation of a grayscale image in (intensity, x, y) space,
//! followed by a connectivity pass that folds orphaned fragments into their
//! most similar neighbour.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlicParams {
    pub g_target: usize,
    /// Weight of spatial distance relative to intensity distance (intensity in [0, 1]).
    pub compactness: f64,
    pub iters: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            g_target: 200,
            compactness: 0.05,
            iters: 10,
        }
    }
}

#[derive(Clone, Copy)]
struct Center {
    i: f64,
    x: f64,
    y: f64,
}

/// Returns a per-pixel label in `0..g`, labels numbered in scan order of first appearance.
pub fn slic(intensity: &[f64], width: usize, height: usize, params: &SlicParams) -> Result<Vec<u32>> {
    let n = width * height;
    if n == 0 || intensity.len() != n {
        return Err(Error::param("superpixel", "image is empty or does not match its dimensions"));
    }
    if params.g_target == 0 || params.g_target > n {
        return Err(Error::param(
            "superpixel",
            format!("g_target {} outside [1, {n}]", params.g_target),
        ));
    }
    if !(params.compactness > 0.0) {
        return Err(Error::param("superpixel", "compactness must be positive"));
    }
    if params.g_target == 1 {
        return Ok(vec![0; n]);
    }

    let step = (n as f64 / params.g_target as f64).sqrt();
    let nx = ((width as f64 / step).round() as usize).clamp(1, width);
    let ny = ((height as f64 / step).round() as usize).clamp(1, height);
    let at = |x: usize, y: usize| intensity[y * width + x];

    let mut centers = Vec::with_capacity(nx * ny);
    for gy in 0..ny {
        for gx in 0..nx {
            let cx = (((gx as f64 + 0.5) * width as f64 / nx as f64) as usize).min(width - 1);
            let cy = (((gy as f64 + 0.5) * height as f64 / ny as f64) as usize).min(height - 1);
            // move the seed to the lowest-gradient pixel of its 3x3 neighbourhood
            let (mut bx, mut by, mut best) = (cx, cy, f64::INFINITY);
            for y in cy.saturating_sub(1)..=(cy + 1).min(height - 1) {
                for x in cx.saturating_sub(1)..=(cx + 1).min(width - 1) {
                    let gxv = at((x + 1).min(width - 1), y) - at(x.saturating_sub(1), y);
                    let gyv = at(x, (y + 1).min(height - 1)) - at(x, y.saturating_sub(1));
                    let g = gxv * gxv + gyv * gyv;
                    if g < best {
                        best = g;
                        bx = x;
                        by = y;
                    }
                }
            }
            centers.push(Center {
                i: at(bx, by),
                x: bx as f64,
                y: by as f64,
            });
        }
    }

    let spatial_w = (params.compactness / step).powi(2);
    let window = (2.0 * step).ceil() as isize;
    let mut labels = vec![u32::MAX; n];
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..params.iters.max(1) {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let x0 = (c.x.round() as isize - window).max(0) as usize;
            let x1 = ((c.x.round() as isize + window) as usize).min(width - 1);
            let y0 = (c.y.round() as isize - window).max(0) as usize;
            let y1 = ((c.y.round() as isize + window) as usize).min(height - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let idx = y * width + x;
                    let di = intensity[idx] - c.i;
                    let dx = x as f64 - c.x;
                    let dy = y as f64 - c.y;
                    let d = di * di + spatial_w * (dx * dx + dy * dy);
                    if d < dist[idx] {
                        dist[idx] = d;
                        labels[idx] = k as u32;
                    }
                }
            }
        }
        let mut acc = vec![(0.0, 0.0, 0.0, 0usize); centers.len()];
        for (idx, &l) in labels.iter().enumerate() {
            if l == u32::MAX {
                continue;
            }
            let a = &mut acc[l as usize];
            a.0 += intensity[idx];
            a.1 += (idx % width) as f64;
            a.2 += (idx / width) as f64;
            a.3 += 1;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a.3 > 0 {
                let m = a.3 as f64;
                *c = Center {
                    i: a.0 / m,
                    x: a.1 / m,
                    y: a.2 / m,
                };
            }
        }
    }
    // pixels outside every search window go to the nearest center
    for idx in 0..n {
        if labels[idx] == u32::MAX {
            let (x, y) = ((idx % width) as f64, (idx / width) as f64);
            let k = centers
                .iter()
                .enumerate()
                .map(|(k, c)| (k, (c.x - x).powi(2) + (c.y - y).powi(2)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0;
            labels[idx] = k as u32;
        }
    }

    let min_size = (n / params.g_target / 4).max(1);
    Ok(enforce_connectivity(intensity, width, height, &labels, min_size))
}

fn find(parent: &mut [usize], mut a: usize) -> usize {
    while parent[a] != a {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    a
}

/// Split labels into 4-connected components, then merge fragments (all but the
/// largest component of each label, plus anything below `min_size`) into the
/// adjacent region with the closest mean intensity.
pub fn enforce_connectivity(intensity: &[f64], width: usize, height: usize, labels: &[u32], min_size: usize) -> Vec<u32> {
    let n = width * height;
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut sums = Vec::new();
    let mut owner = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let l = labels[start];
        let (mut size, mut sum) = (0usize, 0.0);
        comp[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            size += 1;
            sum += intensity[p];
            let (x, y) = (p % width, p / width);
            let mut visit = |q: usize| {
                if comp[q] == usize::MAX && labels[q] == l {
                    comp[q] = id;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < width {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - width);
            }
            if y + 1 < height {
                visit(p + width);
            }
        }
        sizes.push(size);
        sums.push(sum);
        owner.push(l);
    }
    let ncomp = sizes.len();

    // adjacency between components
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
    for p in 0..n {
        let (x, y) = (p % width, p / width);
        let a = comp[p];
        if x + 1 < width && comp[p + 1] != a {
            adj[a].push(comp[p + 1]);
            adj[comp[p + 1]].push(a);
        }
        if y + 1 < height && comp[p + width] != a {
            adj[a].push(comp[p + width]);
            adj[comp[p + width]].push(a);
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }

    let mut largest: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    for c in 0..ncomp {
        let e = largest.entry(owner[c]).or_insert(c);
        if sizes[c] > sizes[*e] {
            *e = c;
        }
    }
    let mut parent: Vec<usize> = (0..ncomp).collect();
    let mut members: Vec<Vec<usize>> = (0..ncomp).map(|c| vec![c]).collect();
    let mut rsize = sizes.clone();
    let mut rsum = sums.clone();
    let mut orphan: Vec<bool> = (0..ncomp)
        .map(|c| largest[&owner[c]] != c || sizes[c] < min_size)
        .collect();

    loop {
        let mut progressed = false;
        // smallest first, so fragments attach before their hosts are judged
        let mut order: Vec<usize> = (0..ncomp).filter(|&c| parent[c] == c && orphan[c]).collect();
        order.sort_by_key(|&c| (rsize[c], c));
        for c in order {
            if find(&mut parent, c) != c || !orphan[c] {
                continue;
            }
            let mean = rsum[c] / rsize[c] as f64;
            let mut best: Option<(bool, f64, usize)> = None;
            for &m in &members[c] {
                for &nb in &adj[m] {
                    let r = find(&mut parent, nb);
                    if r == c {
                        continue;
                    }
                    let key = (orphan[r], (rsum[r] / rsize[r] as f64 - mean).abs(), r);
                    if best.is_none_or(|b| key < b) {
                        best = Some(key);
                    }
                }
            }
            let Some((_, _, target)) = best else {
                continue;
            };
            parent[c] = target;
            let moved = std::mem::take(&mut members[c]);
            members[target].extend(moved);
            rsize[target] += rsize[c];
            rsum[target] += rsum[c];
            if orphan[target] && rsize[target] >= min_size {
                orphan[target] = false;
            }
            progressed = true;
        }
        let left = (0..ncomp).filter(|&c| parent[c] == c && orphan[c]).count();
        if left == 0 || !progressed {
            break;
        }
    }

    let mut relabel = vec![u32::MAX; ncomp];
    let mut next = 0u32;
    let mut out = vec![0u32; n];
    for p in 0..n {
        let r = find(&mut parent, comp[p]);
        if relabel[r] == u32::MAX {
            relabel[r] = next;
            next += 1;
        }
        out[p] = relabel[r];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_are_contiguous(l: &[u32]) -> usize {
        let g = *l.iter().max().unwrap() as usize + 1;
        let mut seen = vec![false; g];
        l.iter().for_each(|&v| seen[v as usize] = true);
        assert!(seen.iter().all(|&s| s));
        g
    }

    #[test]
    fn single_superpixel() {
        let img = vec![0.3; 20 * 10];
        let l = slic(&img, 20, 10, &SlicParams { g_target: 1, ..Default::default() }).unwrap();
        assert!(l.iter().all(|&v| v == 0));
    }

    #[test]
    fn too_many_superpixels_is_an_error() {
        let img = vec![0.3; 4];
        assert!(slic(&img, 2, 2, &SlicParams { g_target: 5, ..Default::default() }).is_err());
    }

    #[test]
    fn uniform_image_tiles_evenly() {
        let img = vec![0.5; 64 * 64];
        let l = slic(&img, 64, 64, &SlicParams { g_target: 16, ..Default::default() }).unwrap();
        let g = labels_are_contiguous(&l);
        assert!((13..=19).contains(&g), "{g}");
        let mut area = vec![0usize; g];
        l.iter().for_each(|&v| area[v as usize] += 1);
        for a in area {
            assert!((128..=512).contains(&a), "{a}");
        }
    }

    #[test]
    fn fragments_are_merged() {
        // label 0 appears as two disconnected blobs
        let labels = vec![0, 1, 0, 0, 1, 1];
        let img = vec![0.0, 1.0, 0.0, 0.0, 1.0, 1.0];
        let out = enforce_connectivity(&img, 3, 2, &labels, 1);
        assert_eq!(labels_are_contiguous(&out), 2);
        assert_eq!(out[2], out[1]);
        assert_ne!(out[0], out[1]);
    }
}
