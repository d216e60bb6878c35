//! Superpixel adjacency graph with per-node features and the two pairwise
//! similarity channels (mean-intensity difference and histogram distance).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::DEPTH_SENTINEL;

/// Marks pixels whose node was removed from the graph.
pub const UNASSIGNED: u32 = u32::MAX;

pub const CHANNEL_NAMES: [&str; 2] = ["intensity", "histogram"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphParams {
    pub bins: usize,
    /// Bandwidth of the intensity kernel `exp(-c1 |I_i - I_j|^2)`.
    pub c_intensity: f64,
    /// Bandwidth of the histogram kernel `exp(-c2 |h_i - h_j|^2)`.
    pub c_histogram: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            bins: 16,
            c_intensity: 10.0,
            c_histogram: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFeatures {
    pub mean_intensity: f64,
    pub histogram: Vec<f64>,
    /// Centroid in normalized image coordinates, each in [0, 1].
    pub centroid: [f64; 2],
    pub pixel_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelGraph {
    pub width: usize,
    pub height: usize,
    /// Node index per pixel, or [`UNASSIGNED`].
    pub assignment: Vec<u32>,
    pub nodes: Vec<NodeFeatures>,
    pub gt_depth: Option<Vec<f64>>,
    /// Unordered edges `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(u32, u32)>,
    /// `similarity[k][e]` is channel `k` on edge `e`.
    pub similarity: Vec<Vec<f64>>,
}

pub fn gaussian_kernel(c: f64, dist_sq: f64) -> f64 {
    (-c * dist_sq).exp()
}

impl SuperpixelGraph {
    pub fn g(&self) -> usize {
        self.nodes.len()
    }

    pub fn channels(&self) -> usize {
        self.similarity.len()
    }

    /// Similarity of channel `k` between nodes `i` and `j` (0 when not adjacent).
    pub fn similarity_between(&self, k: usize, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let key = (i.min(j) as u32, i.max(j) as u32);
        match self.edges.binary_search(&key) {
            Ok(e) => self.similarity[k][e],
            Err(_) => 0.0,
        }
    }

    /// Ground-truth depths, or a data error if this graph has none.
    pub fn targets(&self) -> Result<&[f64]> {
        self.gt_depth
            .as_deref()
            .ok_or_else(|| Error::Data("graph has no ground-truth depth".into()))
    }

    /// Keep only nodes with `keep[i]`, remapping edges and the pixel assignment.
    pub fn retain_nodes(&self, keep: &[bool]) -> SuperpixelGraph {
        let mut map = vec![UNASSIGNED; self.g()];
        let mut next = 0u32;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                map[i] = next;
                next += 1;
            }
        }
        let assignment = self
            .assignment
            .iter()
            .map(|&a| if a == UNASSIGNED { a } else { map[a as usize] })
            .collect();
        let nodes = self
            .nodes
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(n, _)| n.clone())
            .collect();
        let gt_depth = self
            .gt_depth
            .as_ref()
            .map(|d| d.iter().zip(keep).filter(|(_, &k)| k).map(|(v, _)| *v).collect());
        let mut edges = Vec::new();
        let mut similarity = vec![Vec::new(); self.channels()];
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            let (a, b) = (map[i as usize], map[j as usize]);
            if a != UNASSIGNED && b != UNASSIGNED {
                edges.push((a, b));
                for k in 0..self.channels() {
                    similarity[k].push(self.similarity[k][e]);
                }
            }
        }
        SuperpixelGraph {
            width: self.width,
            height: self.height,
            assignment,
            nodes,
            gt_depth,
            edges,
            similarity,
        }
    }

    /// Drop nodes whose pixels were all depth-sentinel (gt depth is NaN).
    pub fn drop_unlabelled(&self) -> Result<SuperpixelGraph> {
        let Some(d) = &self.gt_depth else {
            return Ok(self.clone());
        };
        let keep: Vec<bool> = d.iter().map(|v| v.is_finite()).collect();
        if !keep.iter().any(|&k| k) {
            return Err(Error::EmptyGraph);
        }
        Ok(self.retain_nodes(&keep))
    }

    /// Relabel node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> SuperpixelGraph {
        let g = self.g();
        assert_eq!(perm.len(), g);
        let mut nodes = vec![self.nodes[0].clone(); g];
        for i in 0..g {
            nodes[perm[i]] = self.nodes[i].clone();
        }
        let gt_depth = self.gt_depth.as_ref().map(|d| {
            let mut out = vec![0.0; g];
            for i in 0..g {
                out[perm[i]] = d[i];
            }
            out
        });
        let assignment = self
            .assignment
            .iter()
            .map(|&a| if a == UNASSIGNED { a } else { perm[a as usize] as u32 })
            .collect();
        let mut pairs: Vec<((u32, u32), usize)> = self
            .edges
            .iter()
            .enumerate()
            .map(|(e, &(i, j))| {
                let (a, b) = (perm[i as usize] as u32, perm[j as usize] as u32);
                ((a.min(b), a.max(b)), e)
            })
            .collect();
        pairs.sort();
        let edges = pairs.iter().map(|p| p.0).collect();
        let similarity = self
            .similarity
            .iter()
            .map(|ch| pairs.iter().map(|p| ch[p.1]).collect())
            .collect();
        SuperpixelGraph {
            width: self.width,
            height: self.height,
            assignment,
            nodes,
            gt_depth,
            edges,
            similarity,
        }
    }
}

/// Build the graph for an image and its pixel assignment. With `depth`, each
/// node's target is the mean of its non-sentinel depths (NaN if none).
pub fn build_graph(
    width: usize,
    height: usize,
    intensity: &[f64],
    depth: Option<&[f64]>,
    assignment: &[u32],
    params: &GraphParams,
) -> Result<SuperpixelGraph> {
    let n = width * height;
    if intensity.len() != n {
        return Err(Error::dim("superpixel", n, intensity.len()));
    }
    if assignment.len() != n {
        return Err(Error::dim("superpixel", n, assignment.len()));
    }
    if let Some(d) = depth {
        if d.len() != n {
            return Err(Error::dim("superpixel", n, d.len()));
        }
    }
    if params.bins == 0 {
        return Err(Error::param("superpixel", "histogram needs at least one bin"));
    }
    let g = assignment.iter().copied().filter(|&a| a != UNASSIGNED).max().map_or(0, |m| m as usize + 1);
    if g == 0 {
        return Err(Error::EmptyGraph);
    }

    let bins = params.bins;
    let mut count = vec![0usize; g];
    let mut sum_i = vec![0.0; g];
    let mut sum_x = vec![0.0; g];
    let mut sum_y = vec![0.0; g];
    let mut hist = vec![0.0; g * bins];
    let mut depth_sum = vec![0.0; g];
    let mut depth_n = vec![0usize; g];
    for (p, &a) in assignment.iter().enumerate() {
        if a == UNASSIGNED {
            continue;
        }
        let a = a as usize;
        let v = intensity[p];
        count[a] += 1;
        sum_i[a] += v;
        sum_x[a] += ((p % width) as f64 + 0.5) / width as f64;
        sum_y[a] += ((p / width) as f64 + 0.5) / height as f64;
        let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        hist[a * bins + b] += 1.0;
        if let Some(d) = depth {
            if d[p] != DEPTH_SENTINEL && d[p] > 0.0 {
                depth_sum[a] += d[p];
                depth_n[a] += 1;
            }
        }
    }
    if let Some(empty) = count.iter().position(|&c| c == 0) {
        return Err(Error::param("superpixel", format!("node {empty} has no pixels")));
    }

    let nodes: Vec<NodeFeatures> = (0..g)
        .map(|a| {
            let c = count[a] as f64;
            NodeFeatures {
                mean_intensity: sum_i[a] / c,
                histogram: hist[a * bins..(a + 1) * bins].iter().map(|h| h / c).collect(),
                centroid: [sum_x[a] / c, sum_y[a] / c],
                pixel_count: count[a],
            }
        })
        .collect();

    let gt_depth = match depth {
        Some(_) => {
            if depth_n.iter().all(|&k| k == 0) {
                return Err(Error::EmptyGraph);
            }
            Some(
                (0..g)
                    .map(|a| if depth_n[a] > 0 { depth_sum[a] / depth_n[a] as f64 } else { f64::NAN })
                    .collect(),
            )
        }
        None => None,
    };

    let mut edge_set = std::collections::BTreeSet::new();
    for p in 0..n {
        let a = assignment[p];
        if a == UNASSIGNED {
            continue;
        }
        let (x, y) = (p % width, p / width);
        let mut add = |q: usize| {
            let b = assignment[q];
            if b != UNASSIGNED && b != a {
                edge_set.insert((a.min(b), a.max(b)));
            }
        };
        if x + 1 < width {
            add(p + 1);
        }
        if y + 1 < height {
            add(p + width);
        }
    }
    let edges: Vec<(u32, u32)> = edge_set.into_iter().collect();
    let mut s_int = Vec::with_capacity(edges.len());
    let mut s_hist = Vec::with_capacity(edges.len());
    for &(i, j) in &edges {
        let (a, b) = (&nodes[i as usize], &nodes[j as usize]);
        let di = a.mean_intensity - b.mean_intensity;
        s_int.push(gaussian_kernel(params.c_intensity, di * di));
        let dh: f64 = a.histogram.iter().zip(&b.histogram).map(|(x, y)| (x - y) * (x - y)).sum();
        s_hist.push(gaussian_kernel(params.c_histogram, dh));
    }

    Ok(SuperpixelGraph {
        width,
        height,
        assignment: assignment.to_vec(),
        nodes,
        gt_depth,
        edges,
        similarity: vec![s_int, s_hist],
    })
}

/// On-disk form of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub g: usize,
    pub width: usize,
    pub height: usize,
    pub features: Vec<NodeFeatures>,
    pub gt_depth: Option<Vec<Option<f64>>>,
    pub edges: Vec<[u32; 2]>,
    #[serde(rename = "S")]
    pub s: BTreeMap<String, Vec<(u32, u32, f64)>>,
    pub assignment: Vec<u32>,
}

impl From<&SuperpixelGraph> for GraphFile {
    fn from(g: &SuperpixelGraph) -> Self {
        let s = g
            .similarity
            .iter()
            .enumerate()
            .map(|(k, ch)| {
                let name = CHANNEL_NAMES.get(k).map_or_else(|| format!("channel{k}"), |s| s.to_string());
                let triplets = g.edges.iter().zip(ch).map(|(&(i, j), &v)| (i, j, v)).collect();
                (name, triplets)
            })
            .collect();
        GraphFile {
            g: g.g(),
            width: g.width,
            height: g.height,
            features: g.nodes.clone(),
            gt_depth: g
                .gt_depth
                .as_ref()
                .map(|d| d.iter().map(|v| v.is_finite().then_some(*v)).collect()),
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
            s,
            assignment: g.assignment.clone(),
        }
    }
}

impl TryFrom<GraphFile> for SuperpixelGraph {
    type Error = Error;

    fn try_from(f: GraphFile) -> Result<Self> {
        if f.features.len() != f.g {
            return Err(Error::dim("superpixel", f.g, f.features.len()));
        }
        if f.assignment.len() != f.width * f.height {
            return Err(Error::dim("superpixel", f.width * f.height, f.assignment.len()));
        }
        let edges: Vec<(u32, u32)> = f.edges.iter().map(|e| (e[0], e[1])).collect();
        let mut similarity = Vec::new();
        for (k, name) in CHANNEL_NAMES.iter().enumerate() {
            let Some(tr) = f.s.get(*name) else {
                return Err(Error::Data(format!("graph file lacks similarity channel {name:?} ({k})")));
            };
            if tr.len() != edges.len() || tr.iter().zip(&edges).any(|(t, e)| (t.0, t.1) != *e) {
                return Err(Error::Data(format!("similarity channel {name:?} does not match the edge list")));
            }
            similarity.push(tr.iter().map(|t| t.2).collect());
        }
        Ok(SuperpixelGraph {
            width: f.width,
            height: f.height,
            assignment: f.assignment,
            nodes: f.features,
            gt_depth: f
                .gt_depth
                .map(|d| d.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect()),
            edges,
            similarity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 4x2 image split into a left and right half.
    fn halves(left: f64, right: f64) -> SuperpixelGraph {
        let intensity = vec![left, left, right, right, left, left, right, right];
        let assignment = vec![0, 0, 1, 1, 0, 0, 1, 1];
        let depth = vec![10.0, 12.0, 20.0, 20.0, 10.0, 12.0, DEPTH_SENTINEL, 20.0];
        let params = GraphParams {
            c_intensity: 10.0,
            ..Default::default()
        };
        build_graph(4, 2, &intensity, Some(&depth), &assignment, &params).unwrap()
    }

    #[test]
    fn kernel_value_matches_hand_computation() {
        let g = halves(0.2, 0.6);
        assert_eq!(g.edges, vec![(0, 1)]);
        assert!((g.similarity[0][0] - (-1.6f64).exp()).abs() < 1e-15);
        assert!((g.similarity[0][0] - 0.2019).abs() < 1e-4);
        assert_eq!(g.gt_depth.as_ref().unwrap(), &vec![11.0, 20.0]);
    }

    #[test]
    fn identical_features_give_unit_similarity() {
        let g = halves(0.4, 0.4);
        assert_eq!(g.similarity[0][0], 1.0);
        assert_eq!(g.similarity[1][0], 1.0);
    }

    #[test]
    fn non_adjacent_nodes_have_no_edge() {
        let intensity = vec![0.1; 6];
        let assignment = vec![0, 1, 2, 0, 1, 2];
        let g = build_graph(3, 2, &intensity, None, &assignment, &GraphParams::default()).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
        assert_eq!(g.similarity_between(0, 0, 2), 0.0);
        assert_eq!(g.similarity_between(0, 2, 1), g.similarity[0][1]);
    }

    #[test]
    fn histograms_sum_to_one() {
        let g = halves(0.3, 0.95);
        for n in &g.nodes {
            assert!((n.histogram.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(g.nodes.iter().map(|n| n.pixel_count).sum::<usize>(), 8);
    }

    #[test]
    fn all_sentinel_is_empty_graph() {
        let r = build_graph(2, 1, &[0.1, 0.2], Some(&[DEPTH_SENTINEL; 2]), &[0, 1], &GraphParams::default());
        assert!(matches!(r, Err(Error::EmptyGraph)));
    }

    #[test]
    fn unlabelled_nodes_are_dropped() {
        let r = build_graph(2, 1, &[0.1, 0.2], Some(&[DEPTH_SENTINEL, 5.0]), &[0, 1], &GraphParams::default()).unwrap();
        let d = r.drop_unlabelled().unwrap();
        assert_eq!(d.g(), 1);
        assert_eq!(d.assignment, vec![UNASSIGNED, 0]);
        assert!(d.edges.is_empty());
    }

    #[test]
    fn file_round_trip() {
        let g = halves(0.2, 0.7);
        let f = GraphFile::from(&g);
        let text = serde_json::to_string(&f).unwrap();
        let back: GraphFile = serde_json::from_str(&text).unwrap();
        let g2 = SuperpixelGraph::try_from(back).unwrap();
        assert_eq!(g, g2);
    }
}
