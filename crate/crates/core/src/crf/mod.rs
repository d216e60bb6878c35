//! Continuous Gaussian CRF over a superpixel graph.
//!
//! With unary predictions `h` and affinity `A = Σ_k β_k S^k`, the energy is
//!
//! ```text
//! E(y) = -|y - h|² - yᵀ L y        L = D - A,  ξ = I + L
//!      = -(y - ξ⁻¹h)ᵀ ξ (y - ξ⁻¹h) + hᵀξ⁻¹h - hᵀh
//! ```
//!
//! so `exp(E)` normalises to a Gaussian with mean `ξ⁻¹h` and covariance
//! `ξ⁻¹ / 2`, giving
//!
//! ```text
//! nll(y) = (y - ξ⁻¹h)ᵀ ξ (y - ξ⁻¹h) - ½ log|ξ| + (n/2) log π
//! ∂nll/∂h   = 2 ξ⁻¹h - 2y
//! ∂nll/∂β_k = yᵀL_k y - μᵀL_k μ - ½ tr(ξ⁻¹ L_k),   μ = ξ⁻¹h
//! ```
//!
//! where `L_k` is the Laplacian of channel `k` alone. Everything goes through
//! one Cholesky factor of `ξ`; no explicit inverse is formed.

pub mod cholesky;

use serde::{Deserialize, Serialize};

pub use cholesky::Cholesky;

use crate::error::{Error, Result};
use crate::superpixel::SuperpixelGraph;

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Edge list plus per-channel similarities; what the CRF needs from a graph.
pub trait Pairwise {
    fn node_count(&self) -> usize;
    fn edge_list(&self) -> &[(u32, u32)];
    /// `[channel][edge]`
    fn similarities(&self) -> &[Vec<f64>];
}

impl Pairwise for SuperpixelGraph {
    fn node_count(&self) -> usize {
        self.g()
    }
    fn edge_list(&self) -> &[(u32, u32)] {
        &self.edges
    }
    fn similarities(&self) -> &[Vec<f64>] {
        &self.similarity
    }
}

/// Stand-alone pairwise structure, handy for synthetic graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGraph {
    pub n: usize,
    pub edges: Vec<(u32, u32)>,
    pub similarity: Vec<Vec<f64>>,
}

impl Pairwise for CrfGraph {
    fn node_count(&self) -> usize {
        self.n
    }
    fn edge_list(&self) -> &[(u32, u32)] {
        &self.edges
    }
    fn similarities(&self) -> &[Vec<f64>] {
        &self.similarity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    pub beta: Vec<f64>,
}

impl CrfParams {
    pub fn new(beta: Vec<f64>) -> Self {
        CrfParams { beta }
    }

    pub fn zeros(k: usize) -> Self {
        CrfParams { beta: vec![0.0; k] }
    }
}

/// `A`, `D`, `ξ = I + D - A` and the Cholesky factor of `ξ` for one graph.
#[derive(Debug, Clone)]
pub struct CrfMatrices {
    pub n: usize,
    /// Dense row-major affinity.
    pub affinity: Vec<f64>,
    pub degree: Vec<f64>,
    /// Dense row-major `ξ`.
    pub xi: Vec<f64>,
    pub chol: Cholesky,
    edges: Vec<(u32, u32)>,
    /// Total affinity per edge, `Σ_k β_k S^k_e`.
    edge_weight: Vec<f64>,
}

fn check_graph<G: Pairwise + ?Sized>(graph: &G, k: usize) -> Result<()> {
    let s = graph.similarities();
    if s.len() != k {
        return Err(Error::dim("crf", k, s.len()));
    }
    let m = graph.edge_list().len();
    for ch in s {
        if ch.len() != m {
            return Err(Error::dim("crf", m, ch.len()));
        }
    }
    let n = graph.node_count();
    for &(i, j) in graph.edge_list() {
        if i == j || i as usize >= n || j as usize >= n {
            return Err(Error::param("crf", format!("invalid edge ({i}, {j}) for {n} nodes")));
        }
    }
    Ok(())
}

/// Build `A`, `D`, `ξ` and factor `ξ`.
pub fn assemble<G: Pairwise + ?Sized>(graph: &G, params: &CrfParams) -> Result<CrfMatrices> {
    if let Some(b) = params.beta.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
        return Err(Error::param("crf", format!("pairwise weight {b} must be finite and >= 0")));
    }
    check_graph(graph, params.beta.len())?;
    let n = graph.node_count();
    if n == 0 {
        return Err(Error::param("crf", "graph has no nodes"));
    }
    let edges = graph.edge_list().to_vec();
    let sims = graph.similarities();
    let edge_weight: Vec<f64> = (0..edges.len())
        .map(|e| params.beta.iter().zip(sims).map(|(b, s)| b * s[e]).sum())
        .collect();
    let mut affinity = vec![0.0; n * n];
    for (&(i, j), &w) in edges.iter().zip(&edge_weight) {
        let (i, j) = (i as usize, j as usize);
        affinity[i * n + j] += w;
        affinity[j * n + i] += w;
    }
    let degree: Vec<f64> = (0..n).map(|i| affinity[i * n..(i + 1) * n].iter().sum()).collect();
    let mut xi: Vec<f64> = affinity.iter().map(|a| -a).collect();
    for i in 0..n {
        xi[i * n + i] = 1.0 + degree[i];
    }
    let chol = Cholesky::factor(&xi, n)?;
    Ok(CrfMatrices {
        n,
        affinity,
        degree,
        xi,
        chol,
        edges,
        edge_weight,
    })
}

impl CrfMatrices {
    /// `yᵀ L y = Σ_edges A_ij (y_i - y_j)²`.
    pub fn laplacian_form(&self, y: &[f64]) -> f64 {
        self.edges
            .iter()
            .zip(&self.edge_weight)
            .map(|(&(i, j), w)| {
                let d = y[i as usize] - y[j as usize];
                w * d * d
            })
            .sum()
    }

    /// `ξ v`.
    pub fn xi_mul(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| self.xi[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn log_det_xi(&self) -> f64 {
        self.chol.log_det()
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::dim("crf", self.n, v.len()));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Energy in matrix form, `2hᵀy - yᵀξy - hᵀh`.
pub fn energy(y: &[f64], h: &[f64], m: &CrfMatrices) -> Result<f64> {
    m.check(y)?;
    m.check(h)?;
    let xy = m.xi_mul(y);
    Ok(2.0 * dot(h, y) - dot(y, &xy) - dot(h, h))
}

/// Energy as the sum of unary and pairwise potentials. The pairwise sum runs
/// over ordered neighbour pairs with the factor ½, i.e. once per undirected edge.
pub fn energy_elementwise<G: Pairwise + ?Sized>(y: &[f64], h: &[f64], graph: &G, params: &CrfParams) -> Result<f64> {
    let n = graph.node_count();
    if y.len() != n {
        return Err(Error::dim("crf", n, y.len()));
    }
    if h.len() != n {
        return Err(Error::dim("crf", n, h.len()));
    }
    check_graph(graph, params.beta.len())?;
    let unary: f64 = y.iter().zip(h).map(|(a, b)| -(a - b) * (a - b)).sum();
    let mut pairwise = 0.0;
    for (e, &(i, j)) in graph.edge_list().iter().enumerate() {
        let (yi, yj) = (y[i as usize], y[j as usize]);
        for (b, s) in params.beta.iter().zip(graph.similarities()) {
            // (i, j) and (j, i)
            pairwise += 2.0 * (-0.5 * b * s[e] * (yi - yj) * (yi - yj));
        }
    }
    Ok(unary + pairwise)
}

/// MAP estimate `ξ⁻¹h`.
pub fn predict(h: &[f64], m: &CrfMatrices) -> Result<Vec<f64>> {
    m.check(h)?;
    Ok(m.chol.solve(h))
}

/// Exact negative log-likelihood of `y`.
pub fn nll(y: &[f64], h: &[f64], m: &CrfMatrices) -> Result<f64> {
    m.check(y)?;
    let mu = predict(h, m)?;
    Ok(nll_with_mean(y, &mu, m))
}

fn nll_with_mean(y: &[f64], mu: &[f64], m: &CrfMatrices) -> f64 {
    let r: Vec<f64> = y.iter().zip(mu).map(|(a, b)| a - b).collect();
    let quad = dot(&r, &m.xi_mul(&r));
    quad - 0.5 * m.log_det_xi() + 0.5 * m.n as f64 * LN_PI
}

/// `∂nll/∂h = 2ξ⁻¹h - 2y`.
pub fn grad_h(y: &[f64], h: &[f64], m: &CrfMatrices) -> Result<Vec<f64>> {
    m.check(y)?;
    let mu = predict(h, m)?;
    Ok(mu.iter().zip(y).map(|(a, b)| 2.0 * a - 2.0 * b).collect())
}

fn grad_beta_with_mean<G: Pairwise + ?Sized>(y: &[f64], mu: &[f64], m: &CrfMatrices, graph: &G) -> Vec<f64> {
    let n = m.n;
    let w = m.chol.inverse_factor_columns();
    let sims = graph.similarities();
    let mut grad = vec![0.0; sims.len()];
    for (e, &(i, j)) in graph.edge_list().iter().enumerate() {
        let (i, j) = (i as usize, j as usize);
        let dy = y[i] - y[j];
        let dmu = mu[i] - mu[j];
        let (ci, cj) = (&w[i * n..(i + 1) * n], &w[j * n..(j + 1) * n]);
        let trace_term: f64 = ci.iter().zip(cj).map(|(a, b)| (a - b) * (a - b)).sum();
        let per_edge = dy * dy - dmu * dmu - 0.5 * trace_term;
        for (g, s) in grad.iter_mut().zip(sims) {
            *g += s[e] * per_edge;
        }
    }
    grad
}

/// `∂nll/∂β_k` for every channel.
pub fn grad_beta<G: Pairwise + ?Sized>(y: &[f64], h: &[f64], m: &CrfMatrices, graph: &G) -> Result<Vec<f64>> {
    m.check(y)?;
    if graph.node_count() != m.n {
        return Err(Error::dim("crf", m.n, graph.node_count()));
    }
    let mu = predict(h, m)?;
    Ok(grad_beta_with_mean(y, &mu, m, graph))
}

/// NLL together with both gradients, sharing one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NllEval {
    pub nll: f64,
    pub grad_h: Vec<f64>,
    pub grad_beta: Vec<f64>,
    pub prediction: Vec<f64>,
}

pub fn evaluate<G: Pairwise + ?Sized>(y: &[f64], h: &[f64], m: &CrfMatrices, graph: &G) -> Result<NllEval> {
    m.check(y)?;
    if graph.node_count() != m.n {
        return Err(Error::dim("crf", m.n, graph.node_count()));
    }
    let mu = predict(h, m)?;
    Ok(NllEval {
        nll: nll_with_mean(y, &mu, m),
        grad_h: mu.iter().zip(y).map(|(a, b)| 2.0 * a - 2.0 * b).collect(),
        grad_beta: grad_beta_with_mean(y, &mu, m, graph),
        prediction: mu,
    })
}

#[cfg(test)]
mod tests;
