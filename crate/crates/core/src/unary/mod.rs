//! Unary regressor `h(γ)`: a stride-1 conv trunk at image resolution,
//! superpixel mean pooling, and a fully connected head producing one value
//! per node.
//!
//! Parameters live in one flat vector so the optimiser, the checkpoint
//! writer and the finite-difference tests all see the same view. Each
//! forward pass returns a [`ForwardCache`] stamped with the model's
//! generation token; running [`UnaryModel::backward`] after the parameters
//! have changed is a contract error rather than a silently wrong gradient.

pub mod layers;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::superpixel::SuperpixelGraph;
use layers::{ConvShape, PoolIndex};

pub use layers::{superpixel_pool, superpixel_pool_backward};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    /// Output channels of each 3×3 conv layer; empty means the pooled
    /// input intensity feeds the head directly.
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    /// Hidden widths of the head; the output layer (width 1) is implicit.
    pub hidden: Vec<usize>,
    /// Append the node centroid (x, y), centred on the image, to the pooled features.
    pub centroid: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            conv_channels: vec![16, 32, 32],
            kernel: 3,
            hidden: vec![64, 64],
            centroid: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpan {
    pub name: String,
    pub weight: std::ops::Range<usize>,
    pub bias: std::ops::Range<usize>,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::param("unary", format!("kernel must be odd and positive, got {}", self.kernel)));
        }
        if self.conv_channels.iter().chain(&self.hidden).any(|&c| c == 0) {
            return Err(Error::param("unary", "layer widths must be positive"));
        }
        Ok(())
    }

    pub fn trunk_channels(&self) -> usize {
        self.conv_channels.last().copied().unwrap_or(1)
    }

    pub fn head_input(&self) -> usize {
        self.trunk_channels() + if self.centroid { 2 } else { 0 }
    }

    fn conv_shape(&self, layer: usize, width: usize, height: usize) -> ConvShape {
        ConvShape {
            cin: if layer == 0 { 1 } else { self.conv_channels[layer - 1] },
            cout: self.conv_channels[layer],
            kernel: self.kernel,
            width,
            height,
        }
    }

    /// `(n_in, n_out)` of each head layer.
    fn head_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut n_in = self.head_input();
        for &w in self.hidden.iter().chain(std::iter::once(&1)) {
            dims.push((n_in, w));
            n_in = w;
        }
        dims
    }

    /// Offsets of every weight and bias block in the flat vector: conv
    /// layers first, then the head.
    pub fn layout(&self) -> Vec<LayerSpan> {
        let mut spans = Vec::new();
        let mut off = 0;
        let mut push = |name: String, w: usize, b: usize| {
            spans.push(LayerSpan {
                name,
                weight: off..off + w,
                bias: off + w..off + w + b,
            });
            off += w + b;
        };
        let mut cin = 1;
        for (l, &c) in self.conv_channels.iter().enumerate() {
            push(format!("conv{}", l + 1), c * cin * self.kernel * self.kernel, c);
            cin = c;
        }
        for (l, (n_in, n_out)) in self.head_dims().into_iter().enumerate() {
            push(format!("fc{}", l + 1), n_in * n_out, n_out);
        }
        spans
    }

    pub fn param_count(&self) -> usize {
        self.layout().last().map_or(0, |s| s.bias.end)
    }

    /// Fan-in of each layer, aligned with [`Self::layout`].
    fn fan_in(&self) -> Vec<usize> {
        let mut fans = Vec::new();
        let mut cin = 1;
        for &c in &self.conv_channels {
            fans.push(cin * self.kernel * self.kernel);
            cin = c;
        }
        fans.extend(self.head_dims().into_iter().map(|(n_in, _)| n_in));
        fans
    }
}

/// Affine normalisation applied to raw intensities before the trunk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: f64,
    pub std: f64,
}

impl Default for InputNorm {
    fn default() -> Self {
        InputNorm { mean: 0.0, std: 1.0 }
    }
}

impl InputNorm {
    /// Mean and standard deviation over all pixels of all images.
    pub fn fit<'a>(images: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for img in images {
            for &v in img {
                n += 1;
                sum += v;
                sq += v * v;
            }
        }
        if n == 0 {
            return InputNorm::default();
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        let std = if var > 1e-12 { var.sqrt() } else { 1.0 };
        InputNorm { mean, std }
    }
}

static NEXT_TOKEN: AtomicU64 = AtomicU64::new(1);

fn fresh_token() -> u64 {
    NEXT_TOKEN.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug)]
pub struct UnaryModel {
    arch: Architecture,
    params: Vec<f64>,
    norm: InputNorm,
    token: u64,
}

impl Clone for UnaryModel {
    fn clone(&self) -> Self {
        UnaryModel {
            arch: self.arch.clone(),
            params: self.params.clone(),
            norm: self.norm,
            token: fresh_token(),
        }
    }
}

impl PartialEq for UnaryModel {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.norm == other.norm && self.params == other.params
    }
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    token: u64,
    width: usize,
    height: usize,
    /// Normalised input followed by each conv layer's activated output.
    maps: Vec<Vec<f64>>,
    /// Input to each head layer, `[g][n_in]`.
    head_inputs: Vec<Vec<f64>>,
    index: PoolIndex,
}

impl ForwardCache {
    pub fn nodes(&self) -> usize {
        self.index.nodes()
    }
}

impl UnaryModel {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let n = arch.param_count();
        Ok(UnaryModel {
            arch,
            params: vec![0.0; n],
            norm: InputNorm::default(),
            token: fresh_token(),
        })
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (span, fan) in model.arch.layout().into_iter().zip(model.arch.fan_in()) {
            let dist = Normal::new(0.0, (2.0 / fan as f64).sqrt()).expect("positive std");
            for w in &mut model.params[span.weight] {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(model)
    }

    pub fn from_parts(arch: Architecture, params: Vec<f64>, norm: InputNorm) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::dim("unary", arch.param_count(), params.len()));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::param("unary", format!("parameter {i} is not finite")));
        }
        if !(norm.std > 0.0 && norm.std.is_finite() && norm.mean.is_finite()) {
            return Err(Error::param("unary", "input normalisation must be finite with std > 0"));
        }
        Ok(UnaryModel {
            arch,
            params,
            norm,
            token: fresh_token(),
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn norm(&self) -> InputNorm {
        self.norm
    }

    pub fn set_norm(&mut self, norm: InputNorm) {
        self.norm = norm;
        self.token = fresh_token();
    }

    /// Mutate the parameters in place; invalidates outstanding caches.
    pub fn update_params(&mut self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.params);
        self.token = fresh_token();
    }

    /// Name of the layer block owning flat parameter `i`.
    pub fn block_of(&self, i: usize) -> String {
        for span in self.arch.layout() {
            if span.weight.contains(&i) {
                return format!("{}.weight", span.name);
            }
            if span.bias.contains(&i) {
                return format!("{}.bias", span.name);
            }
        }
        format!("param[{i}]")
    }

    pub fn forward(&self, intensity: &[f64], graph: &SuperpixelGraph) -> Result<(Vec<f64>, ForwardCache)> {
        let (w, h) = (graph.width, graph.height);
        let hw = w * h;
        if intensity.len() != hw {
            return Err(Error::dim("unary", hw, intensity.len()));
        }
        if graph.assignment.len() != hw {
            return Err(Error::dim("unary", hw, graph.assignment.len()));
        }
        let index = PoolIndex::new(&graph.assignment, graph.g())?;
        let g = index.nodes();
        let layout = self.arch.layout();

        let input: Vec<f64> = intensity.iter().map(|v| (v - self.norm.mean) / self.norm.std).collect();
        let mut maps = vec![input];
        for l in 0..self.arch.conv_channels.len() {
            let s = self.arch.conv_shape(l, w, h);
            let span = &layout[l];
            let mut out = layers::conv_forward(
                maps.last().expect("input map"),
                &self.params[span.weight.clone()],
                &self.params[span.bias.clone()],
                &s,
            );
            layers::relu_in_place(&mut out);
            maps.push(out);
        }

        let c = self.arch.trunk_channels();
        let pooled = superpixel_pool(maps.last().expect("trunk output"), c, &index);
        let n0 = self.arch.head_input();
        let mut z = if self.arch.centroid {
            let mut z = Vec::with_capacity(g * n0);
            for (i, row) in pooled.chunks_exact(c).enumerate() {
                z.extend_from_slice(row);
                let [cx, cy] = graph.nodes[i].centroid;
                z.push(cx - 0.5);
                z.push(cy - 0.5);
            }
            z
        } else {
            pooled
        };

        let dims = self.arch.head_dims();
        let mut head_inputs = Vec::with_capacity(dims.len());
        for (l, &(n_in, n_out)) in dims.iter().enumerate() {
            let span = &layout[self.arch.conv_channels.len() + l];
            let mut out = layers::linear_forward(
                &z,
                &self.params[span.weight.clone()],
                &self.params[span.bias.clone()],
                g,
                n_in,
                n_out,
            );
            if l + 1 < dims.len() {
                layers::relu_in_place(&mut out);
            }
            head_inputs.push(std::mem::replace(&mut z, out));
        }

        let cache = ForwardCache {
            token: self.token,
            width: w,
            height: h,
            maps,
            head_inputs,
            index,
        };
        Ok((z, cache))
    }

    /// Forward pass without keeping activations around.
    pub fn predict(&self, intensity: &[f64], graph: &SuperpixelGraph) -> Result<Vec<f64>> {
        self.forward(intensity, graph).map(|(h, _)| h)
    }

    /// Gradient of `Σ_i grad_h[i] · h_i` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, grad_h: &[f64]) -> Result<Vec<f64>> {
        if cache.token != self.token {
            return Err(Error::Contract(
                "unary backward called with a cache from a different parameter state".into(),
            ));
        }
        let g = cache.nodes();
        if grad_h.len() != g {
            return Err(Error::dim("unary", g, grad_h.len()));
        }
        let layout = self.arch.layout();
        let n_conv = self.arch.conv_channels.len();
        let mut grad = vec![0.0; self.params.len()];

        let dims = self.arch.head_dims();
        let mut dz = grad_h.to_vec();
        for l in (0..dims.len()).rev() {
            let (n_in, n_out) = dims[l];
            let span = &layout[n_conv + l];
            let x = &cache.head_inputs[l];
            let (gw, gb) = split_blocks(&mut grad, span);
            let mut dx = layers::linear_backward(
                x,
                &self.params[span.weight.clone()],
                &dz,
                g,
                n_in,
                n_out,
                gw,
                gb,
                l > 0 || n_conv > 0,
            );
            if l > 0 {
                if let Some(dx) = dx.as_mut() {
                    layers::relu_backward(x, dx);
                }
            }
            match dx {
                Some(dx) => dz = dx,
                None => return Ok(grad),
            }
        }

        let c = self.arch.trunk_channels();
        let n0 = self.arch.head_input();
        let dpooled: Vec<f64> = if self.arch.centroid {
            dz.chunks_exact(n0).flat_map(|row| row[..c].iter().copied()).collect()
        } else {
            dz
        };
        let mut dmap = superpixel_pool_backward(&dpooled, c, &cache.index);
        for l in (0..n_conv).rev() {
            layers::relu_backward(&cache.maps[l + 1], &mut dmap);
            let s = self.arch.conv_shape(l, cache.width, cache.height);
            let span = &layout[l];
            let (gw, gb) = split_blocks(&mut grad, span);
            match layers::conv_backward(&cache.maps[l], &self.params[span.weight.clone()], &dmap, &s, gw, gb, l > 0) {
                Some(d) => dmap = d,
                None => break,
            }
        }
        Ok(grad)
    }
}

fn split_blocks<'a>(grad: &'a mut [f64], span: &LayerSpan) -> (&'a mut [f64], &'a mut [f64]) {
    let block = &mut grad[span.weight.start..span.bias.end];
    block.split_at_mut(span.weight.len())
}
