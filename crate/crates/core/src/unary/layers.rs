//! Layer kernels with hand-written adjoints. Tensors are flat `f64` slices;
//! feature maps are channel-major `[c][y * w + x]`, row batches are
//! `[row][feature]`.

use crate::error::{Error, Result};
use crate::superpixel::UNASSIGNED;

/// `c = alpha * a * b + beta * c` for strided row/column layouts.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs + 1;
    assert!(c.len() >= span(m, n, rsc, csc));
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * rsc + j * csc] *= beta;
            }
        }
        return;
    }
    assert!(a.len() >= span(m, k, rsa, csa));
    assert!(b.len() >= span(k, n, rsb, csb));
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Geometry of a square-kernel, stride-1, same-padded convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub width: usize,
    pub height: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel * self.kernel
    }

    fn patch(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    fn pixels(&self) -> usize {
        self.width * self.height
    }
}

/// Unfold `[cin][hw]` into `[cin * k * k][hw]` patch columns (zero padded).
pub fn im2col(input: &[f64], s: &ConvShape, cols: &mut [f64]) {
    let (w, h, k) = (s.width, s.height, s.kernel);
    let pad = (k / 2) as isize;
    let hw = s.pixels();
    for ci in 0..s.cin {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let out = &mut cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let dst = &mut out[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, d) in dst.iter_mut().enumerate() {
                        let sx = x as isize + dx;
                        *d = if sx < 0 || sx >= w as isize { 0.0 } else { src[sx as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulate patch columns back onto `[cin][hw]`.
pub fn col2im(cols: &[f64], s: &ConvShape, out: &mut [f64]) {
    let (w, h, k) = (s.width, s.height, s.kernel);
    let pad = (k / 2) as isize;
    let hw = s.pixels();
    for ci in 0..s.cin {
        let plane = &mut out[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for x in 0..w {
                        let sx = x as isize + dx;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += src[y * w + x];
                        }
                    }
                }
            }
        }
    }
}

/// Convolution without activation; returns `[cout][hw]`.
pub fn conv_forward(input: &[f64], weight: &[f64], bias: &[f64], s: &ConvShape) -> Vec<f64> {
    let hw = s.pixels();
    let p = s.patch();
    let mut cols = vec![0.0; p * hw];
    im2col(input, s, &mut cols);
    let mut out = vec![0.0; s.cout * hw];
    for (co, row) in out.chunks_exact_mut(hw).enumerate() {
        row.fill(bias[co]);
    }
    gemm(s.cout, p, hw, 1.0, weight, (p, 1), &cols, (hw, 1), 1.0, &mut out, (hw, 1));
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `want_input` is set.
pub fn conv_backward(
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    s: &ConvShape,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let hw = s.pixels();
    let p = s.patch();
    let mut cols = vec![0.0; p * hw];
    im2col(input, s, &mut cols);
    // dW = dOut * cols^T
    gemm(s.cout, hw, p, 1.0, grad_out, (hw, 1), &cols, (1, hw), 1.0, grad_w, (p, 1));
    for (co, row) in grad_out.chunks_exact(hw).enumerate() {
        grad_b[co] += row.iter().sum::<f64>();
    }
    if !want_input {
        return None;
    }
    // dCols = W^T * dOut, reusing the buffer
    gemm(p, s.cout, hw, 1.0, weight, (1, p), grad_out, (hw, 1), 0.0, &mut cols, (hw, 1));
    let mut grad_in = vec![0.0; s.cin * hw];
    col2im(&cols, s, &mut grad_in);
    Some(grad_in)
}

pub fn relu_in_place(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zero the gradient wherever the (post-activation) output was clamped.
pub fn relu_backward(activated: &[f64], grad: &mut [f64]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// `y = x W^T + b` for `rows` inputs; `w` is `[out][in]`.
pub fn linear_forward(x: &[f64], w: &[f64], b: &[f64], rows: usize, n_in: usize, n_out: usize) -> Vec<f64> {
    let mut y = vec![0.0; rows * n_out];
    for row in y.chunks_exact_mut(n_out) {
        row.copy_from_slice(b);
    }
    gemm(rows, n_in, n_out, 1.0, x, (n_in, 1), w, (1, n_in), 1.0, &mut y, (n_out, 1));
    y
}

#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    x: &[f64],
    w: &[f64],
    grad_out: &[f64],
    rows: usize,
    n_in: usize,
    n_out: usize,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    gemm(n_out, rows, n_in, 1.0, grad_out, (1, n_out), x, (n_in, 1), 1.0, grad_w, (n_in, 1));
    for row in grad_out.chunks_exact(n_out) {
        for (gb, g) in grad_b.iter_mut().zip(row) {
            *gb += g;
        }
    }
    if !want_input {
        return None;
    }
    let mut grad_in = vec![0.0; rows * n_in];
    gemm(rows, n_out, n_in, 1.0, grad_out, (n_out, 1), w, (n_in, 1), 0.0, &mut grad_in, (n_in, 1));
    Some(grad_in)
}

/// Pixel-to-node membership used by superpixel pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndex {
    pub assignment: Vec<u32>,
    pub counts: Vec<usize>,
}

impl PoolIndex {
    pub fn new(assignment: &[u32], g: usize) -> Result<Self> {
        let mut counts = vec![0usize; g];
        for &a in assignment {
            if a == UNASSIGNED {
                continue;
            }
            match counts.get_mut(a as usize) {
                Some(c) => *c += 1,
                None => return Err(Error::param("unary", format!("pixel assigned to node {a} but graph has {g} nodes"))),
            }
        }
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::param("unary", format!("node {i} has no pixels")));
        }
        Ok(PoolIndex {
            assignment: assignment.to_vec(),
            counts,
        })
    }

    pub fn nodes(&self) -> usize {
        self.counts.len()
    }
}

/// Channel-wise mean over each node's pixels: `[c][hw]` → `[g][c]`.
pub fn superpixel_pool(features: &[f64], channels: usize, index: &PoolIndex) -> Vec<f64> {
    let hw = index.assignment.len();
    let g = index.nodes();
    let mut out = vec![0.0; g * channels];
    for c in 0..channels {
        let plane = &features[c * hw..(c + 1) * hw];
        for (&a, &v) in index.assignment.iter().zip(plane) {
            if a != UNASSIGNED {
                out[a as usize * channels + c] += v;
            }
        }
    }
    for (row, &n) in out.chunks_exact_mut(channels).zip(&index.counts) {
        let inv = 1.0 / n as f64;
        row.iter_mut().for_each(|v| *v *= inv);
    }
    out
}

/// Adjoint of [`superpixel_pool`]: each pixel receives its node's gradient
/// divided by the node's pixel count.
pub fn superpixel_pool_backward(grad: &[f64], channels: usize, index: &PoolIndex) -> Vec<f64> {
    let hw = index.assignment.len();
    let mut out = vec![0.0; channels * hw];
    for c in 0..channels {
        let plane = &mut out[c * hw..(c + 1) * hw];
        for (p, &a) in index.assignment.iter().enumerate() {
            if a != UNASSIGNED {
                plane[p] = grad[a as usize * channels + c] / index.counts[a as usize] as f64;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn naive_conv(input: &[f64], weight: &[f64], bias: &[f64], s: &ConvShape) -> Vec<f64> {
        let (w, h, k) = (s.width as isize, s.height as isize, s.kernel as isize);
        let pad = k / 2;
        let mut out = vec![0.0; s.cout * s.width * s.height];
        for co in 0..s.cout {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias[co];
                    for ci in 0..s.cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let (sy, sx) = (y + ky - pad, x + kx - pad);
                                if sy >= 0 && sy < h && sx >= 0 && sx < w {
                                    let wi = ((co * s.cin + ci) as isize * k + ky) * k + kx;
                                    acc += weight[wi as usize] * input[ci * s.width * s.height + (sy * w + sx) as usize];
                                }
                            }
                        }
                    }
                    out[co * s.width * s.height + (y * w + x) as usize] = acc;
                }
            }
        }
        out
    }

    const SHAPE: ConvShape = ConvShape {
        cin: 2,
        cout: 3,
        kernel: 3,
        width: 7,
        height: 5,
    };

    #[test]
    fn conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = SHAPE;
        let x = rand_vec(&mut rng, s.cin * 35);
        let w = rand_vec(&mut rng, s.weight_len());
        let b = rand_vec(&mut rng, s.cout);
        let fast = conv_forward(&x, &w, &b, &s);
        let slow = naive_conv(&x, &w, &b, &s);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn im2col_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = SHAPE;
        let x = rand_vec(&mut rng, s.cin * 35);
        let c = rand_vec(&mut rng, s.cin * 9 * 35);
        let mut cols = vec![0.0; c.len()];
        im2col(&x, &s, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&c, &s, &mut back);
        assert!((dot(&cols, &c) - dot(&x, &back)).abs() < 1e-10);
    }

    #[test]
    fn conv_adjoint_in_input_and_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = SHAPE;
        let x = rand_vec(&mut rng, s.cin * 35);
        let w = rand_vec(&mut rng, s.weight_len());
        let zero_b = vec![0.0; s.cout];
        let g = rand_vec(&mut rng, s.cout * 35);
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; s.cout];
        let gx = conv_backward(&x, &w, &g, &s, &mut gw, &mut gb, true).unwrap();
        let jx = conv_forward(&x, &w, &zero_b, &s);
        // linear in x: <J x, g> = <x, J^T g>
        assert!((dot(&jx, &g) - dot(&x, &gx)).abs() < 1e-8);
        // linear in w as well
        assert!((dot(&jx, &g) - dot(&w, &gw)).abs() < 1e-8);
        let sum_g: Vec<f64> = g.chunks_exact(35).map(|r| r.iter().sum()).collect();
        assert_eq!(gb, sum_g);
    }

    #[test]
    fn relu_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pre = rand_vec(&mut rng, 50);
        let v = rand_vec(&mut rng, 50);
        let w = rand_vec(&mut rng, 50);
        let mut act = pre.clone();
        relu_in_place(&mut act);
        // Jacobian is the diagonal mask
        let jv: Vec<f64> = v.iter().zip(&act).map(|(v, a)| if *a > 0.0 { *v } else { 0.0 }).collect();
        let mut jtw = w.clone();
        relu_backward(&act, &mut jtw);
        assert!((dot(&jv, &w) - dot(&v, &jtw)).abs() < 1e-12);
        assert!(act.iter().all(|&a| a >= 0.0));
    }

    #[test]
    fn linear_adjoint_and_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (rows, n_in, n_out) = (4, 6, 3);
        let x = rand_vec(&mut rng, rows * n_in);
        let w = rand_vec(&mut rng, n_out * n_in);
        let b = rand_vec(&mut rng, n_out);
        let y = linear_forward(&x, &w, &b, rows, n_in, n_out);
        let expect = x[n_in..2 * n_in].iter().zip(&w[2 * n_in..3 * n_in]).map(|(a, b)| a * b).sum::<f64>() + b[2];
        assert!((y[n_out + 2] - expect).abs() < 1e-14);

        let g = rand_vec(&mut rng, rows * n_out);
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; n_out];
        let gx = linear_backward(&x, &w, &g, rows, n_in, n_out, &mut gw, &mut gb, true).unwrap();
        let jx = linear_forward(&x, &w, &vec![0.0; n_out], rows, n_in, n_out);
        assert!((dot(&jx, &g) - dot(&x, &gx)).abs() < 1e-10);
        assert!((dot(&jx, &g) - dot(&w, &gw)).abs() < 1e-10);
    }

    #[test]
    fn pooling_examples_and_adjoint() {
        let assignment = vec![0, 0, 1, 1, 1, 2, UNASSIGNED, 2];
        let index = PoolIndex::new(&assignment, 3).unwrap();
        assert_eq!(index.counts, vec![2, 3, 2]);

        let constant = vec![0.7; 8 * 2];
        assert!(superpixel_pool(&constant, 2, &index).iter().all(|&v| (v - 0.7).abs() < 1e-15));

        let mut one_hot = vec![0.0; 8];
        one_hot[3] = 1.0;
        assert_eq!(superpixel_pool(&one_hot, 1, &index), vec![0.0, 1.0 / 3.0, 0.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = rand_vec(&mut rng, 8 * 2);
        let g = rand_vec(&mut rng, 3 * 2);
        let px = superpixel_pool(&x, 2, &index);
        let bg = superpixel_pool_backward(&g, 2, &index);
        assert!((dot(&px, &g) - dot(&x, &bg)).abs() < 1e-10);
    }

    #[test]
    fn pooling_rejects_bad_assignment() {
        assert!(PoolIndex::new(&[0, 2], 2).is_err());
        assert!(PoolIndex::new(&[0, 0], 2).is_err());
    }
}
