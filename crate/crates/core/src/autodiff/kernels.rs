//! Forward and backward numeric kernels over flat channel-major buffers.
//!
//! Output planes (or weight entries) are independent tasks; each task sums
//! in a fixed order, so parallel and sequential runs agree bit for bit.

use crate::par;
use crate::tensor::Shape;

/// Taps per side of the upsampling kernel.
pub const UP_KERNEL: usize = 8;
pub const UP_STRIDE: usize = 2;
pub const UP_PADDING: usize = 3;

/// Output coordinate hit by input coordinate `i` through tap `k`, if in range.
#[inline]
fn up_target(i: usize, k: usize, out_len: usize) -> Option<usize> {
    let o = (i * UP_STRIDE + k).checked_sub(UP_PADDING)?;
    (o < out_len).then_some(o)
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// depthwise transposed convolution, stride 2, padding 3, shared 8x8 kernel

pub fn conv_transpose_forward(input: &[f64], shape: Shape, kernel: &[f64]) -> Vec<f64> {
    let (h, w) = (shape.height, shape.width);
    let (oh, ow) = (h * UP_STRIDE, w * UP_STRIDE);
    let mut out = vec![0.0; shape.channels * oh * ow];
    par::for_each_chunk_mut(&mut out, oh * ow, |c, plane| {
        let src = &input[c * h * w..(c + 1) * h * w];
        for iy in 0..h {
            for ix in 0..w {
                let v = src[iy * w + ix];
                for ky in 0..UP_KERNEL {
                    let Some(oy) = up_target(iy, ky, oh) else { continue };
                    let row = &mut plane[oy * ow..(oy + 1) * ow];
                    let taps = &kernel[ky * UP_KERNEL..(ky + 1) * UP_KERNEL];
                    for (kx, &k) in taps.iter().enumerate() {
                        if let Some(ox) = up_target(ix, kx, ow) {
                            row[ox] += v * k;
                        }
                    }
                }
            }
        }
    });
    out
}

pub fn conv_transpose_grad_input(grad_out: &[f64], shape: Shape, kernel: &[f64]) -> Vec<f64> {
    let (h, w) = (shape.height, shape.width);
    let (oh, ow) = (h * UP_STRIDE, w * UP_STRIDE);
    let mut grad = vec![0.0; shape.len()];
    par::for_each_chunk_mut(&mut grad, h * w, |c, plane| {
        let g = &grad_out[c * oh * ow..(c + 1) * oh * ow];
        for iy in 0..h {
            for ix in 0..w {
                let mut acc = 0.0;
                for ky in 0..UP_KERNEL {
                    let Some(oy) = up_target(iy, ky, oh) else { continue };
                    for kx in 0..UP_KERNEL {
                        if let Some(ox) = up_target(ix, kx, ow) {
                            acc += kernel[ky * UP_KERNEL + kx] * g[oy * ow + ox];
                        }
                    }
                }
                plane[iy * w + ix] = acc;
            }
        }
    });
    grad
}

pub fn conv_transpose_grad_kernel(input: &[f64], shape: Shape, grad_out: &[f64]) -> Vec<f64> {
    let (h, w) = (shape.height, shape.width);
    let (oh, ow) = (h * UP_STRIDE, w * UP_STRIDE);
    par::map_indexed(UP_KERNEL * UP_KERNEL, |tap| {
        let (ky, kx) = (tap / UP_KERNEL, tap % UP_KERNEL);
        let mut acc = 0.0;
        for c in 0..shape.channels {
            let src = &input[c * h * w..(c + 1) * h * w];
            let g = &grad_out[c * oh * ow..(c + 1) * oh * ow];
            for iy in 0..h {
                let Some(oy) = up_target(iy, ky, oh) else { continue };
                for ix in 0..w {
                    if let Some(ox) = up_target(ix, kx, ow) {
                        acc += src[iy * w + ix] * g[oy * ow + ox];
                    }
                }
            }
        }
        acc
    })
}

// ---------------------------------------------------------------------------
// 1x1 convolution; weights are row-major [c_in][c_out]

pub fn conv1x1_forward(input: &[f64], shape: Shape, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let plane = shape.plane();
    let (c_in, c_out) = (shape.channels, bias.len());
    let mut out = vec![0.0; c_out * plane];
    par::for_each_chunk_mut(&mut out, plane, |o, dst| {
        dst.fill(bias[o]);
        for i in 0..c_in {
            axpy(weight[i * c_out + o], &input[i * plane..(i + 1) * plane], dst);
        }
    });
    out
}

pub fn conv1x1_grad_input(grad_out: &[f64], shape: Shape, weight: &[f64], c_out: usize) -> Vec<f64> {
    let plane = shape.plane();
    let mut grad = vec![0.0; shape.len()];
    par::for_each_chunk_mut(&mut grad, plane, |i, dst| {
        for o in 0..c_out {
            axpy(weight[i * c_out + o], &grad_out[o * plane..(o + 1) * plane], dst);
        }
    });
    grad
}

pub fn conv1x1_grad_weight(input: &[f64], shape: Shape, grad_out: &[f64], c_out: usize) -> Vec<f64> {
    let plane = shape.plane();
    par::map_indexed(shape.channels * c_out, |idx| {
        let (i, o) = (idx / c_out, idx % c_out);
        dot(&input[i * plane..(i + 1) * plane], &grad_out[o * plane..(o + 1) * plane])
    })
}

pub fn plane_sums(grad_out: &[f64], plane: usize) -> Vec<f64> {
    grad_out.chunks(plane).map(|p| p.iter().sum()).collect()
}

// ---------------------------------------------------------------------------
// 3x3 convolution, stride 1, zero padding 1; weights are [c_out][c_in][3][3]

/// Valid destination range `lo..hi` for a shift of `k - 1` along an axis of length `n`.
#[inline]
fn shifted_range(k: usize, n: usize) -> (usize, usize) {
    match k {
        0 => (1, n),
        1 => (0, n),
        _ => (0, n.saturating_sub(1)),
    }
}

pub fn conv3x3_forward(input: &[f64], shape: Shape, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let (h, w, plane) = (shape.height, shape.width, shape.plane());
    let (c_in, c_out) = (shape.channels, bias.len());
    let mut out = vec![0.0; c_out * plane];
    par::for_each_chunk_mut(&mut out, plane, |o, dst| {
        dst.fill(bias[o]);
        for i in 0..c_in {
            let src = &input[i * plane..(i + 1) * plane];
            let taps = &weight[(o * c_in + i) * 9..(o * c_in + i + 1) * 9];
            for ky in 0..3 {
                let (y0, y1) = shifted_range(ky, h);
                for kx in 0..3 {
                    let (x0, x1) = shifted_range(kx, w);
                    let k = taps[ky * 3 + kx];
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        axpy(
                            k,
                            &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1],
                            &mut dst[y * w + x0..y * w + x1],
                        );
                    }
                }
            }
        }
    });
    out
}

pub fn conv3x3_grad_input(grad_out: &[f64], shape: Shape, weight: &[f64], c_out: usize) -> Vec<f64> {
    let (h, w, plane) = (shape.height, shape.width, shape.plane());
    let c_in = shape.channels;
    let mut grad = vec![0.0; shape.len()];
    par::for_each_chunk_mut(&mut grad, plane, |i, dst| {
        for o in 0..c_out {
            let g = &grad_out[o * plane..(o + 1) * plane];
            let taps = &weight[(o * c_in + i) * 9..(o * c_in + i + 1) * 9];
            for ky in 0..3 {
                let (y0, y1) = shifted_range(ky, h);
                for kx in 0..3 {
                    let (x0, x1) = shifted_range(kx, w);
                    let k = taps[ky * 3 + kx];
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        axpy(
                            k,
                            &g[y * w + x0..y * w + x1],
                            &mut dst[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1],
                        );
                    }
                }
            }
        }
    });
    grad
}

pub fn conv3x3_grad_weight(input: &[f64], shape: Shape, grad_out: &[f64], c_out: usize) -> Vec<f64> {
    let (h, w, plane) = (shape.height, shape.width, shape.plane());
    let c_in = shape.channels;
    let per_pair = par::map_indexed(c_out * c_in, |idx| {
        let (o, i) = (idx / c_in, idx % c_in);
        let src = &input[i * plane..(i + 1) * plane];
        let g = &grad_out[o * plane..(o + 1) * plane];
        let mut taps = [0.0; 9];
        for ky in 0..3 {
            let (y0, y1) = shifted_range(ky, h);
            for kx in 0..3 {
                let (x0, x1) = shifted_range(kx, w);
                let mut acc = 0.0;
                for y in y0..y1 {
                    let sy = y + ky - 1;
                    acc += dot(
                        &g[y * w + x0..y * w + x1],
                        &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1],
                    );
                }
                taps[ky * 3 + kx] = acc;
            }
        }
        taps
    });
    per_pair.into_iter().flatten().collect()
}

// ---------------------------------------------------------------------------
// scalar-coupled elementwise ops

pub fn sum_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Scale that brings `x` to unit average power per complex symbol
/// (two reals): `sqrt(n / (2 * sum(x^2)))`.
pub fn unit_power_scale(x: &[f64]) -> f64 {
    (x.len() as f64 / (2.0 * sum_sq(x))).sqrt()
}

/// Average power per complex symbol of a real stream: `2 * sum(x^2) / n`.
pub fn complex_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    2.0 * sum_sq(x) / x.len() as f64
}

/// Inverse of [`unit_power_scale`]: `sqrt(2 * mean(x^2))`.
pub fn rms_gain(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (2.0 * sum_sq(x) / x.len() as f64).sqrt()
}
