//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation in execution order, so node indices
//! are already a topological order. [`Tape::backward`] walks the nodes once
//! in reverse, propagating gradients through each recorded op, and
//! accumulates the result into the persistent gradient of every leaf that
//! requires one. Intermediate gradients live only for the duration of the
//! call.
//!
//! Only the operators the decoder needs are provided.

pub mod kernels;

use thiserror::Error;

use crate::tensor::{Shape, Tensor};
use kernels::UP_KERNEL;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpError {
    #[error("{op}: shape mismatch ({left} vs {right})")]
    Shape { op: &'static str, left: Shape, right: Shape },
    #[error("{op}: expected {expected} elements, got {actual}")]
    Length { op: &'static str, expected: usize, actual: usize },
    #[error("{op}: {reason}")]
    Config { op: &'static str, reason: String },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("{op}: all-zero input has no defined power")]
    Degenerate { op: &'static str },
    #[error("backward needs a scalar loss, got shape {0}")]
    NotScalar(Shape),
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    ConvTranspose { input: Var, kernel: Var },
    Conv1x1 { input: Var, weight: Var, bias: Var },
    Conv3x3 { input: Var, weight: Var, bias: Var },
    Concat { a: Var, b: Var },
    AddNoise { input: Var },
    PowerNormalize { input: Var, scale: f64, sum_sq: f64 },
    RmsScaledNoise { input: Var, noise: Vec<f64>, gain: f64 },
    Relu { input: Var },
    Mse { pred: Var, target: Var },
    View { input: Var, offset: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Accumulated gradient; only populated on leaves.
    grad: Option<Vec<f64>>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Accumulated gradient of a trainable leaf.
    pub fn grad(&self, var: Var) -> Option<&[f64]> {
        self.nodes[var.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = node.grad.as_mut() {
                g.fill(0.0);
            }
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn shape(&self, var: Var) -> Shape {
        self.nodes[var.0].value.shape()
    }

    // -----------------------------------------------------------------------
    // operators

    /// Depthwise transposed convolution: one shared 8x8 kernel, stride 2,
    /// padding 3, no bias. Doubles both spatial dimensions.
    pub fn conv_transpose_depthwise(&mut self, input: Var, kernel: Var) -> Result<Var, OpError> {
        const OP: &str = "conv_transpose_depthwise";
        let (s, k) = (self.shape(input), self.shape(kernel));
        if k != Shape::new(1, UP_KERNEL, UP_KERNEL) {
            return Err(OpError::Config { op: OP, reason: format!("kernel must be 1x8x8, got {k}") });
        }
        if s.is_empty() {
            return Err(OpError::Empty { op: OP });
        }
        let out = kernels::conv_transpose_forward(
            self.value(input).data(),
            s,
            self.value(kernel).data(),
        );
        let shape = Shape::new(s.channels, 2 * s.height, 2 * s.width);
        let value = Tensor::from_vec(shape, out)?;
        let rg = self.any_grad(&[input, kernel]);
        Ok(self.push(value, Op::ConvTranspose { input, kernel }, rg))
    }

    /// Per-pixel linear map. `weight` is `1 x c_in x c_out`, `bias` is `1 x 1 x c_out`.
    pub fn conv1x1(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var, OpError> {
        const OP: &str = "conv1x1";
        let (s, w, b) = (self.shape(input), self.shape(weight), self.shape(bias));
        if w.channels != 1 || w.height != s.channels {
            return Err(OpError::Shape { op: OP, left: s, right: w });
        }
        if b != Shape::flat(w.width) {
            return Err(OpError::Shape { op: OP, left: w, right: b });
        }
        if s.is_empty() {
            return Err(OpError::Empty { op: OP });
        }
        let out = kernels::conv1x1_forward(
            self.value(input).data(),
            s,
            self.value(weight).data(),
            self.value(bias).data(),
        );
        let value = Tensor::from_vec(Shape::new(w.width, s.height, s.width), out)?;
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(value, Op::Conv1x1 { input, weight, bias }, rg))
    }

    /// Same-size 3x3 cross-correlation. `weight` is `c_out x c_in x 9`.
    pub fn conv3x3(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var, OpError> {
        const OP: &str = "conv3x3";
        let (s, w, b) = (self.shape(input), self.shape(weight), self.shape(bias));
        if w.height != s.channels || w.width != 9 {
            return Err(OpError::Shape { op: OP, left: s, right: w });
        }
        if b != Shape::flat(w.channels) {
            return Err(OpError::Shape { op: OP, left: w, right: b });
        }
        if s.is_empty() {
            return Err(OpError::Empty { op: OP });
        }
        let out = kernels::conv3x3_forward(
            self.value(input).data(),
            s,
            self.value(weight).data(),
            self.value(bias).data(),
        );
        let value = Tensor::from_vec(Shape::new(w.channels, s.height, s.width), out)?;
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(value, Op::Conv3x3 { input, weight, bias }, rg))
    }

    /// Channels of `a` followed by channels of `b`.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var, OpError> {
        let value = Tensor::concat_channels(&[self.value(a), self.value(b)])?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Concat { a, b }, rg))
    }

    /// `input + noise`, with the noise held constant in the backward pass.
    pub fn add_noise(&mut self, input: Var, noise: &[f64]) -> Result<Var, OpError> {
        let x = self.value(input);
        if noise.len() != x.len() {
            return Err(OpError::Length { op: "add_noise", expected: x.len(), actual: noise.len() });
        }
        let data = x.data().iter().zip(noise).map(|(a, b)| a + b).collect();
        let value = Tensor::from_vec(x.shape(), data)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, Op::AddNoise { input }, rg))
    }

    /// Rescales all elements jointly so the average power per complex
    /// symbol (pair of reals) is one: `x * sqrt(n / (2 * sum(x^2)))`.
    pub fn power_normalize(&mut self, input: Var) -> Result<Var, OpError> {
        const OP: &str = "power_normalize";
        let x = self.value(input);
        if x.is_empty() {
            return Err(OpError::Empty { op: OP });
        }
        let sum_sq = kernels::sum_sq(x.data());
        if sum_sq == 0.0 {
            return Err(OpError::Degenerate { op: OP });
        }
        let scale = kernels::unit_power_scale(x.data());
        let value = x.map(|v| v * scale);
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, Op::PowerNormalize { input, scale, sum_sq }, rg))
    }

    /// `x + g(x) * noise` with `g(x) = sqrt(2 * mean(x^2))`.
    ///
    /// This is what a receiver recovers when `x` is sent power-normalised by
    /// `g`, corrupted by `noise`, and rescaled by `g`. The gain stays inside
    /// the gradient; the noise does not.
    pub fn add_rms_scaled_noise(&mut self, input: Var, noise: &[f64]) -> Result<Var, OpError> {
        let x = self.value(input);
        if noise.len() != x.len() {
            return Err(OpError::Length {
                op: "add_rms_scaled_noise",
                expected: x.len(),
                actual: noise.len(),
            });
        }
        let gain = kernels::rms_gain(x.data());
        let data = x.data().iter().zip(noise).map(|(a, n)| a + gain * n).collect();
        let value = Tensor::from_vec(x.shape(), data)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, Op::RmsScaledNoise { input, noise: noise.to_vec(), gain }, rg))
    }

    /// Hash of which ReLU inputs are positive. Two evaluations with equal
    /// signatures lie on the same linear piece of every ReLU.
    pub fn relu_signature(&self) -> u64 {
        let mut h = crate::rng::mix64(0x7265_6c75);
        for node in &self.nodes {
            if let Op::Relu { input } = node.op {
                for chunk in self.nodes[input.0].value.data().chunks(64) {
                    let bits = chunk.iter().enumerate().fold(0u64, |b, (i, &v)| b | (u64::from(v > 0.0) << i));
                    h = crate::rng::mix64(h ^ bits);
                }
            }
        }
        h
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let value = self.value(input).map(|v| v.max(0.0));
        let rg = self.any_grad(&[input]);
        self.push(value, Op::Relu { input }, rg)
    }

    /// Mean squared error; a `1 x 1 x 1` scalar.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var, OpError> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(OpError::Shape { op: "mse", left: p.shape(), right: t.shape() });
        }
        if p.is_empty() {
            return Err(OpError::Empty { op: "mse" });
        }
        let sum: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let value = Tensor::flat(vec![sum / p.len() as f64]);
        let rg = self.any_grad(&[pred, target]);
        Ok(self.push(value, Op::Mse { pred, target }, rg))
    }

    /// Contiguous slice of `input` starting at `offset`, reinterpreted as `shape`.
    pub fn view(&mut self, input: Var, offset: usize, shape: Shape) -> Result<Var, OpError> {
        let x = self.value(input);
        let end = offset + shape.len();
        if end > x.len() {
            return Err(OpError::Length { op: "view", expected: end, actual: x.len() });
        }
        let value = Tensor::from_vec(shape, x.data()[offset..end].to_vec())?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, Op::View { input, offset }, rg))
    }

    // -----------------------------------------------------------------------
    // backward

    /// Back-propagates from a scalar `loss` and adds the result to every
    /// trainable leaf's gradient.
    pub fn backward(&mut self, loss: Var) -> Result<(), OpError> {
        let shape = self.shape(loss);
        if shape.len() != 1 {
            return Err(OpError::NotScalar(shape));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(up) = grads[idx].take() else { continue };
            if matches!(self.nodes[idx].op, Op::Leaf) {
                let node = &mut self.nodes[idx];
                if node.requires_grad {
                    match &mut node.grad {
                        Some(g) => g.iter_mut().zip(&up).for_each(|(a, b)| *a += b),
                        slot @ None => *slot = Some(up),
                    }
                }
            } else {
                for (var, g) in self.local_grads(idx, &up) {
                    accumulate(&mut grads, var, g);
                }
            }
        }
        Ok(())
    }

    /// Gradients of node `idx` with respect to each of its inputs that needs one.
    fn local_grads(&self, idx: usize, up: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let needs = |v: &Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::new();
        match self.nodes[idx].op {
            Op::Leaf => {}
            Op::ConvTranspose { input, kernel } => {
                let s = self.shape(input);
                if needs(&input) {
                    let k = self.value(kernel).data();
                    out.push((input, kernels::conv_transpose_grad_input(up, s, k)));
                }
                if needs(&kernel) {
                    let x = self.value(input).data();
                    out.push((kernel, kernels::conv_transpose_grad_kernel(x, s, up)));
                }
            }
            Op::Conv1x1 { input, weight, bias } => {
                let s = self.shape(input);
                let c_out = self.shape(bias).len();
                if needs(&input) {
                    let w = self.value(weight).data();
                    out.push((input, kernels::conv1x1_grad_input(up, s, w, c_out)));
                }
                if needs(&weight) {
                    let x = self.value(input).data();
                    out.push((weight, kernels::conv1x1_grad_weight(x, s, up, c_out)));
                }
                if needs(&bias) {
                    out.push((bias, kernels::plane_sums(up, s.plane())));
                }
            }
            Op::Conv3x3 { input, weight, bias } => {
                let s = self.shape(input);
                let c_out = self.shape(bias).len();
                if needs(&input) {
                    let w = self.value(weight).data();
                    out.push((input, kernels::conv3x3_grad_input(up, s, w, c_out)));
                }
                if needs(&weight) {
                    let x = self.value(input).data();
                    out.push((weight, kernels::conv3x3_grad_weight(x, s, up, c_out)));
                }
                if needs(&bias) {
                    out.push((bias, kernels::plane_sums(up, s.plane())));
                }
            }
            Op::Concat { a, b } => {
                let split = self.value(a).len();
                if needs(&a) {
                    out.push((a, up[..split].to_vec()));
                }
                if needs(&b) {
                    out.push((b, up[split..].to_vec()));
                }
            }
            Op::AddNoise { input } => {
                if needs(&input) {
                    out.push((input, up.to_vec()));
                }
            }
            Op::PowerNormalize { input, scale, sum_sq } => {
                if needs(&input) {
                    // dx_j = s * g_j - (s / Q) * x_j * sum_i(g_i * x_i)
                    let x = self.value(input).data();
                    let gx: f64 = up.iter().zip(x).map(|(g, v)| g * v).sum();
                    let coupling = scale * gx / sum_sq;
                    let g = up.iter().zip(x).map(|(g, v)| scale * g - coupling * v).collect();
                    out.push((input, g));
                }
            }
            Op::RmsScaledNoise { input, ref noise, gain } => {
                if needs(&input) {
                    // dg/dx_j = 2 x_j / (n g)
                    let x = self.value(input).data();
                    let gn: f64 = up.iter().zip(noise).map(|(g, n)| g * n).sum();
                    let coupling =
                        if gain > 0.0 { 2.0 * gn / (x.len() as f64 * gain) } else { 0.0 };
                    let g = up.iter().zip(x).map(|(g, v)| g + coupling * v).collect();
                    out.push((input, g));
                }
            }
            Op::Relu { input } => {
                if needs(&input) {
                    let x = self.value(input).data();
                    let g = up.iter().zip(x).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect();
                    out.push((input, g));
                }
            }
            Op::Mse { pred, target } => {
                let (p, t) = (self.value(pred).data(), self.value(target).data());
                let k = 2.0 * up[0] / p.len() as f64;
                if needs(&pred) {
                    out.push((pred, p.iter().zip(t).map(|(a, b)| k * (a - b)).collect()));
                }
                if needs(&target) {
                    out.push((target, p.iter().zip(t).map(|(a, b)| k * (b - a)).collect()));
                }
            }
            Op::View { input, offset } => {
                if needs(&input) {
                    let mut g = vec![0.0; self.value(input).len()];
                    g[offset..offset + up.len()].copy_from_slice(up);
                    out.push((input, g));
                }
            }
        }
        out
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], var: Var, g: Vec<f64>) {
    match &mut grads[var.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests;
