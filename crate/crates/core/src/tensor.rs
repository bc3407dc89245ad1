//! Dense channel-major 2-D tensors.

use std::fmt;

use crate::autodiff::OpError;

/// Dimensions of a channel-major tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    /// A flat vector of `len` scalars.
    pub const fn flat(len: usize) -> Self {
        Self::new(1, 1, len)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of elements in one channel plane.
    pub const fn plane(&self) -> usize {
        self.height * self.width
    }

    pub const fn same_spatial(&self, other: &Shape) -> bool {
        self.height == other.height && self.width == other.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Row-major `(channel, row, column)` array of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![0.0; shape.len()] }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self { shape, data: vec![value; shape.len()] }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self, OpError> {
        if data.len() != shape.len() {
            return Err(OpError::Length { op: "tensor", expected: shape.len(), actual: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn flat(data: Vec<f64>) -> Self {
        Self { shape: Shape::flat(data.len()), data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.shape.plane();
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.shape.height + y) * self.shape.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        self.data[(c * self.shape.height + y) * self.shape.width + x] = value;
    }

    /// Same data viewed under a new shape of equal size.
    pub fn reshaped(self, shape: Shape) -> Result<Self, OpError> {
        Self::from_vec(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Elementwise clamp to `[0, 1]`.
    pub fn clamped_unit(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Replicate-pads on the right and bottom up to `height x width`.
    pub fn pad_replicate(&self, height: usize, width: usize) -> Self {
        assert!(height >= self.shape.height && width >= self.shape.width);
        let shape = Shape::new(self.shape.channels, height, width);
        let mut out = Tensor::zeros(shape);
        for c in 0..shape.channels {
            for y in 0..height {
                let sy = y.min(self.shape.height - 1);
                for x in 0..width {
                    let sx = x.min(self.shape.width - 1);
                    out.set(c, y, x, self.get(c, sy, sx));
                }
            }
        }
        out
    }

    /// Top-left `height x width` window.
    pub fn crop(&self, height: usize, width: usize) -> Self {
        assert!(height <= self.shape.height && width <= self.shape.width);
        let shape = Shape::new(self.shape.channels, height, width);
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            let plane = self.channel(c);
            for y in 0..height {
                let row = y * self.shape.width;
                data.extend_from_slice(&plane[row..row + width]);
            }
        }
        Self { shape, data }
    }

    /// Nearest-neighbour upsampling by an integer factor in both dimensions.
    pub fn upsample_nearest(&self, factor: usize) -> Self {
        let shape = Shape::new(
            self.shape.channels,
            self.shape.height * factor,
            self.shape.width * factor,
        );
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            let plane = self.channel(c);
            for y in 0..shape.height {
                let row = &plane[(y / factor) * self.shape.width..][..self.shape.width];
                for x in 0..shape.width {
                    data.push(row[x / factor]);
                }
            }
        }
        Self { shape, data }
    }

    /// Stacks tensors with equal spatial size along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Self, OpError> {
        let first = parts.first().ok_or(OpError::Empty { op: "concat_channels" })?.shape;
        let mut channels = 0;
        for p in parts {
            if !p.shape.same_spatial(&first) {
                return Err(OpError::Shape { op: "concat_channels", left: first, right: p.shape });
            }
            channels += p.shape.channels;
        }
        let mut data = Vec::with_capacity(channels * first.plane());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Self { shape: Shape::new(channels, first.height, first.width), data })
    }
}
