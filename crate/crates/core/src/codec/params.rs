use rand::Rng;

use crate::rng::StreamRng;
use crate::tensor::{Shape, Tensor};

use super::{CodecConfig, CodecError, ParamLayout, KERNEL_SIZE};

/// Decoder parameters as one flat vector in transmission order.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    layout: ParamLayout,
    values: Vec<f64>,
}

/// Separable triangle (bilinear) kernel scaled so that each output phase of
/// a stride-2 transposed convolution sums to one.
pub fn bilinear_kernel() -> Tensor {
    let half = KERNEL_SIZE as f64 / 2.0;
    let center = half - 0.5;
    let taps: Vec<f64> =
        (0..KERNEL_SIZE).map(|i| (1.0 - (i as f64 - center).abs() / half) / 2.0).collect();
    let mut k = Tensor::zeros(Shape::new(1, KERNEL_SIZE, KERNEL_SIZE));
    for (y, ty) in taps.iter().enumerate() {
        for (x, tx) in taps.iter().enumerate() {
            k.set(0, y, x, ty * tx);
        }
    }
    k
}

impl DecoderParams {
    /// Bilinear upsampler, synthesis weights uniform in `+-sqrt(1 / fan_in)`,
    /// zero biases.
    pub fn init(config: &CodecConfig, rng: &mut StreamRng) -> Self {
        let layout = config.layout();
        let mut values = vec![0.0; layout.total()];
        values[layout.redu.clone()].copy_from_slice(bilinear_kernel().data());
        let c = layout.out;
        for (range, fan_in) in [
            (&layout.w1, layout.lsm_in),
            (&layout.w2, layout.hidden),
            (&layout.w3, layout.hidden),
            (&layout.conv_a, 9 * c),
            (&layout.conv_b, 9 * c),
        ] {
            let bound = (1.0 / fan_in as f64).sqrt();
            for v in &mut values[range.clone()] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Self { layout, values }
    }

    pub fn from_flat(config: &CodecConfig, values: Vec<f64>) -> Result<Self, CodecError> {
        let layout = config.layout();
        if values.len() != layout.total() {
            return Err(CodecError::Mismatch(format!(
                "parameter vector has {} values, configuration needs {}",
                values.len(),
                layout.total()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(config: &CodecConfig) -> Self {
        let layout = config.layout();
        Self { values: vec![0.0; layout.total()], layout }
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn redu(&self) -> &[f64] {
        &self.values[self.layout.redu.clone()]
    }

    pub fn lsm(&self) -> &[f64] {
        &self.values[self.layout.redu.end..]
    }

    pub fn redu_kernel(&self) -> Tensor {
        Tensor::from_vec(Shape::new(1, KERNEL_SIZE, KERNEL_SIZE), self.redu().to_vec())
            .expect("layout sizes the kernel")
    }
}
