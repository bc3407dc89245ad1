use crate::autodiff::kernels;
use crate::rng::{self, Purpose, StreamRng};
use crate::tensor::{Shape, Tensor};

use super::{CodecConfig, CodecError};

/// Multi-resolution channel input, finest level first. Level `k` of an
/// `H x W` source is `L_k x H/2^k x W/2^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidSymbols {
    levels: Vec<Tensor>,
}

impl PyramidSymbols {
    pub fn from_levels(levels: Vec<Tensor>) -> Result<Self, CodecError> {
        if levels.is_empty() {
            return Err(CodecError::Mismatch("pyramid needs at least one level".into()));
        }
        for pair in levels.windows(2) {
            let (fine, coarse) = (pair[0].shape(), pair[1].shape());
            if fine.height != 2 * coarse.height || fine.width != 2 * coarse.width {
                return Err(CodecError::Mismatch(format!(
                    "level {fine} is not twice level {coarse}"
                )));
            }
        }
        Ok(Self { levels })
    }

    /// Splits a flat stream (levels concatenated finest first).
    pub fn from_flat(
        config: &CodecConfig,
        height: usize,
        width: usize,
        flat: &[f64],
    ) -> Result<Self, CodecError> {
        let shapes = config.level_shapes(height, width)?;
        let expected: usize = shapes.iter().map(Shape::len).sum();
        if flat.len() != expected {
            return Err(CodecError::Mismatch(format!(
                "symbol stream has {} reals, configuration needs {expected}",
                flat.len()
            )));
        }
        let mut at = 0;
        let levels = shapes
            .into_iter()
            .map(|s| {
                let t = Tensor::from_vec(s, flat[at..at + s.len()].to_vec());
                at += s.len();
                t
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[Tensor] {
        &self.levels
    }

    pub fn shapes(&self) -> Vec<Shape> {
        self.levels.iter().map(Tensor::shape).collect()
    }

    pub fn flat_len(&self) -> usize {
        self.levels.iter().map(Tensor::len).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for l in &self.levels {
            out.extend_from_slice(l.data());
        }
        out
    }

    /// Average power per complex symbol over all levels.
    pub fn power(&self) -> f64 {
        kernels::complex_power(&self.flatten())
    }

    pub fn matches(&self, config: &CodecConfig, height: usize, width: usize) -> bool {
        config.level_shapes(height, width).is_ok_and(|s| s == self.shapes())
    }
}

/// I.i.d. `N(0, 1)` latents, jointly rescaled to unit average complex power.
pub fn init_latents(
    config: &CodecConfig,
    height: usize,
    width: usize,
    rng: &mut StreamRng,
) -> Result<PyramidSymbols, CodecError> {
    let shapes = config.level_shapes(height, width)?;
    let n: usize = shapes.iter().map(Shape::len).sum();
    let mut flat = rng::gaussian_vec(rng, 1.0, n);
    let scale = kernels::unit_power_scale(&flat);
    flat.iter_mut().for_each(|v| *v *= scale);
    PyramidSymbols::from_flat(config, height, width, &flat)
}

/// Noise-variance-matched random pyramid regenerated from a shared seed.
#[derive(Clone, Debug, PartialEq)]
pub struct CommonRandomness {
    pub seed: u64,
    levels: Vec<Tensor>,
}

impl CommonRandomness {
    /// Entries are `N(0, sigma_w^2)`. All zeros on a noiseless channel.
    pub fn generate(
        seed: u64,
        config: &CodecConfig,
        height: usize,
        width: usize,
        sigma_w_sq: f64,
    ) -> Result<Self, CodecError> {
        let shapes = config.level_shapes(height, width)?;
        let mut rng = rng::stream(seed, Purpose::Common, 0);
        let std = sigma_w_sq.sqrt();
        let levels = shapes
            .into_iter()
            .map(|s| Tensor::from_vec(s, rng::gaussian_vec(&mut rng, std, s.len())))
            .collect::<Result<_, _>>()?;
        Ok(Self { seed, levels })
    }

    pub fn levels(&self) -> &[Tensor] {
        &self.levels
    }

    pub fn expand(&self) -> Tensor {
        expand_common_randomness(self)
    }
}

/// Nearest-neighbour upsamples every level to full resolution and stacks
/// them finest first: `sum_k L_k` channels.
pub fn expand_common_randomness(m: &CommonRandomness) -> Tensor {
    let expanded: Vec<Tensor> =
        m.levels.iter().enumerate().map(|(k, t)| t.upsample_nearest(1 << k)).collect();
    let refs: Vec<&Tensor> = expanded.iter().collect();
    Tensor::concat_channels(&refs).expect("levels share the full resolution after expansion")
}
