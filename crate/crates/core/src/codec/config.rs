use std::ops::Range;

use crate::autodiff::kernels::UP_KERNEL;
use crate::tensor::Shape;

use super::CodecError;

/// Side length of the shared upsampling kernel.
pub const KERNEL_SIZE: usize = UP_KERNEL;

/// `(hidden_dim, kappa_lsm)` pairs explored by the configuration search.
pub const SEARCH_SET: [(usize, usize); 5] = [(12, 25), (18, 17), (24, 12), (30, 9), (36, 7)];

/// Architecture and repetition hyperparameters of one codec instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CodecConfig {
    /// Latent channels per pyramid level, finest first.
    pub level_channels: Vec<usize>,
    pub hidden_dim: usize,
    pub source_channels: usize,
    pub kappa_lsm: usize,
    pub kappa_redu: usize,
}

impl CodecConfig {
    pub fn new(
        level_channels: Vec<usize>,
        hidden_dim: usize,
        source_channels: usize,
        kappa_lsm: usize,
        kappa_redu: usize,
    ) -> Result<Self, CodecError> {
        let config = Self { level_channels, hidden_dim, source_channels, kappa_lsm, kappa_redu };
        config.validate()?;
        Ok(config)
    }

    /// `levels` pyramid levels with one channel each.
    pub fn uniform(
        levels: usize,
        hidden_dim: usize,
        source_channels: usize,
        kappa_lsm: usize,
        kappa_redu: usize,
    ) -> Result<Self, CodecError> {
        Self::new(vec![1; levels], hidden_dim, source_channels, kappa_lsm, kappa_redu)
    }

    /// Seven single-channel levels, `d = 12`, RGB, `kappa_lsm = 25`, `kappa_redu = 1`.
    pub fn reference() -> Self {
        Self::uniform(7, 12, 3, 25, 1).expect("reference configuration is valid")
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let bad = |msg: &str| Err(CodecError::InvalidConfig(msg.to_string()));
        if self.level_channels.is_empty() {
            return bad("at least one pyramid level is required");
        }
        if self.level_channels.contains(&0) {
            return bad("every pyramid level needs at least one channel");
        }
        if self.level_channels.len() > 16 {
            return bad("more than 16 pyramid levels");
        }
        if self.hidden_dim == 0 {
            return bad("hidden dimension must be at least 1");
        }
        if self.source_channels == 0 {
            return bad("source must have at least one channel");
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.level_channels.len()
    }

    /// `sum_k L_k`.
    pub fn total_latent_channels(&self) -> usize {
        self.level_channels.iter().sum()
    }

    /// Spatial dimensions must be multiples of this.
    pub fn alignment(&self) -> usize {
        1 << (self.levels() - 1)
    }

    /// Smallest aligned dimensions covering `height x width`.
    pub fn padded_dims(&self, height: usize, width: usize) -> (usize, usize) {
        let a = self.alignment();
        (height.div_ceil(a) * a, width.div_ceil(a) * a)
    }

    pub fn check_dims(&self, height: usize, width: usize) -> Result<(), CodecError> {
        let a = self.alignment();
        if height == 0 || width == 0 || height % a != 0 || width % a != 0 {
            return Err(CodecError::Divisibility { height, width, factor: a });
        }
        Ok(())
    }

    /// Shapes of the pyramid levels for an aligned `height x width` source.
    pub fn level_shapes(&self, height: usize, width: usize) -> Result<Vec<Shape>, CodecError> {
        self.check_dims(height, width)?;
        Ok(self
            .level_channels
            .iter()
            .enumerate()
            .map(|(k, &lk)| Shape::new(lk, height >> k, width >> k))
            .collect())
    }

    /// Reals in the symbol stream: `sum_k L_k N / 4^(k-1)`.
    pub fn symbol_reals(&self, pixels: usize) -> usize {
        self.level_channels.iter().enumerate().map(|(k, &lk)| lk * (pixels >> (2 * k))).sum()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }

    /// Total decoder parameters.
    pub fn param_count(&self) -> usize {
        self.layout().total()
    }

    /// Multiplications per output pixel of one decode.
    ///
    /// Each transposed-convolution output pixel takes 16 multiplies (an 8x8
    /// kernel at stride 2). The upsampler call producing level `l` carries
    /// the channels of all coarser levels and has `4^-l` as many pixels as
    /// the output. Nearest expansion of the common randomness and the biases
    /// cost nothing.
    pub fn mults_per_pixel(&self) -> f64 {
        let taps = (KERNEL_SIZE * KERNEL_SIZE / 4) as f64;
        let levels = self.levels();
        let redu: f64 = (0..levels.saturating_sub(1))
            .map(|l| {
                let channels: usize = self.level_channels[l + 1..].iter().sum();
                channels as f64 / 4f64.powi(l as i32)
            })
            .sum::<f64>()
            * taps;
        let (d, c) = (self.hidden_dim as f64, self.source_channels as f64);
        let lsm = 2.0 * self.total_latent_channels() as f64 * d + d * d + d * c + 2.0 * 9.0 * c * c;
        redu + lsm
    }

    /// Largest `kappa_redu` such that the total rate stays within `budget`,
    /// or `None` when not even one repetition fits.
    pub fn kappa_redu_for_budget(&self, pixels: usize, budget: f64) -> Option<usize> {
        let layout = self.layout();
        let available = budget * 2.0 * pixels as f64 * self.source_channels as f64
            - self.symbol_reals(pixels) as f64
            - (self.kappa_lsm * layout.lsm_len()) as f64;
        let kappa = (available / layout.redu_len() as f64).floor();
        (kappa >= 1.0).then_some(kappa as usize)
    }

    pub fn with_kappas(&self, kappa_lsm: usize, kappa_redu: usize) -> Self {
        Self { kappa_lsm, kappa_redu, ..self.clone() }
    }

    pub fn with_hidden_dim(&self, hidden_dim: usize) -> Self {
        Self { hidden_dim, ..self.clone() }
    }
}

/// Offsets of every block in the flat parameter vector.
///
/// Order: upsampler kernel, then for each synthesis layer its weights
/// followed by its bias.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub lsm_in: usize,
    pub hidden: usize,
    pub out: usize,
    pub redu: Range<usize>,
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
    pub w3: Range<usize>,
    pub b3: Range<usize>,
    pub conv_a: Range<usize>,
    pub bias_a: Range<usize>,
    pub conv_b: Range<usize>,
    pub bias_b: Range<usize>,
}

impl ParamLayout {
    fn new(config: &CodecConfig) -> Self {
        let lsm_in = 2 * config.total_latent_channels();
        let (d, c) = (config.hidden_dim, config.source_channels);
        let mut at = 0;
        let mut next = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        Self {
            lsm_in,
            hidden: d,
            out: c,
            redu: next(KERNEL_SIZE * KERNEL_SIZE),
            w1: next(lsm_in * d),
            b1: next(d),
            w2: next(d * d),
            b2: next(d),
            w3: next(d * c),
            b3: next(c),
            conv_a: next(9 * c * c),
            bias_a: next(c),
            conv_b: next(9 * c * c),
            bias_b: next(c),
        }
    }

    pub fn total(&self) -> usize {
        self.bias_b.end
    }

    pub fn redu_len(&self) -> usize {
        self.redu.len()
    }

    pub fn lsm_len(&self) -> usize {
        self.total() - self.redu.end
    }

    /// `range` relative to the start of the synthesis group.
    pub fn in_lsm(&self, range: &Range<usize>) -> Range<usize> {
        range.start - self.redu.end..range.end - self.redu.end
    }
}
