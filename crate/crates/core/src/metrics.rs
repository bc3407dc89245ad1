//! Image quality and decoder complexity.
//!
//! All metrics take `C x H x W` tensors with values in `[0, 1]`; callers clamp
//! reconstructions first.

use thiserror::Error;

use crate::codec::CodecConfig;
use crate::par;
use crate::tensor::{Shape, Tensor};

/// PSNR reported for a perfect reconstruction (and the ceiling for all others).
pub const PSNR_CAP_DB: f64 = 100.0;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("images differ in shape: {0} vs {1}")]
    Shape(Shape, Shape),
    #[error("empty image")]
    Empty,
    #[error("scales must be in 1..=5, got {0}")]
    Scales(usize),
    #[error("{height}x{width} is too small for {scales}-scale MS-SSIM; each side needs at least {min}")]
    TooSmall { height: usize, width: usize, scales: usize, min: usize },
}

fn check_pair(a: &Tensor, b: &Tensor) -> Result<(), MetricError> {
    if a.shape() != b.shape() {
        return Err(MetricError::Shape(a.shape(), b.shape()));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64, MetricError> {
    check_pair(a, b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// `10 log10(1 / mse)` for unit peak, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64, MetricError> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP_DB)
    }
}

/// Smallest side length a `scales`-scale MS-SSIM accepts.
pub const fn ms_ssim_min_side(scales: usize) -> usize {
    WINDOW << (scales - 1)
}

/// Largest scale count (at most 5) that an `height x width` image supports.
pub fn max_ms_ssim_scales(height: usize, width: usize) -> Option<usize> {
    (1..=5).rev().find(|&s| height.min(width) >= ms_ssim_min_side(s))
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filter, valid region only.
fn filter(plane: &[f64], h: usize, w: usize, win: &[f64; WINDOW]) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h + 1 - WINDOW, w + 1 - WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|k| win[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|k| win[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM and mean contrast-structure term of one plane.
fn ssim_terms(a: &[f64], b: &[f64], h: usize, w: usize, win: &[f64; WINDOW]) -> (f64, f64) {
    let prod = |f: fn(f64, f64) -> f64| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>();
    let (mu_a, ..) = filter(a, h, w, win);
    let (mu_b, ..) = filter(b, h, w, win);
    let (aa, ..) = filter(&prod(|x, _| x * x), h, w, win);
    let (bb, ..) = filter(&prod(|_, y| y * y), h, w, win);
    let (ab, ..) = filter(&prod(|x, y| x * y), h, w, win);
    let n = mu_a.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = aa[i] - ma * ma;
        let var_b = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        let c = (2.0 * cov + C2) / (var_a + var_b + C2);
        let l = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        cs += c;
        ssim += l * c;
    }
    (ssim / n, cs / n)
}

/// 2x2 average pooling; odd trailing rows/columns are dropped.
fn downsample(p: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let i = 2 * y * w + 2 * x;
            out[y * ow + x] = 0.25 * (p[i] + p[i + 1] + p[i + w] + p[i + w + 1]);
        }
    }
    (out, oh, ow)
}

/// Multi-scale SSIM with an 11x11 Gaussian window (sigma 1.5) and the
/// standard five scale weights, renormalised over the first `scales`.
///
/// Computed per channel and averaged. Negative per-scale terms are clamped
/// to zero before exponentiation.
pub fn ms_ssim(a: &Tensor, b: &Tensor, scales: usize) -> Result<f64, MetricError> {
    check_pair(a, b)?;
    if !(1..=5).contains(&scales) {
        return Err(MetricError::Scales(scales));
    }
    let Shape { channels, height, width } = a.shape();
    let min = ms_ssim_min_side(scales);
    if height.min(width) < min {
        return Err(MetricError::TooSmall { height, width, scales, min });
    }
    let total: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let weights: Vec<f64> = MS_SSIM_WEIGHTS[..scales].iter().map(|w| w / total).collect();
    let win = gaussian_window();
    let per_channel = par::map_indexed(channels, |c| {
        let (mut pa, mut pb) = (a.channel(c).to_vec(), b.channel(c).to_vec());
        let (mut h, mut w) = (height, width);
        let mut value = 1.0;
        for (s, &weight) in weights.iter().enumerate() {
            let (ssim, cs) = ssim_terms(&pa, &pb, h, w, &win);
            let term = if s + 1 == scales { ssim } else { cs };
            value *= term.max(0.0).powf(weight);
            if s + 1 < scales {
                let (da, nh, nw) = downsample(&pa, h, w);
                let (db, ..) = downsample(&pb, h, w);
                (pa, pb, h, w) = (da, db, nh, nw);
            }
        }
        value
    });
    Ok(per_channel.iter().sum::<f64>() / channels as f64)
}

/// MS-SSIM at the largest scale count the image supports.
pub fn ms_ssim_auto(a: &Tensor, b: &Tensor) -> Result<f64, MetricError> {
    let s = a.shape();
    let scales = max_ms_ssim_scales(s.height, s.width).ok_or(MetricError::TooSmall {
        height: s.height,
        width: s.width,
        scales: 1,
        min: ms_ssim_min_side(1),
    })?;
    ms_ssim(a, b, scales)
}

/// `-10 log10(1 - v)`, capped at [`PSNR_CAP_DB`].
pub fn ms_ssim_db(v: f64) -> f64 {
    if v >= 1.0 {
        PSNR_CAP_DB
    } else {
        (-10.0 * (1.0 - v).log10()).min(PSNR_CAP_DB)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Complexity {
    pub param_total: usize,
    pub mults_per_pixel: f64,
}

pub fn complexity_report(config: &CodecConfig) -> Complexity {
    Complexity { param_total: config.param_count(), mults_per_pixel: config.mults_per_pixel() }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityReport {
    pub psnr_db: f64,
    pub ms_ssim: f64,
    pub ms_ssim_db: f64,
    pub mults_per_pixel: f64,
    pub param_total: usize,
}

impl QualityReport {
    /// Scores `reconstruction` (clamped here) against `reference`.
    pub fn measure(
        reference: &Tensor,
        reconstruction: &Tensor,
        config: &CodecConfig,
    ) -> Result<Self, MetricError> {
        let rec = reconstruction.clamped_unit();
        let psnr_db = psnr(reference, &rec)?;
        let ms_ssim = ms_ssim_auto(reference, &rec)?;
        let c = complexity_report(config);
        Ok(Self {
            psnr_db,
            ms_ssim,
            ms_ssim_db: ms_ssim_db(ms_ssim),
            mults_per_pixel: c.mults_per_pixel,
            param_total: c.param_total,
        })
    }
}
