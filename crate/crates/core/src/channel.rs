//! AWGN channel, power bookkeeping, repetition-coded parameter delivery and
//! bandwidth accounting.
//!
//! Real streams are carried two reals per complex channel use, consecutive
//! pairs forming one symbol. A circularly-symmetric complex Gaussian of
//! variance `sigma_w^2` per symbol is therefore `N(0, sigma_w^2 / 2)` on each
//! real component.

use thiserror::Error;

use crate::autodiff::kernels;
use crate::codec::CodecConfig;
use crate::rng::{fill_gaussian, StreamRng};

pub use crate::autodiff::kernels::complex_power;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("{0} reals cannot be packed into complex symbols (odd length)")]
    OddLength(usize),
    #[error("SNR must be finite or +inf, got {0}")]
    InvalidSnr(f64),
    #[error("repetition factors must be at least 1 (kappa_redu={kappa_redu}, kappa_lsm={kappa_lsm})")]
    ZeroRepetition { kappa_redu: usize, kappa_lsm: usize },
    #[error("group gains must be positive and finite, got {0:?}")]
    InvalidGain(GroupGains),
    #[error("parameter vector is empty")]
    EmptyParams,
    #[error("parameter group `{0}` is all zero and cannot be power-normalised")]
    DegenerateGroup(&'static str),
    #[error("expected {expected} values, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("{pixels} source pixels are not divisible by 4^{exponent}; pad the source first")]
    Divisibility { pixels: usize, exponent: usize },
}

/// `sigma_w^2 = 10^(-snr/10)`; `+inf` dB maps to a noiseless channel.
pub fn snr_to_sigma(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// `10 log10(1 / sigma_w^2)`.
pub fn sigma_to_snr(sigma_w_sq: f64) -> f64 {
    10.0 * (1.0 / sigma_w_sq).log10()
}

/// Complex channel uses needed for `num_reals` reals (odd counts pad one real).
pub const fn channel_uses(num_reals: usize) -> usize {
    num_reals.div_ceil(2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelSpec {
    pub snr_db: f64,
    pub sigma_w_sq: f64,
    pub seed: u64,
}

impl ChannelSpec {
    pub fn new(snr_db: f64, seed: u64) -> Result<Self, ChannelError> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(ChannelError::InvalidSnr(snr_db));
        }
        Ok(Self { snr_db, sigma_w_sq: snr_to_sigma(snr_db), seed })
    }

    /// The `+inf` dB sentinel: no noise is ever drawn.
    pub fn noiseless(seed: u64) -> Self {
        Self { snr_db: f64::INFINITY, sigma_w_sq: 0.0, seed }
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_w_sq == 0.0
    }

    /// Standard deviation of the noise on each real component.
    pub fn real_std(&self) -> f64 {
        (self.sigma_w_sq / 2.0).sqrt()
    }
}

/// Adds AWGN to an even-length real stream.
pub fn awgn_transmit(
    reals: &[f64],
    spec: &ChannelSpec,
    rng: &mut StreamRng,
) -> Result<Vec<f64>, ChannelError> {
    if reals.len() % 2 != 0 {
        return Err(ChannelError::OddLength(reals.len()));
    }
    let mut out = reals.to_vec();
    if spec.is_noiseless() {
        return Ok(out);
    }
    let mut noise = vec![0.0; reals.len()];
    fill_gaussian(rng, spec.real_std(), &mut noise);
    out.iter_mut().zip(&noise).for_each(|(y, w)| *y += w);
    Ok(out)
}

/// [`awgn_transmit`] for any length: odd streams get one zero real appended
/// before transmission, and it is dropped on receive.
pub fn transmit_reals(reals: &[f64], spec: &ChannelSpec, rng: &mut StreamRng) -> Vec<f64> {
    let mut padded = reals.to_vec();
    if padded.len() % 2 == 1 {
        padded.push(0.0);
    }
    let mut out = awgn_transmit(&padded, spec, rng).expect("padded stream is even");
    out.truncate(reals.len());
    out
}

// ---------------------------------------------------------------------------
// bandwidth accounting

/// Channel uses per source scalar, split into symbol and parameter streams.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateBudget {
    pub r_x: f64,
    pub r_theta: f64,
    pub r_total: f64,
    pub channel_uses_x: usize,
    pub channel_uses_theta: usize,
}

/// Bandwidth ratios of `config` for a source of `pixels` pixels per channel.
///
/// `r_x = sum_k L_k / (2 C 4^(k-1))` and
/// `r_theta = (kappa_lsm |lsm| + kappa_redu |redu|) / (2 N C)`.
/// The parameter stream (both groups back to back) is padded once to a
/// whole number of complex symbols.
pub fn rate_budget(config: &CodecConfig, pixels: usize) -> Result<RateBudget, ChannelError> {
    let exponent = config.levels() - 1;
    let coarsest = 1usize << (2 * exponent);
    if pixels == 0 || pixels % coarsest != 0 {
        return Err(ChannelError::Divisibility { pixels, exponent });
    }
    let c = config.source_channels as f64;
    let r_x: f64 = config
        .level_channels
        .iter()
        .enumerate()
        .map(|(k, &lk)| lk as f64 / (2.0 * c * 4f64.powi(k as i32)))
        .sum();
    let layout = config.layout();
    let theta_reals = config.kappa_lsm * layout.lsm_len() + config.kappa_redu * layout.redu_len();
    let r_theta = theta_reals as f64 / (2.0 * pixels as f64 * c);
    Ok(RateBudget {
        r_x,
        r_theta,
        r_total: r_x + r_theta,
        channel_uses_x: channel_uses(config.symbol_reals(pixels)),
        channel_uses_theta: channel_uses(theta_reals),
    })
}

// ---------------------------------------------------------------------------
// repetition coding

/// Power-normalisation gains of the two parameter groups.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupGains {
    pub redu: f64,
    pub lsm: f64,
}

/// How decoder parameters are repeated on the channel.
///
/// The flat parameter vector is split into a leading upsampler group of
/// `redu_len` values and a trailing synthesis group of `lsm_len` values.
/// Each group is divided by its gain `g = sqrt(2 mean(theta^2))`, so the
/// repeated stream has unit average complex power, and multiplied back on
/// receive. The gains travel as side information.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepetitionPlan {
    pub kappa_redu: usize,
    pub kappa_lsm: usize,
    pub redu_len: usize,
    pub lsm_len: usize,
    pub gains: GroupGains,
}

impl RepetitionPlan {
    pub fn new(
        kappa_redu: usize,
        kappa_lsm: usize,
        redu_len: usize,
        lsm_len: usize,
        gains: GroupGains,
    ) -> Result<Self, ChannelError> {
        if kappa_redu == 0 || kappa_lsm == 0 {
            return Err(ChannelError::ZeroRepetition { kappa_redu, kappa_lsm });
        }
        let ok = |g: f64| g.is_finite() && g > 0.0;
        if !ok(gains.redu) || !ok(gains.lsm) {
            return Err(ChannelError::InvalidGain(gains));
        }
        if redu_len + lsm_len == 0 {
            return Err(ChannelError::EmptyParams);
        }
        Ok(Self { kappa_redu, kappa_lsm, redu_len, lsm_len, gains })
    }

    /// Plan whose gains are measured from `params` (first `redu_len` values
    /// form the upsampler group).
    pub fn fit(
        kappa_redu: usize,
        kappa_lsm: usize,
        redu_len: usize,
        params: &[f64],
    ) -> Result<Self, ChannelError> {
        if params.is_empty() {
            return Err(ChannelError::EmptyParams);
        }
        if redu_len > params.len() {
            return Err(ChannelError::Length { expected: redu_len, actual: params.len() });
        }
        let (redu, lsm) = params.split_at(redu_len);
        let gain = |group: &[f64], name| {
            if group.is_empty() {
                Ok(1.0)
            } else {
                let g = kernels::rms_gain(group);
                if g > 0.0 { Ok(g) } else { Err(ChannelError::DegenerateGroup(name)) }
            }
        };
        let gains = GroupGains { redu: gain(redu, "redu")?, lsm: gain(lsm, "lsm")? };
        Self::new(kappa_redu, kappa_lsm, redu_len, lsm.len(), gains)
    }

    pub fn param_len(&self) -> usize {
        self.redu_len + self.lsm_len
    }

    /// Reals on the channel after repetition.
    pub fn stream_len(&self) -> usize {
        self.kappa_redu * self.redu_len + self.kappa_lsm * self.lsm_len
    }

    fn groups(&self) -> [(usize, usize, f64); 2] {
        [
            (self.redu_len, self.kappa_redu, self.gains.redu),
            (self.lsm_len, self.kappa_lsm, self.gains.lsm),
        ]
    }
}

/// Normalises each group by its gain and repeats every value `kappa` times
/// in a row: upsampler group first, then synthesis group.
pub fn repetition_encode(params: &[f64], plan: &RepetitionPlan) -> Result<Vec<f64>, ChannelError> {
    if params.is_empty() {
        return Err(ChannelError::EmptyParams);
    }
    if params.len() != plan.param_len() {
        return Err(ChannelError::Length { expected: plan.param_len(), actual: params.len() });
    }
    let mut out = Vec::with_capacity(plan.stream_len());
    let mut rest = params;
    for (len, kappa, gain) in plan.groups() {
        let (group, tail) = rest.split_at(len);
        rest = tail;
        for &v in group {
            out.extend(std::iter::repeat(v / gain).take(kappa));
        }
    }
    Ok(out)
}

/// Averages each run of `kappa` received copies and undoes the group gain.
pub fn repetition_decode(noisy: &[f64], plan: &RepetitionPlan) -> Result<Vec<f64>, ChannelError> {
    if noisy.len() != plan.stream_len() {
        return Err(ChannelError::Length { expected: plan.stream_len(), actual: noisy.len() });
    }
    let mut out = Vec::with_capacity(plan.param_len());
    let mut rest = noisy;
    for (len, kappa, gain) in plan.groups() {
        let (group, tail) = rest.split_at(len * kappa);
        rest = tail;
        for copies in group.chunks_exact(kappa) {
            let mean = copies.iter().sum::<f64>() / kappa as f64;
            out.push(mean * gain);
        }
    }
    Ok(out)
}
