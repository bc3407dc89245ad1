use crate::channel::{repetition_decode, repetition_encode, transmit_reals, ChannelSpec};
use crate::codec::{decode, CommonRandomness, DecoderParams, PyramidSymbols, TransmissionArtifact};
use crate::metrics;
use crate::par;
use crate::rng::{self, Purpose};
use crate::tensor::Tensor;

use super::TrainError;

/// What a receiver holds after one channel realisation.
#[derive(Clone, Debug, PartialEq)]
pub struct Reception {
    pub symbols: PyramidSymbols,
    pub params: DecoderParams,
    pub common: CommonRandomness,
}

/// Sends an artifact's symbols and repetition-coded parameters through the
/// channel once. Realisation `index` under `seed` is reproducible.
pub fn receive(
    artifact: &TransmissionArtifact,
    seed: u64,
    index: u64,
) -> Result<Reception, TrainError> {
    let spec = ChannelSpec::new(artifact.snr_db, seed)?;
    let config = &artifact.config;
    let (h, w) = (artifact.source.padded_height, artifact.source.padded_width);

    let sent = artifact.symbols.flatten();
    let received = transmit_reals(&sent, &spec, &mut rng::stream(seed, Purpose::EvalSymbols, index));
    let symbols = PyramidSymbols::from_flat(config, h, w, &received)?;

    let plan = artifact.repetition_plan()?;
    let stream = repetition_encode(artifact.params.as_slice(), &plan)?;
    let noisy = transmit_reals(&stream, &spec, &mut rng::stream(seed, Purpose::EvalParams, index));
    let params = DecoderParams::from_flat(config, repetition_decode(&noisy, &plan)?)?;

    let common = CommonRandomness::generate(artifact.common_seed, config, h, w, spec.sigma_w_sq)?;
    Ok(Reception { symbols, params, common })
}

/// Decodes a reception and crops it to the original source size. Unclamped.
pub fn reconstruct(artifact: &TransmissionArtifact, rx: &Reception) -> Result<Tensor, TrainError> {
    let crop = (artifact.source.height, artifact.source.width);
    Ok(decode(&artifact.config, &rx.symbols, &rx.params, &rx.common, crop)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub mean: f64,
    /// Sample standard deviation across draws (0 for a single draw).
    pub std: f64,
    pub psnrs: Vec<f64>,
}

impl EvalResult {
    pub fn from_psnrs(psnrs: Vec<f64>) -> Self {
        let n = psnrs.len() as f64;
        let mean = psnrs.iter().sum::<f64>() / n;
        let std = if psnrs.len() > 1 {
            (psnrs.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std, psnrs }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        self.std / (self.psnrs.len() as f64).sqrt()
    }
}

/// PSNR of `draws` independent receptions (realisations `offset..offset+draws`)
/// against the unpadded `source`, on clamped reconstructions.
pub fn evaluate_artifact(
    artifact: &TransmissionArtifact,
    source: &Tensor,
    draws: usize,
    seed: u64,
    offset: u64,
) -> Result<EvalResult, TrainError> {
    if draws == 0 {
        return Err(TrainError::Input("at least one evaluation draw is required".into()));
    }
    let psnrs = par::map_indexed(draws, |e| -> Result<f64, TrainError> {
        let rx = receive(artifact, seed, offset + e as u64)?;
        let rec = reconstruct(artifact, &rx)?.clamped_unit();
        Ok(metrics::psnr(source, &rec)?)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalResult::from_psnrs(psnrs))
}
