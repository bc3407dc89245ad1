//! The instance-specific codec: pyramid channel input, recursive upsampler,
//! synthesis head, complexity counts and the on-disk artifact.

mod artifact;
mod config;
mod decoder;
mod params;
mod pyramid;

use thiserror::Error;

use crate::autodiff::OpError;
use crate::channel::ChannelError;

pub use artifact::{
    deserialize_artifact, serialize_artifact, ArtifactError, SourceDims, TransmissionArtifact,
    ARTIFACT_MAGIC, ARTIFACT_VERSION,
};
pub use config::{CodecConfig, ParamLayout, KERNEL_SIZE, SEARCH_SET};
pub use decoder::{
    decode, decoder_graph, level_vars, lsm_forward, lsm_vars, redu_forward, LsmVars,
};
pub use params::{bilinear_kernel, DecoderParams};
pub use pyramid::{expand_common_randomness, init_latents, CommonRandomness, PyramidSymbols};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("invalid codec configuration: {0}")]
    InvalidConfig(String),
    #[error("{height}x{width} source is not divisible by {factor}; pad it first")]
    Divisibility { height: usize, width: usize, factor: usize },
    #[error("inconsistent codec inputs: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}
