//! Per-instance joint optimisation of channel symbols and decoder weights
//! through the simulated channel, receiver-side evaluation, and the greedy
//! configuration search.

mod adam;
mod eval;
mod search;
mod train;

use thiserror::Error;

use crate::autodiff::OpError;
use crate::channel::ChannelError;
use crate::codec::CodecError;
use crate::metrics::MetricError;

pub use adam::{Optimizer, OptimizerKind, BETA1, BETA2, EPSILON, FINAL_LR_FRACTION};
pub use eval::{evaluate_artifact, receive, reconstruct, EvalResult, Reception};
pub use search::{feasible_candidates, greedy_config_search, Probe, SearchOutcome};
pub use train::{
    forward_backward, overfit_instance, Checkpoint, Instance, PassNoise, PassOutput, StepStats,
    TrainConfig, TrainReport, Trainer, CSV_HEADER,
};

/// First realisation index used for reported (as opposed to checkpoint)
/// evaluations, far above anything a training run consumes.
pub const REPORT_EVAL_OFFSET: u64 = 1 << 40;
/// Noise realisations behind reported PSNR figures.
pub const REPORT_EVAL_DRAWS: usize = 16;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0}")]
    Input(String),
    #[error("infeasible budget: {0}")]
    Infeasible(String),
    #[error("training diverged at step {step}")]
    Diverged { step: usize, report: Box<TrainReport> },
    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize, report: Box<TrainReport> },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}
