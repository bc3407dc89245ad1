//! Overfitted joint source-channel coding of a single image.
//!
//! A transmitter optimises a pyramid of latent channel symbols together with
//! a small decoder network for one source, sends the symbols over an AWGN
//! channel and the repetition-coded decoder weights alongside them, and the
//! receiver rebuilds the image from whatever arrives.

pub mod autodiff;
pub mod channel;
pub mod codec;
pub mod par;
pub mod rng;
pub mod tensor;
pub mod metrics;
pub mod pnm;
pub mod optimizer;
