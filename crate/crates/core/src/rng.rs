//! Counter-based random streams.
//!
//! Every random draw in the codec comes from a ChaCha12 stream addressed by
//! `(seed, purpose, index)`. The seed and purpose select the ChaCha key; the
//! index selects the 64-bit stream id. Streams are therefore independent,
//! random-access and replayable: a receiver that knows the seed regenerates
//! any of them without touching the others.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha12Rng;

/// What a stream is used for. The tag is mixed into the key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Latent and parameter initialisation.
    Init,
    /// Channel noise on the symbol stream during training.
    TrainSymbols,
    /// Equivalent parameter noise during training.
    TrainParams,
    /// Channel noise on the symbol stream during evaluation / reception.
    EvalSymbols,
    /// Channel noise on the repeated parameter stream during evaluation / reception.
    EvalParams,
    /// Common randomness shared by transmitter and receiver.
    Common,
}

impl Purpose {
    const fn tag(self) -> u64 {
        match self {
            Purpose::Init => 0x494e_4954,
            Purpose::TrainSymbols => 0x5453_594d,
            Purpose::TrainParams => 0x5450_4152,
            Purpose::EvalSymbols => 0x4553_594d,
            Purpose::EvalParams => 0x4550_4152,
            Purpose::Common => 0x434f_4d4d,
        }
    }
}

/// SplitMix64 finaliser.
pub const fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a tuple of integers into one seed: `h = mix64(h ^ part)` folded
/// left to right from `h = mix64(len)`.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(parts.len() as u64), |h, &p| mix64(h ^ p))
}

/// Opens stream `index` of `purpose` under `seed`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    let mut h = derive_seed(&[seed, purpose.tag()]);
    for word in key.chunks_exact_mut(8) {
        h = mix64(h);
        word.copy_from_slice(&h.to_le_bytes());
    }
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Fills `out` with i.i.d. `N(0, std^2)` draws.
pub fn fill_gaussian(rng: &mut StreamRng, std: f64, out: &mut [f64]) {
    for v in out {
        let z: f64 = StandardNormal.sample(rng);
        *v = std * z;
    }
}

pub fn gaussian_vec(rng: &mut StreamRng, std: f64, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    fill_gaussian(rng, std, &mut v);
    v
}
