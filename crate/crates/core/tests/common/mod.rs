#![allow(dead_code)]

use std::path::PathBuf;

use ijscc::channel::ChannelSpec;
use ijscc::codec::CodecConfig;
use ijscc::optimizer::{forward_backward, Instance, PassNoise};
use ijscc::pnm;
use ijscc::rng::{self, Purpose};
use ijscc::tensor::{Shape, Tensor};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// The 64x64 natural-image crop used by the desk-scale experiments.
pub fn astronaut() -> Tensor {
    pnm::load_image(fixture("astronaut_64.ppm")).expect("fixture image")
}

/// Smooth-ish random 3-channel image in [0, 1].
pub fn random_image(height: usize, width: usize, seed: u64) -> Tensor {
    let mut r = rng::stream(seed, Purpose::Init, 77);
    let data = rng::gaussian_vec(&mut r, 0.2, 3 * height * width)
        .into_iter()
        .map(|v| (0.5 + v).clamp(0.0, 1.0))
        .collect();
    Tensor::from_vec(Shape::new(3, height, width), data).unwrap()
}

/// 8x8 source, two single-channel levels, d = 4.
pub fn tiny_config() -> CodecConfig {
    CodecConfig::uniform(2, 4, 3, 3, 2).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

pub struct GradCheck {
    pub worst: f64,
    pub checked: usize,
    /// Entries whose default stencil crossed a ReLU boundary and needed a
    /// smaller step.
    pub refined: usize,
}

/// Worst relative error between the tape gradient and central differences
/// over every latent and every decoder parameter, with noise pinned.
///
/// Parameters are jittered off the initial point: zero biases behind a fully
/// dead ReLU layer put later pre-activations exactly on the kink, where no
/// derivative exists to compare against. The step starts at 1e-5 and is
/// shrunk for an entry until both stencil points keep the ReLU pattern of the
/// unperturbed pass; an entry that never does counts as a failure.
pub fn full_pipeline_gradient_error(snr_db: f64, seed: u64) -> GradCheck {
    let config = tiny_config();
    let source = random_image(8, 8, seed);
    let spec = ChannelSpec::new(snr_db, seed).unwrap();
    let inst = Instance::new(&source, &config, spec, seed).unwrap();
    let symbols = rng::gaussian_vec(&mut rng::stream(seed, Purpose::Init, 0), 1.0, inst.symbol_len());
    let mut params = ijscc::codec::DecoderParams::init(&config, &mut rng::stream(seed, Purpose::Init, 1))
        .into_vec();
    let jitter = rng::gaussian_vec(&mut rng::stream(seed, Purpose::Init, 2), 0.1, params.len());
    params.iter_mut().zip(jitter).for_each(|(p, j)| *p += j);
    let noise = PassNoise::sample(
        &spec,
        &config,
        inst.symbol_len(),
        &mut rng::stream(seed, Purpose::TrainSymbols, 0),
        &mut rng::stream(seed, Purpose::TrainParams, 0),
    );
    let pass = forward_backward(&inst, &symbols, &params, &noise, true).unwrap();
    let eval = |s: &[f64], p: &[f64]| {
        let out = forward_backward(&inst, s, p, &noise, false).unwrap();
        (out.loss, out.relu_signature)
    };

    let mut check = GradCheck { worst: 0.0, checked: 0, refined: 0 };
    let mut compare = |analytic: f64, perturbed: &dyn Fn(f64) -> ((f64, u64), (f64, u64))| {
        let mut h = 1e-5;
        let numeric = loop {
            let ((lp, sp), (lm, sm)) = perturbed(h);
            if sp == pass.relu_signature && sm == pass.relu_signature {
                break Some((lp - lm) / (2.0 * h));
            }
            if h < 1e-9 {
                break None;
            }
            h /= 10.0;
        };
        if h < 1e-5 {
            check.refined += 1;
        }
        check.worst = check.worst.max(numeric.map_or(f64::INFINITY, |n| rel_err(analytic, n)));
        check.checked += 1;
    };
    for j in 0..symbols.len() {
        compare(pass.grad_symbols[j], &|h| {
            let (mut plus, mut minus) = (symbols.clone(), symbols.clone());
            plus[j] += h;
            minus[j] -= h;
            (eval(&plus, &params), eval(&minus, &params))
        });
    }
    for j in 0..params.len() {
        compare(pass.grad_params[j], &|h| {
            let (mut plus, mut minus) = (params.clone(), params.clone());
            plus[j] += h;
            minus[j] -= h;
            (eval(&symbols, &plus), eval(&symbols, &minus))
        });
    }
    check
}
