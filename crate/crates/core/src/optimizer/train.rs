use std::time::Instant;

use crate::autodiff::{kernels, Tape};
use crate::channel::{rate_budget, ChannelSpec, RateBudget, RepetitionPlan};
use crate::codec::{
    decoder_graph, init_latents, CodecConfig, CommonRandomness, DecoderParams, PyramidSymbols,
    SourceDims, TransmissionArtifact,
};
use crate::rng::{self, Purpose, StreamRng};
use crate::tensor::{Shape, Tensor};

use super::adam::{Optimizer, OptimizerKind};
use super::eval::{evaluate_artifact, EvalResult};
use super::TrainError;

/// Schedule and bookkeeping knobs of one overfitting run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// Steps between evaluation checkpoints.
    pub eval_interval: usize,
    /// Noise realisations per checkpoint evaluation.
    pub eval_draws: usize,
    /// Abort when the loss stays above `divergence_factor` times the first
    /// loss for `divergence_patience` consecutive steps.
    pub divergence_factor: f64,
    pub divergence_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 0.01,
            optimizer: OptimizerKind::Adam,
            eval_interval: 250,
            eval_draws: 4,
            divergence_factor: 10.0,
            divergence_patience: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Seed of the common randomness shared with the receiver.
    pub fn common_seed(&self) -> u64 {
        rng::derive_seed(&[self.seed, 0x434f_4d4d])
    }
}

/// Noise injected into one forward pass.
///
/// `channel` is added to the normalised symbol stream; `redu` and `lsm` are
/// the per-value noise on the gain-normalised parameter groups after
/// repetition averaging, i.e. `N(0, sigma_w^2 / (2 kappa))`.
#[derive(Clone, Debug, PartialEq)]
pub struct PassNoise {
    pub channel: Vec<f64>,
    pub redu: Vec<f64>,
    pub lsm: Vec<f64>,
}

impl PassNoise {
    pub fn zeros(symbol_len: usize, config: &CodecConfig) -> Self {
        let layout = config.layout();
        Self {
            channel: vec![0.0; symbol_len],
            redu: vec![0.0; layout.redu_len()],
            lsm: vec![0.0; layout.lsm_len()],
        }
    }

    pub fn sample(
        spec: &ChannelSpec,
        config: &CodecConfig,
        symbol_len: usize,
        symbol_rng: &mut StreamRng,
        param_rng: &mut StreamRng,
    ) -> Self {
        let mut noise = Self::zeros(symbol_len, config);
        if spec.is_noiseless() {
            return noise;
        }
        let sigma = spec.sigma_w_sq;
        rng::fill_gaussian(symbol_rng, spec.real_std(), &mut noise.channel);
        let std = |kappa: usize| (sigma / (2.0 * kappa as f64)).sqrt();
        rng::fill_gaussian(param_rng, std(config.kappa_redu), &mut noise.redu);
        rng::fill_gaussian(param_rng, std(config.kappa_lsm), &mut noise.lsm);
        noise
    }
}

/// The fixed parts of one overfitting problem.
#[derive(Clone, Debug)]
pub struct Instance {
    pub config: CodecConfig,
    pub source: SourceDims,
    pub spec: ChannelSpec,
    pub common: CommonRandomness,
    target: Tensor,
    shapes: Vec<Shape>,
    m_up: Tensor,
}

impl Instance {
    /// Pads `source` (values in `[0, 1]`) to the pyramid alignment and
    /// regenerates the common randomness.
    pub fn new(
        source: &Tensor,
        config: &CodecConfig,
        spec: ChannelSpec,
        common_seed: u64,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        let s = source.shape();
        if s.channels != config.source_channels {
            return Err(TrainError::Input(format!(
                "source has {} channels, configuration expects {}",
                s.channels, config.source_channels
            )));
        }
        if !source.is_finite() || source.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(TrainError::Input("source values must lie in [0, 1]".into()));
        }
        let dims = SourceDims::new(config, s.height, s.width);
        let target = source.pad_replicate(dims.padded_height, dims.padded_width);
        let shapes = config.level_shapes(dims.padded_height, dims.padded_width)?;
        let common = CommonRandomness::generate(
            common_seed,
            config,
            dims.padded_height,
            dims.padded_width,
            spec.sigma_w_sq,
        )?;
        let m_up = common.expand();
        Ok(Self { config: config.clone(), source: dims, spec, common, target, shapes, m_up })
    }

    /// Padded training target.
    pub fn target(&self) -> &Tensor {
        &self.target
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn symbol_len(&self) -> usize {
        self.shapes.iter().map(Shape::len).sum()
    }

    pub fn budget(&self) -> Result<RateBudget, TrainError> {
        Ok(rate_budget(&self.config, self.source.padded_pixels())?)
    }
}

/// Result of [`forward_backward`].
#[derive(Clone, Debug)]
pub struct PassOutput {
    pub loss: f64,
    /// Decoder output at padded resolution, unclamped.
    pub reconstruction: Tensor,
    /// Average complex power of the normalised symbol stream.
    pub symbol_power: f64,
    pub grad_symbols: Vec<f64>,
    pub grad_params: Vec<f64>,
    /// See [`Tape::relu_signature`].
    pub relu_signature: u64,
}

/// Forward pass through normalisation, channel, noisy parameters and decoder
/// with explicit noise, followed by the backward pass when `with_grads`.
///
/// `symbols` are the raw (unnormalised) latents, flat, finest level first.
pub fn forward_backward(
    inst: &Instance,
    symbols: &[f64],
    params: &[f64],
    noise: &PassNoise,
    with_grads: bool,
) -> Result<PassOutput, TrainError> {
    let layout = inst.config.layout();
    if symbols.len() != inst.symbol_len() || params.len() != layout.total() {
        return Err(TrainError::Input("latent or parameter length mismatch".into()));
    }
    let mut tape = Tape::new();
    let x = tape.param(Tensor::flat(symbols.to_vec()));
    let xn = tape.power_normalize(x)?;
    let y = tape.add_noise(xn, &noise.channel)?;
    let redu = tape.param(Tensor::flat(params[layout.redu.clone()].to_vec()));
    let lsm = tape.param(Tensor::flat(params[layout.redu.end..].to_vec()));
    let redu_hat = tape.add_rms_scaled_noise(redu, &noise.redu)?;
    let lsm_hat = tape.add_rms_scaled_noise(lsm, &noise.lsm)?;
    let m_up = tape.constant(inst.m_up.clone());
    let out = decoder_graph(&mut tape, &inst.config, &inst.shapes, y, redu_hat, lsm_hat, m_up)?;
    let target = tape.constant(inst.target.clone());
    let loss_var = tape.mse(out, target)?;
    let loss = tape.value(loss_var).data()[0];
    let symbol_power = kernels::complex_power(tape.value(xn).data());
    let (mut grad_symbols, mut grad_params) = (Vec::new(), Vec::new());
    if with_grads && loss.is_finite() {
        tape.backward(loss_var)?;
        let grad = |v| tape.grad(v).expect("trainable leaf has a gradient").to_vec();
        grad_symbols = grad(x);
        grad_params = grad(redu);
        grad_params.extend(grad(lsm));
    }
    Ok(PassOutput {
        loss,
        reconstruction: tape.value(out).clone(),
        symbol_power,
        grad_symbols,
        grad_params,
        relu_signature: tape.relu_signature(),
    })
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    /// Average complex power of the transmitted symbol stream.
    pub symbol_power: f64,
    /// Average complex power of each gain-normalised parameter group.
    pub redu_power: f64,
    pub lsm_power: f64,
}

/// Joint optimiser state of latents and decoder parameters.
pub struct Trainer {
    inst: Instance,
    symbols: Vec<f64>,
    params: Vec<f64>,
    opt: Optimizer,
    symbol_rng: StreamRng,
    param_rng: StreamRng,
    common_seed: u64,
}

impl Trainer {
    pub fn new(
        source: &Tensor,
        config: &CodecConfig,
        spec: ChannelSpec,
        cfg: &TrainConfig,
    ) -> Result<Self, TrainError> {
        let common_seed = cfg.common_seed();
        let inst = Instance::new(source, config, spec, common_seed)?;
        let (h, w) = (inst.source.padded_height, inst.source.padded_width);
        let symbols = init_latents(config, h, w, &mut rng::stream(cfg.seed, Purpose::Init, 0))?;
        let params = DecoderParams::init(config, &mut rng::stream(cfg.seed, Purpose::Init, 1));
        let layout = config.layout();
        let sizes = [symbols.flat_len(), layout.redu_len(), layout.lsm_len()];
        Ok(Self {
            opt: Optimizer::new(cfg.optimizer, cfg.lr, cfg.steps, &sizes),
            symbols: symbols.flatten(),
            params: params.into_vec(),
            symbol_rng: rng::stream(cfg.seed, Purpose::TrainSymbols, 0),
            param_rng: rng::stream(cfg.seed, Purpose::TrainParams, 0),
            inst,
            common_seed,
        })
    }

    pub fn instance(&self) -> &Instance {
        &self.inst
    }

    /// Raw latents, flat.
    pub fn symbols(&self) -> &[f64] {
        &self.symbols
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn steps_taken(&self) -> usize {
        self.opt.steps_taken()
    }

    /// One stochastic step with fresh channel and parameter noise. A
    /// non-finite loss is reported without touching the state.
    pub fn step(&mut self) -> Result<StepStats, TrainError> {
        let noise = PassNoise::sample(
            &self.inst.spec,
            &self.inst.config,
            self.symbols.len(),
            &mut self.symbol_rng,
            &mut self.param_rng,
        );
        let pass = forward_backward(&self.inst, &self.symbols, &self.params, &noise, true)?;
        let redu_len = self.inst.config.layout().redu_len();
        let group_power = |g: &[f64]| {
            let gain = kernels::rms_gain(g);
            let normalised: Vec<f64> = g.iter().map(|v| v / gain).collect();
            kernels::complex_power(&normalised)
        };
        let stats = StepStats {
            loss: pass.loss,
            symbol_power: pass.symbol_power,
            redu_power: group_power(&self.params[..redu_len]),
            lsm_power: group_power(&self.params[redu_len..]),
        };
        if !pass.loss.is_finite() {
            return Ok(stats);
        }
        let (redu, lsm) = self.params.split_at_mut(redu_len);
        let (g_redu, g_lsm) = pass.grad_params.split_at(redu_len);
        self.opt.step(&mut [&mut self.symbols, redu, lsm], &[&pass.grad_symbols, g_redu, g_lsm]);
        Ok(stats)
    }

    /// The current iterate as it would be transmitted.
    pub fn artifact(&self) -> Result<TransmissionArtifact, TrainError> {
        let config = &self.inst.config;
        let mut normalised = self.symbols.clone();
        let scale = kernels::unit_power_scale(&normalised);
        normalised.iter_mut().for_each(|v| *v *= scale);
        let (h, w) = (self.inst.source.padded_height, self.inst.source.padded_width);
        let symbols = PyramidSymbols::from_flat(config, h, w, &normalised)?;
        let params = DecoderParams::from_flat(config, self.params.clone())?;
        let plan = RepetitionPlan::fit(
            config.kappa_redu,
            config.kappa_lsm,
            params.layout().redu_len(),
            params.as_slice(),
        )?;
        Ok(TransmissionArtifact {
            config: config.clone(),
            source: self.inst.source,
            snr_db: self.inst.spec.snr_db,
            gains: plan.gains,
            common_seed: self.common_seed,
            symbols,
            params,
        })
    }
}

/// One evaluation checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Steps completed.
    pub step: usize,
    /// Mean training loss since the previous checkpoint.
    pub loss: f64,
    pub eval_psnr_mean: f64,
    pub eval_psnr_std: f64,
    pub seconds_elapsed: f64,
    /// Best evaluation PSNR recorded so far, this checkpoint included.
    pub best_psnr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub checkpoints: Vec<Checkpoint>,
    pub budget: RateBudget,
    pub steps_run: usize,
    /// Step of the returned snapshot, 0 if no checkpoint was reached.
    pub best_step: usize,
    pub best_psnr: f64,
    /// Power statistics of every step, for auditing the power constraint.
    pub max_power_error: f64,
}

pub const CSV_HEADER: [&str; 5] =
    ["step", "loss", "eval_psnr_mean", "eval_psnr_std", "seconds_elapsed"];

/// Seed of the evaluation streams used at checkpoint `index`.
fn checkpoint_offset(index: usize, draws: usize) -> u64 {
    (index * draws) as u64
}

/// Overfits latents and decoder to `source` and returns the checkpoint with
/// the best evaluation PSNR together with the training log.
///
/// Evaluation draws use the channel seed of `spec`; all training randomness
/// derives from `cfg.seed`.
pub fn overfit_instance(
    source: &Tensor,
    config: &CodecConfig,
    spec: ChannelSpec,
    cfg: &TrainConfig,
) -> Result<(TransmissionArtifact, TrainReport), TrainError> {
    if cfg.steps == 0 || cfg.eval_interval == 0 || cfg.eval_draws == 0 {
        return Err(TrainError::Input("steps, eval interval and eval draws must be positive".into()));
    }
    let started = Instant::now();
    let mut trainer = Trainer::new(source, config, spec, cfg)?;
    let mut report = TrainReport {
        checkpoints: Vec::new(),
        budget: trainer.instance().budget()?,
        steps_run: 0,
        best_step: 0,
        best_psnr: f64::NEG_INFINITY,
        max_power_error: 0.0,
    };
    let mut best: Option<TransmissionArtifact> = None;
    let mut first_loss = None;
    let mut above = 0usize;
    let mut interval_loss = 0.0;
    let mut interval_len = 0usize;

    for step in 1..=cfg.steps {
        let stats = trainer.step()?;
        report.steps_run = step;
        if !stats.loss.is_finite() {
            return Err(TrainError::NonFinite { step, report: Box::new(report) });
        }
        for p in [stats.symbol_power, stats.redu_power, stats.lsm_power] {
            report.max_power_error = report.max_power_error.max((p - 1.0).abs());
        }
        let reference = *first_loss.get_or_insert(stats.loss);
        if stats.loss > cfg.divergence_factor * reference {
            above += 1;
            if above >= cfg.divergence_patience {
                return Err(TrainError::Diverged { step, report: Box::new(report) });
            }
        } else {
            above = 0;
        }
        interval_loss += stats.loss;
        interval_len += 1;

        if step % cfg.eval_interval == 0 || step == cfg.steps {
            let artifact = trainer.artifact()?;
            let offset = checkpoint_offset(report.checkpoints.len(), cfg.eval_draws);
            let EvalResult { mean, std, .. } =
                evaluate_artifact(&artifact, source, cfg.eval_draws, spec.seed, offset)?;
            if mean > report.best_psnr || best.is_none() {
                report.best_psnr = mean;
                report.best_step = step;
                best = Some(artifact);
            }
            report.checkpoints.push(Checkpoint {
                step,
                loss: interval_loss / interval_len as f64,
                eval_psnr_mean: mean,
                eval_psnr_std: std,
                seconds_elapsed: started.elapsed().as_secs_f64(),
                best_psnr: report.best_psnr,
            });
            interval_loss = 0.0;
            interval_len = 0;
        }
    }
    let artifact = best.expect("the final step always records a checkpoint");
    Ok((artifact, report))
}
