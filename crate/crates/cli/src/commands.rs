use std::fs;
use std::path::Path;

use ijscc::autodiff::Tape;
use ijscc::channel::{rate_budget, ChannelSpec, RateBudget};
use ijscc::codec::{deserialize_artifact, redu_forward, serialize_artifact, CodecConfig, TransmissionArtifact};
use ijscc::metrics::{self, QualityReport};
use ijscc::optimizer::{
    evaluate_artifact, greedy_config_search, overfit_instance, receive, reconstruct, TrainConfig,
    TrainError, TrainReport, CSV_HEADER, REPORT_EVAL_OFFSET,
};
use ijscc::tensor::{Shape, Tensor};
use ijscc::{par, pnm};

use crate::config::{parse_optimizer, ExperimentConfig};
use crate::error::{read_err, write_err, CliError};
use crate::{DecodeArgs, DumpArgs, EncodeArgs, InfoArgs, Overrides};

/// Config file (if any) with command-line overrides applied.
pub fn resolve(o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &o.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = o.snr {
        cfg.snr_db = vec![v];
    }
    if let Some(v) = o.steps {
        cfg.steps = vec![v];
    }
    if let Some(v) = o.lr {
        cfg.lr = v;
    }
    if let Some(v) = o.d {
        cfg.d = v;
        cfg.pairs = None;
    }
    if let Some(v) = o.kappa_lsm {
        cfg.kappa_lsm = v;
        cfg.pairs = None;
    }
    if let Some(v) = o.kappa_redu {
        cfg.kappa_redu = v;
    }
    if let Some(v) = o.levels {
        cfg.levels = v;
    }
    if let Some(v) = o.budget {
        cfg.budget_r = Some(v);
    }
    if o.search {
        cfg.search = true;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.eval_draws {
        cfg.eval_draws = v;
    }
    if let Some(v) = &o.optimizer {
        cfg.optimizer = parse_optimizer(v)?;
    }
    if let Some(v) = o.workers {
        cfg.workers = Some(v);
    }
    Ok(cfg)
}

pub fn train_config(cfg: &ExperimentConfig, steps: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        steps,
        lr: cfg.lr,
        optimizer: cfg.optimizer,
        eval_interval: cfg.eval_interval,
        seed,
        ..TrainConfig::default()
    }
}

pub fn channel(snr_db: f64, seed: u64) -> Result<ChannelSpec, CliError> {
    ChannelSpec::new(snr_db, seed).map_err(|e| CliError::usage(e.to_string()))
}

/// Builds the codec configuration for one `(d, kappa_lsm)` pair, filling
/// `kappa_redu` from the budget when one is set.
pub fn fixed_config(
    cfg: &ExperimentConfig,
    channels: usize,
    (d, kappa_lsm): (usize, usize),
    height: usize,
    width: usize,
) -> Result<CodecConfig, CliError> {
    let base = CodecConfig::uniform(cfg.levels, d, channels, kappa_lsm, cfg.kappa_redu)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let Some(r) = cfg.budget_r else {
        return Ok(base);
    };
    let (h, w) = base.padded_dims(height, width);
    match base.kappa_redu_for_budget(h * w, r) {
        Some(k) => Ok(base.with_kappas(kappa_lsm, k)),
        None => {
            let floor = rate_budget(&base.with_kappas(kappa_lsm, 1), h * w)
                .map_err(|e| CliError::usage(e.to_string()))?;
            Err(CliError::Infeasible(format!(
                "R = {r} is below r_x + r_theta = {:.6} + {:.6} for d = {d}, kappa_lsm = {kappa_lsm}, kappa_redu = 1",
                floor.r_x, floor.r_theta
            )))
        }
    }
}

fn describe(config: &CodecConfig) -> String {
    format!(
        "levels={} d={} C={} kappa_lsm={} kappa_redu={} params={} mults/pixel={:.3}",
        config.levels(),
        config.hidden_dim,
        config.source_channels,
        config.kappa_lsm,
        config.kappa_redu,
        config.param_count(),
        config.mults_per_pixel()
    )
}

fn describe_budget(b: &RateBudget) -> String {
    format!(
        "r_x={:.8} r_theta={:.8} r_total={:.8} channel_uses_x={} channel_uses_theta={}",
        b.r_x, b.r_theta, b.r_total, b.channel_uses_x, b.channel_uses_theta
    )
}

pub fn write_report(path: &Path, report: &TrainReport, timing: bool) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for c in &report.checkpoints {
        let secs = if timing { c.seconds_elapsed } else { 0.0 };
        w.write_record([
            c.step.to_string(),
            c.loss.to_string(),
            c.eval_psnr_mean.to_string(),
            c.eval_psnr_std.to_string(),
            secs.to_string(),
        ])?;
    }
    w.flush().map_err(write_err(path))?;
    Ok(())
}

fn single<T: Copy>(values: &[T], what: &str) -> Result<T, CliError> {
    match values {
        [v] => Ok(*v),
        _ => Err(CliError::usage(format!("encode takes exactly one {what} value"))),
    }
}

pub fn encode(a: EncodeArgs) -> Result<(), CliError> {
    let mut cfg = resolve(&a.overrides)?;
    if let Some(input) = a.input {
        cfg.sources = vec![input];
    }
    cfg.validate()?;
    let [path] = cfg.sources.as_slice() else {
        return Err(CliError::usage("encode needs exactly one source image (--input)"));
    };
    let snr = single(&cfg.snr_db, "snr_db")?;
    let steps = single(&cfg.steps, "steps")?;
    let source = pnm::load_image(path)?;
    let s = source.shape();
    let spec = channel(snr, cfg.seed)?;
    let timing = !a.overrides.no_timing;

    let result = par::install(cfg.workers, || -> Result<_, CliError> {
        let pairs = cfg.candidate_pairs();
        let config = if cfg.search {
            let budget = cfg.budget_r.expect("validated");
            let base = fixed_config(&ExperimentConfig { budget_r: None, ..cfg.clone() }, s.channels, pairs[0], s.height, s.width)?;
            let probe = train_config(&cfg, cfg.probe_steps, cfg.seed);
            let outcome = greedy_config_search(&source, &base, spec, budget, &pairs, &probe)?;
            for p in &outcome.probes {
                let score = p.psnr.map_or("not probed".to_string(), |v| format!("{v:.3} dB"));
                println!("probe d={} kappa_lsm={} kappa_redu={}: {score}", p.config.hidden_dim, p.config.kappa_lsm, p.config.kappa_redu);
            }
            outcome.config
        } else {
            let pair = single(&pairs, "(d, kappa_lsm)")?;
            fixed_config(&cfg, s.channels, pair, s.height, s.width)?
        };
        let train = train_config(&cfg, steps, cfg.seed);
        match overfit_instance(&source, &config, spec, &train) {
            Ok(x) => Ok(x),
            Err(e @ (TrainError::Diverged { .. } | TrainError::NonFinite { .. })) => {
                if let (Some(path), TrainError::Diverged { report, .. } | TrainError::NonFinite { report, .. }) = (&a.report, &e) {
                    write_report(path, report, timing)?;
                }
                Err(e.into())
            }
            Err(e) => Err(e.into()),
        }
    });
    let (artifact, report) = result?;

    fs::write(&a.output, serialize_artifact(&artifact)).map_err(write_err(&a.output))?;
    if let Some(path) = &a.report {
        write_report(path, &report, timing)?;
    }
    let eval = par::install(cfg.workers, || {
        evaluate_artifact(&artifact, &source, cfg.eval_draws, spec.seed, REPORT_EVAL_OFFSET)
    })?;
    println!("config: {}", describe(&artifact.config));
    println!("rate: {}", describe_budget(&report.budget));
    println!("best checkpoint: step {} psnr {:.10} dB", report.best_step, report.best_psnr);
    println!("eval over {} draws: psnr {:.4} +- {:.4} dB", eval.psnrs.len(), eval.mean, eval.std);
    Ok(())
}

fn load_artifact(path: &Path) -> Result<TransmissionArtifact, CliError> {
    let bytes = fs::read(path).map_err(read_err(path))?;
    Ok(deserialize_artifact(&bytes)?)
}

pub fn decode(a: DecodeArgs) -> Result<(), CliError> {
    let artifact = load_artifact(&a.artifact)?;
    let reference = a.reference.as_deref().map(pnm::load_image).transpose()?;
    let rx = receive(&artifact, a.channel_seed, a.realization)?;
    let rec = reconstruct(&artifact, &rx)?.clamped_unit();
    pnm::save_image(&a.output, &rec).map_err(|e| CliError::usage(format!("{}: {e}", a.output.display())))?;
    let Some(reference) = reference else {
        return Ok(());
    };
    if reference.shape() != rec.shape() {
        return Err(CliError::usage(format!(
            "reference is {}, artifact decodes to {}",
            reference.shape(),
            rec.shape()
        )));
    }
    let psnr = metrics::psnr(&reference, &rec).map_err(|e| CliError::usage(e.to_string()))?;
    println!("psnr: {psnr:.10} dB");
    match QualityReport::measure(&reference, &rec, &artifact.config) {
        Ok(q) => println!("ms-ssim: {:.6} ({:.4} dB)", q.ms_ssim, q.ms_ssim_db),
        Err(e) => println!("ms-ssim: n/a ({e})"),
    }
    println!(
        "params: {} mults/pixel: {:.3}",
        artifact.config.param_count(),
        artifact.config.mults_per_pixel()
    );
    Ok(())
}

fn save_plane(dir: &Path, name: &str, plane: &[f64], h: usize, w: usize) -> Result<(), CliError> {
    let path = dir.join(name);
    pnm::save_image(&path, &pnm::normalize_plane(plane, h, w))
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn dump_symbols(a: DumpArgs) -> Result<(), CliError> {
    let artifact = load_artifact(&a.artifact)?;
    let rx = receive(&artifact, a.channel_seed, a.realization)?;
    fs::create_dir_all(&a.outdir).map_err(write_err(&a.outdir))?;
    let mut written = 0;
    for (prefix, pyramid) in [("input", &artifact.symbols), ("output", &rx.symbols)] {
        for (k, level) in pyramid.levels().iter().enumerate() {
            let Shape { channels, height, width } = level.shape();
            for c in 0..channels {
                save_plane(&a.outdir, &format!("{prefix}_l{}_c{}.pgm", k + 1, c + 1), level.channel(c), height, width)?;
                written += 1;
            }
        }
    }
    let mut tape = Tape::new();
    let levels: Vec<_> = rx.symbols.levels().iter().map(|t| tape.constant(t.clone())).collect();
    let kernel = tape.constant(rx.params.redu_kernel());
    let u = redu_forward(&mut tape, &levels, kernel).map_err(|e| CliError::usage(e.to_string()))?;
    let u: &Tensor = tape.value(u);
    let Shape { channels, height, width } = u.shape();
    for c in 0..channels {
        save_plane(&a.outdir, &format!("redu_c{}.pgm", c + 1), u.channel(c), height, width)?;
        written += 1;
    }
    println!("wrote {written} images to {}", a.outdir.display());
    Ok(())
}

pub fn info(a: InfoArgs) -> Result<(), CliError> {
    let mut config = CodecConfig::uniform(a.levels, a.d, a.channels, a.kappa_lsm, a.kappa_redu)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let layout = config.layout();
    println!("params: {}", config.param_count());
    println!("  upsampler kernel: {}", layout.redu_len());
    println!("  1x1 conv 1: {}", layout.w1.len() + layout.b1.len());
    println!("  1x1 conv 2: {}", layout.w2.len() + layout.b2.len());
    println!("  1x1 conv 3: {}", layout.w3.len() + layout.b3.len());
    println!(
        "  3x3 convs: {}",
        layout.conv_a.len() + layout.bias_a.len() + layout.conv_b.len() + layout.bias_b.len()
    );
    println!("mults/pixel: {:.6}", config.mults_per_pixel());
    match (a.height, a.width) {
        (Some(h), Some(w)) => {
            let (ph, pw) = config.padded_dims(h, w);
            if let Some(r) = a.budget {
                let k = config.kappa_redu_for_budget(ph * pw, r).ok_or_else(|| {
                    CliError::Infeasible(format!("R = {r} cannot carry this configuration"))
                })?;
                config = config.with_kappas(a.kappa_lsm, k);
                println!("kappa_redu from budget: {k}");
            }
            let b = rate_budget(&config, ph * pw).map_err(|e| CliError::usage(e.to_string()))?;
            println!("padded: {ph}x{pw}");
            println!("rate: {}", describe_budget(&b));
        }
        (None, None) if a.budget.is_some() => {
            return Err(CliError::usage("--budget needs --height and --width"))
        }
        (None, None) => {}
        _ => return Err(CliError::usage("give both --height and --width")),
    }
    Ok(())
}
