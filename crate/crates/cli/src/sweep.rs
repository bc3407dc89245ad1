use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use ijscc::channel::rate_budget;
use ijscc::metrics::QualityReport;
use ijscc::optimizer::{evaluate_artifact, overfit_instance, receive, reconstruct, REPORT_EVAL_OFFSET};
use ijscc::rng::derive_seed;
use ijscc::tensor::Tensor;
use ijscc::{par, pnm};

use crate::commands::{channel, fixed_config, resolve, train_config};
use crate::config::ExperimentConfig;
use crate::error::{write_err, CliError};
use crate::SweepArgs;

#[derive(Clone, Debug)]
struct Job {
    image: usize,
    snr_db: f64,
    steps: usize,
    pair: (usize, usize),
    repeat: usize,
}

#[derive(Debug, Default, Serialize)]
struct ResultRow {
    image: String,
    height: usize,
    width: usize,
    padded_height: usize,
    padded_width: usize,
    levels: usize,
    channels: usize,
    snr_db: f64,
    d: usize,
    kappa_lsm: usize,
    kappa_redu: usize,
    steps: usize,
    repeat: usize,
    seed: u64,
    r_x: f64,
    r_theta: f64,
    r_total: f64,
    psnr_mean: f64,
    psnr_std: f64,
    ms_ssim: Option<f64>,
    ms_ssim_db: Option<f64>,
    params: usize,
    mults_per_pixel: f64,
    encode_seconds: f64,
    decode_ms: f64,
    status: String,
}

fn jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for image in 0..cfg.sources.len() {
        for &snr_db in &cfg.snr_db {
            for &steps in &cfg.steps {
                for pair in cfg.candidate_pairs() {
                    for repeat in 0..cfg.repeats {
                        out.push(Job { image, snr_db, steps, pair, repeat });
                    }
                }
            }
        }
    }
    out
}

fn row_seed(cfg: &ExperimentConfig, job: &Job) -> u64 {
    derive_seed(&[
        cfg.seed,
        job.image as u64,
        job.snr_db.to_bits(),
        job.steps as u64,
        job.pair.0 as u64,
        job.pair.1 as u64,
        job.repeat as u64,
    ])
}

fn run_job(cfg: &ExperimentConfig, source: &Tensor, job: &Job, row: &mut ResultRow, timing: bool) -> Result<(), CliError> {
    let s = source.shape();
    let config = fixed_config(cfg, s.channels, job.pair, s.height, s.width)?;
    let (ph, pw) = config.padded_dims(s.height, s.width);
    row.padded_height = ph;
    row.padded_width = pw;
    row.kappa_redu = config.kappa_redu;
    row.params = config.param_count();
    row.mults_per_pixel = config.mults_per_pixel();
    let budget = rate_budget(&config, ph * pw).map_err(|e| CliError::usage(e.to_string()))?;
    row.r_x = budget.r_x;
    row.r_theta = budget.r_theta;
    row.r_total = budget.r_total;

    let spec = channel(job.snr_db, row.seed)?;
    let train = train_config(cfg, job.steps, row.seed);
    let start = Instant::now();
    let (artifact, _) = overfit_instance(source, &config, spec, &train)?;
    if timing {
        row.encode_seconds = start.elapsed().as_secs_f64();
    }
    let eval = evaluate_artifact(&artifact, source, cfg.eval_draws, spec.seed, REPORT_EVAL_OFFSET)?;
    row.psnr_mean = eval.mean;
    row.psnr_std = eval.std;

    let start = Instant::now();
    let rx = receive(&artifact, spec.seed, REPORT_EVAL_OFFSET)?;
    let rec = reconstruct(&artifact, &rx)?.clamped_unit();
    if timing {
        row.decode_ms = start.elapsed().as_secs_f64() * 1e3;
    }
    if let Ok(q) = QualityReport::measure(source, &rec, &config) {
        row.ms_ssim = Some(q.ms_ssim);
        row.ms_ssim_db = Some(q.ms_ssim_db);
    }
    Ok(())
}

/// Mean PSNR of the successful rows grouped by `key`, one `key psnr` line each.
fn plot_data(rows: &[ResultRow], header: &str, key: impl Fn(&ResultRow) -> f64) -> String {
    let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
    for r in rows.iter().filter(|r| r.status == "ok") {
        let k = key(r);
        match groups.iter_mut().find(|(g, _)| g.to_bits() == k.to_bits()) {
            Some((_, v)) => v.push(r.psnr_mean),
            None => groups.push((k, vec![r.psnr_mean])),
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = format!("# {header} psnr_db runs\n");
    for (k, v) in groups {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let _ = writeln!(out, "{k} {mean} {}", v.len());
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(write_err(path))
}

pub fn run(a: SweepArgs) -> Result<(), CliError> {
    let cfg = resolve(&a.overrides)?;
    cfg.validate()?;
    if cfg.sources.is_empty() {
        return Err(CliError::usage("sweep needs at least one source"));
    }
    if cfg.search {
        return Err(CliError::usage("sweep runs fixed pairs; list them under pairs instead of search"));
    }
    let timing = !a.overrides.no_timing;
    let sources = cfg.sources.iter().map(pnm::load_image).collect::<Result<Vec<_>, _>>()?;
    let jobs = jobs(&cfg);

    let rows: Vec<ResultRow> = par::install(cfg.workers, || {
        par::map_indexed(jobs.len(), |i| {
            let job = &jobs[i];
            let source = &sources[job.image];
            let s = source.shape();
            let mut row = ResultRow {
                image: cfg.sources[job.image].display().to_string(),
                height: s.height,
                width: s.width,
                levels: cfg.levels,
                channels: s.channels,
                snr_db: job.snr_db,
                d: job.pair.0,
                kappa_lsm: job.pair.1,
                steps: job.steps,
                repeat: job.repeat,
                seed: row_seed(&cfg, job),
                ..ResultRow::default()
            };
            row.status = match run_job(&cfg, source, job, &mut row, timing) {
                Ok(()) => "ok".into(),
                Err(CliError::Infeasible(_)) => "infeasible".into(),
                Err(CliError::Diverged(_)) => "diverged".into(),
                Err(e) => format!("error: {e}"),
            };
            row
        })
    });

    fs::create_dir_all(&cfg.outdir).map_err(write_err(&cfg.outdir))?;
    let out = |name: &str| -> PathBuf { cfg.outdir.join(name) };
    let results = out("results.csv");
    let mut w = csv::Writer::from_path(&results)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(write_err(&results))?;
    write_text(&out("psnr_vs_snr.dat"), &plot_data(&rows, "snr_db", |r| r.snr_db))?;
    write_text(&out("psnr_vs_steps.dat"), &plot_data(&rows, "steps", |r| r.steps as f64))?;
    write_text(&out("psnr_vs_mults.dat"), &plot_data(&rows, "mults_per_pixel", |r| r.mults_per_pixel))?;

    let ok = rows.iter().filter(|r| r.status == "ok").count();
    println!("{} runs, {ok} ok, results in {}", rows.len(), results.display());
    Ok(())
}
