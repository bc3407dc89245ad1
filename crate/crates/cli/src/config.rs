//! Flat `key = value` experiment configuration.
//!
//! One assignment per line; `#` starts a comment. List values are comma
//! separated. Unknown keys are rejected.

use std::path::PathBuf;

use ijscc::codec::SEARCH_SET;
use ijscc::optimizer::OptimizerKind;

use crate::error::CliError;

pub const KEYS: &[&str] = &[
    "source",
    "snr_db",
    "steps",
    "lr",
    "d",
    "kappa_lsm",
    "budget_r",
    "eval_draws",
    "seed",
    "outdir",
    "kappa_redu",
    "levels",
    "pairs",
    "search",
    "probe_steps",
    "eval_interval",
    "repeats",
    "workers",
    "optimizer",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub sources: Vec<PathBuf>,
    pub snr_db: Vec<f64>,
    pub steps: Vec<usize>,
    pub lr: f64,
    pub d: usize,
    pub kappa_lsm: usize,
    /// Explicit `(d, kappa_lsm)` candidates; overrides `d` / `kappa_lsm`.
    pub pairs: Option<Vec<(usize, usize)>>,
    pub kappa_redu: usize,
    pub budget_r: Option<f64>,
    pub search: bool,
    pub probe_steps: usize,
    pub levels: usize,
    /// Noise realisations behind every reported PSNR.
    pub eval_draws: usize,
    pub eval_interval: usize,
    pub seed: u64,
    pub outdir: PathBuf,
    pub repeats: usize,
    pub workers: Option<usize>,
    pub optimizer: OptimizerKind,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sources: Vec::new(),
            snr_db: vec![10.0],
            steps: vec![2000],
            lr: 0.01,
            d: 12,
            kappa_lsm: 25,
            pairs: None,
            kappa_redu: 1,
            budget_r: None,
            search: false,
            probe_steps: 2000,
            levels: 7,
            eval_draws: 16,
            eval_interval: 250,
            seed: 0,
            outdir: PathBuf::from("."),
            repeats: 1,
            workers: None,
            optimizer: OptimizerKind::Adam,
        }
    }
}

fn value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.trim().parse().map_err(|_| CliError::parse(format!("{key}: cannot parse {raw:?}")))
}

fn list<T: std::str::FromStr>(key: &str, raw: &str) -> Result<Vec<T>, CliError> {
    raw.split(',').filter(|s| !s.trim().is_empty()).map(|s| value(key, s)).collect()
}

pub fn parse_pairs(raw: &str) -> Result<Vec<(usize, usize)>, CliError> {
    if raw.trim() == "default" {
        return Ok(SEARCH_SET.to_vec());
    }
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|p| {
            let (d, k) = p
                .split_once(':')
                .ok_or_else(|| CliError::parse(format!("pairs: expected d:kappa_lsm, got {p:?}")))?;
            Ok((value("pairs", d)?, value("pairs", k)?))
        })
        .collect()
}

pub fn parse_optimizer(raw: &str) -> Result<OptimizerKind, CliError> {
    match raw.trim() {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" | "gd" => Ok(OptimizerKind::Sgd),
        other => Err(CliError::parse(format!("optimizer: expected adam or sgd, got {other:?}"))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| CliError::parse(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), raw.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(crate::error::read_err(path))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
        match key {
            "source" => self.sources = raw.split(',').map(|s| PathBuf::from(s.trim())).collect(),
            "snr_db" => self.snr_db = list(key, raw)?,
            "steps" => self.steps = list(key, raw)?,
            "lr" => self.lr = value(key, raw)?,
            "d" => self.d = value(key, raw)?,
            "kappa_lsm" => self.kappa_lsm = value(key, raw)?,
            "budget_r" => {
                self.budget_r = match raw {
                    "" | "none" => None,
                    r => Some(value(key, r)?),
                }
            }
            "eval_draws" => self.eval_draws = value(key, raw)?,
            "seed" => self.seed = value(key, raw)?,
            "outdir" => self.outdir = PathBuf::from(raw),
            "kappa_redu" => self.kappa_redu = value(key, raw)?,
            "levels" => self.levels = value(key, raw)?,
            "pairs" => self.pairs = Some(parse_pairs(raw)?),
            "search" => self.search = value(key, raw)?,
            "probe_steps" => self.probe_steps = value(key, raw)?,
            "eval_interval" => self.eval_interval = value(key, raw)?,
            "repeats" => self.repeats = value(key, raw)?,
            "workers" => self.workers = Some(value(key, raw)?),
            "optimizer" => self.optimizer = parse_optimizer(raw)?,
            other => {
                return Err(CliError::parse(format!(
                    "unknown key {other:?}; known keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// `(d, kappa_lsm)` candidates in effect.
    pub fn candidate_pairs(&self) -> Vec<(usize, usize)> {
        match &self.pairs {
            Some(p) => p.clone(),
            None if self.search => SEARCH_SET.to_vec(),
            None => vec![(self.d, self.kappa_lsm)],
        }
    }

    /// Checks values that need no image to validate.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::usage(m));
        for s in &self.sources {
            if !s.is_file() {
                return Err(CliError::usage(format!("source {} does not exist", s.display())));
            }
        }
        if self.snr_db.is_empty() {
            return bad("snr_db list is empty");
        }
        if self.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return bad("snr_db values must be finite or inf");
        }
        if self.steps.is_empty() || self.steps.contains(&0) {
            return bad("steps must be a non-empty list of positive counts");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("lr must be finite and non-negative");
        }
        let pairs = self.candidate_pairs();
        if pairs.is_empty() || pairs.iter().any(|&(d, k)| d == 0 || k == 0) {
            return bad("every (d, kappa_lsm) candidate needs positive values");
        }
        if self.kappa_redu == 0 {
            return bad("kappa_redu must be at least 1");
        }
        if let Some(r) = self.budget_r {
            // Larger budgets would ask for millions of repetitions.
            if !(r > 0.0 && r <= 1.0) {
                return bad("budget_r must lie in (0, 1]");
            }
        }
        if self.search && self.budget_r.is_none() {
            return bad("search needs budget_r");
        }
        if !(1..=16).contains(&self.levels) {
            return bad("levels must be between 1 and 16");
        }
        if self.eval_draws == 0 || self.eval_interval == 0 || self.repeats == 0 || self.probe_steps == 0 {
            return bad("eval_draws, eval_interval, repeats and probe_steps must be positive");
        }
        if self.workers == Some(0) {
            return bad("workers must be positive");
        }
        Ok(())
    }
}
