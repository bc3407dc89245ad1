use crate::channel::{rate_budget, ChannelSpec};
use crate::codec::CodecConfig;
use crate::par;
use crate::tensor::Tensor;

use super::train::{overfit_instance, TrainConfig};
use super::TrainError;

/// One evaluated candidate of the search.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub config: CodecConfig,
    pub r_total: f64,
    /// Best evaluation PSNR of the probe run; `None` when not probed.
    pub psnr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub config: CodecConfig,
    pub probes: Vec<Probe>,
}

/// Fits `kappa_redu` into the budget for each `(d, kappa_lsm)` candidate.
///
/// Candidates keep the level structure and channel count of `base`. The
/// result lists every feasible configuration in search-set order, or an
/// infeasibility error that itemises each candidate's parameter rate.
pub fn feasible_candidates(
    base: &CodecConfig,
    pixels: usize,
    budget: f64,
    search_set: &[(usize, usize)],
) -> Result<Vec<CodecConfig>, TrainError> {
    if search_set.is_empty() {
        return Err(TrainError::Input("search set is empty".into()));
    }
    let mut feasible = Vec::new();
    let mut listing = Vec::new();
    for &(d, kappa_lsm) in search_set {
        let candidate = base.with_hidden_dim(d).with_kappas(kappa_lsm, 1);
        candidate.validate()?;
        let minimum = rate_budget(&candidate, pixels)?;
        match candidate.kappa_redu_for_budget(pixels, budget) {
            Some(kappa_redu) => feasible.push(candidate.with_kappas(kappa_lsm, kappa_redu)),
            None => listing.push(format!(
                "(d={d}, kappa_lsm={kappa_lsm}) needs r_x + r_theta >= {:.6}",
                minimum.r_total
            )),
        }
    }
    if feasible.is_empty() {
        return Err(TrainError::Infeasible(format!(
            "no candidate fits R = {budget}: {}",
            listing.join("; ")
        )));
    }
    Ok(feasible)
}

/// Greedy choice of `(d, kappa_lsm, kappa_redu)` under a bandwidth budget.
///
/// Every feasible candidate gets a short probe run (`probe.steps` steps);
/// the best evaluation PSNR wins and ties go to the smaller `d`. A single
/// feasible candidate is returned without probing. Probes run in parallel.
pub fn greedy_config_search(
    source: &Tensor,
    base: &CodecConfig,
    spec: ChannelSpec,
    budget: f64,
    search_set: &[(usize, usize)],
    probe: &TrainConfig,
) -> Result<SearchOutcome, TrainError> {
    let s = source.shape();
    let (h, w) = base.padded_dims(s.height, s.width);
    let candidates = feasible_candidates(base, h * w, budget, search_set)?;
    let r_total = |c: &CodecConfig| rate_budget(c, h * w).map(|b| b.r_total);
    if let [only] = candidates.as_slice() {
        let probes = vec![Probe { config: only.clone(), r_total: r_total(only)?, psnr: None }];
        return Ok(SearchOutcome { config: only.clone(), probes });
    }
    let results = par::map_indexed(candidates.len(), |i| {
        overfit_instance(source, &candidates[i], spec, probe).map(|(_, report)| report.best_psnr)
    });
    let mut probes = Vec::with_capacity(candidates.len());
    for (config, psnr) in candidates.into_iter().zip(results) {
        probes.push(Probe { r_total: r_total(&config)?, config, psnr: Some(psnr?) });
    }
    let winner = probes
        .iter()
        .min_by(|a, b| {
            let (pa, pb) = (a.psnr.unwrap_or(f64::NEG_INFINITY), b.psnr.unwrap_or(f64::NEG_INFINITY));
            pb.total_cmp(&pa).then(a.config.hidden_dim.cmp(&b.config.hidden_dim))
        })
        .expect("at least two probes");
    Ok(SearchOutcome { config: winner.config.clone(), probes })
}
