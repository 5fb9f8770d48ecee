//! Nonparametric bootstrap confidence intervals for class prevalences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SurveyDataset;
use crate::error::{Error, Result};
use crate::lca::em::{em_converge, Patterns};
use crate::lca::{indicator_ids, EmConfig, LcaModel};
use crate::rng;
use crate::robustness::match_profiles;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrevalenceCi {
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub replicates: usize,
    pub failures: usize,
}

/// Percentile 2.5/97.5 intervals for each prevalence from `b` resamples
/// of respondents (rows keep their weights). Every replicate is refit by
/// EM warm-started at the reference solution and its classes are aligned
/// back to the reference by maximum total congruence. More than 10%
/// failed replicates aborts.
pub fn bootstrap_prevalence_ci(
    dataset: &SurveyDataset,
    reference: &LcaModel,
    config: &EmConfig,
    b: usize,
    seed: u64,
) -> Result<PrevalenceCi> {
    if b == 0 {
        return Err(Error::Invalid("need at least 1 replicate".into()));
    }
    if reference.k == 1 {
        return Ok(PrevalenceCi {
            point: vec![1.0],
            lower: vec![1.0],
            upper: vec![1.0],
            replicates: b,
            failures: 0,
        });
    }
    let n = dataset.n();
    let item_ids = indicator_ids(dataset);
    let draws: Vec<Option<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng::rng_for(seed, rep as u64);
            let rows: Vec<usize> = (0..n)
                .map(|_| rand::Rng::random_range(&mut rng, 0..n))
                .collect();
            let resample = dataset.subset_rows(&rows);
            let patterns = match Patterns::from_columns(
                &resample,
                &resample
                    .items
                    .iter()
                    .enumerate()
                    .filter(|(_, it)| item_ids.contains(&it.item_id))
                    .map(|(i, _)| i)
                    .collect::<Vec<_>>(),
            ) {
                Ok(p) => p,
                Err(_) => return None,
            };
            let run = em_converge(
                &patterns,
                reference.params(),
                config.tol,
                config.max_iter,
                config.rho_floor,
            );
            match run {
                Ok(run) if run.converged => {
                    let mut fitted = reference.clone();
                    fitted.prevalences = run.params.pi;
                    fitted.item_probs = run.params.rho;
                    let (perm, _) = match_profiles(reference, &fitted).ok()?;
                    Some(perm.iter().map(|&p| fitted.prevalences[p]).collect())
                }
                _ => None,
            }
        })
        .collect();

    let failures = draws.iter().filter(|d| d.is_none()).count();
    if failures * 10 > b {
        return Err(Error::BootstrapFailures { failures, total: b });
    }
    let k = reference.k;
    let mut lower = Vec::with_capacity(k);
    let mut upper = Vec::with_capacity(k);
    for class in 0..k {
        let mut vals: Vec<f64> = draws
            .iter()
            .flatten()
            .map(|pi| pi[class])
            .collect();
        vals.sort_by(f64::total_cmp);
        lower.push(percentile(&vals, 0.025));
        upper.push(percentile(&vals, 0.975));
    }
    Ok(PrevalenceCi {
        point: reference.prevalences.clone(),
        lower,
        upper,
        replicates: b,
        failures,
    })
}

/// Linear-interpolation percentile on a sorted slice.
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let h = (m - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}
