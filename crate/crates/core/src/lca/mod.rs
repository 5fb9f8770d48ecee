//! Survey-weighted latent class estimation.
//!
//! The model: each respondent belongs to one of K unobserved classes with
//! prevalences π; given the class, the J categorical indicators are
//! independent with item-response probabilities ρ[j][r][k]. Estimation
//! maximizes the weighted log-likelihood Σ_i w_i ln Σ_k π_k Π_j ρ[j][y_ij][k]
//! by EM over a multi-start protocol: `n_starts` random initializations,
//! a short burn-in each, and the `n_best` by burn-in log-likelihood carried
//! to full convergence.

mod bootstrap;
mod bvr;
mod em;
mod num;
mod posterior;

pub use bootstrap::{bootstrap_prevalence_ci, PrevalenceCi};
pub use bvr::{bivariate_residuals, BvrPair, BvrTable, DEFAULT_BVR_THRESHOLD};
pub use posterior::{entropy, posteriors, PosteriorMatrix};

pub(crate) use em::{em_converge, Params, Patterns};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SurveyDataset;
use crate::error::{Error, Result};
use crate::rng;

/// Multi-start EM settings. Defaults follow the estimation protocol the
/// reports are calibrated to: 500 starts, 50 carried to convergence,
/// tolerance 1e-8 on relative log-likelihood change.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub n_starts: usize,
    pub n_best: usize,
    pub burn_in: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Item-response probabilities are floored here each M step.
    pub rho_floor: f64,
    /// Hard cap on requested class counts.
    pub max_k: usize,
    /// Solutions with any prevalence below this floor get a warning.
    pub degenerate_share: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            n_starts: 500,
            n_best: 50,
            burn_in: 20,
            tol: 1e-8,
            max_iter: 5000,
            rho_floor: 1e-6,
            max_k: 12,
            degenerate_share: 0.01,
        }
    }
}

impl EmConfig {
    /// A lighter protocol for replicate refits (bootstrap, BLRT) that are
    /// warm-started from an already-converged solution.
    pub fn replicate(&self) -> EmConfig {
        EmConfig {
            n_starts: 10,
            n_best: 2,
            burn_in: 10,
            ..self.clone()
        }
    }
}

/// A fitted latent class model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LcaModel {
    pub k: usize,
    /// Class prevalences π, summing to 1.
    pub prevalences: Vec<f64>,
    /// Item-response probabilities ρ[j][r][k]: item j, category r
    /// (0-based), class k. Σ_r ρ[j][r][k] = 1 for every (j, k).
    pub item_probs: Vec<Vec<Vec<f64>>>,
    /// Weighted log-likelihood at the solution.
    pub loglik: f64,
    /// Free parameters: (K-1) + K·Σ_j (R_j - 1).
    pub n_params: usize,
    pub converged: bool,
    pub n_starts_used: usize,
    pub seed: u64,
    pub item_ids: Vec<String>,
    pub cardinalities: Vec<u8>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Per-iteration log-likelihood of the winning EM run (not persisted).
    #[serde(skip)]
    pub loglik_trace: Vec<f64>,
}

impl LcaModel {
    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    /// Flattened per-class profile vector (all ρ[j][·][k] concatenated),
    /// the representation congruence coefficients compare.
    pub fn profile(&self, class: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for item in &self.item_probs {
            for row in item {
                out.push(row[class]);
            }
        }
        out
    }

    /// Expected sum of category codes for a class, the ordering score
    /// behind the canonical class labels.
    pub fn class_score(&self, class: usize) -> f64 {
        self.item_probs
            .iter()
            .map(|item| {
                item.iter()
                    .enumerate()
                    .map(|(r, row)| (r + 1) as f64 * row[class])
                    .sum::<f64>()
            })
            .sum()
    }

    /// Relabels classes: new class position `i` takes old class `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> LcaModel {
        let mut out = self.clone();
        out.prevalences = perm.iter().map(|&p| self.prevalences[p]).collect();
        for (j, item) in self.item_probs.iter().enumerate() {
            for (r, row) in item.iter().enumerate() {
                for (i, &p) in perm.iter().enumerate() {
                    out.item_probs[j][r][i] = row[p];
                }
            }
        }
        out
    }

    /// Checks the simplex invariants to 1e-10.
    pub fn validate(&self) -> Result<()> {
        if !self.loglik.is_finite() {
            return Err(Error::Estimation("non-finite log-likelihood".into()));
        }
        let sum: f64 = self.prevalences.iter().sum();
        if (sum - 1.0).abs() > 1e-10 || self.prevalences.iter().any(|&p| p <= 0.0) {
            return Err(Error::Estimation("prevalences are not a simplex".into()));
        }
        for (j, item) in self.item_probs.iter().enumerate() {
            for k in 0..self.k {
                let s: f64 = item.iter().map(|row| row[k]).sum();
                if (s - 1.0).abs() > 1e-10 {
                    return Err(Error::Estimation(format!(
                        "item {j} class {k} response probabilities sum to {s}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn params(&self) -> Params {
        Params {
            pi: self.prevalences.clone(),
            rho: self.item_probs.clone(),
        }
    }
}

/// Free-parameter count (K-1) + K·Σ_j (R_j - 1).
pub fn count_parameters(k: usize, cardinalities: &[u8]) -> usize {
    let per_class: usize = cardinalities.iter().map(|&r| r as usize - 1).sum();
    (k - 1) + k * per_class
}

/// Fits a K-class model by multi-start EM on the indicator items.
///
/// K = 1 is closed form (weighted marginals). For K >= 2, start `s`
/// initializes π ~ Dirichlet(5) and each ρ[j][·][k] ~ Dirichlet(1) from
/// the stream `rng::derive(seed, s)`; after burn-in the best `n_best`
/// starts run to convergence and the winner is chosen by
/// (log-likelihood, start index), so the result is deterministic under
/// any thread count. Classes are then put in canonical order (ascending
/// expected code score).
pub fn fit_lca(dataset: &SurveyDataset, k: usize, config: &EmConfig, seed: u64) -> Result<LcaModel> {
    let patterns = Patterns::from_dataset(dataset)?;
    fit_patterns(&patterns, indicator_ids(dataset), k, config, seed)
}

pub(crate) fn indicator_ids(dataset: &SurveyDataset) -> Vec<String> {
    let ids = dataset.indicator_ids();
    if ids.is_empty() {
        dataset.items.iter().map(|it| it.item_id.clone()).collect()
    } else {
        ids
    }
}

pub(crate) fn fit_patterns(
    patterns: &Patterns,
    item_ids: Vec<String>,
    k: usize,
    config: &EmConfig,
    seed: u64,
) -> Result<LcaModel> {
    if k == 0 {
        return Err(Error::Invalid("K must be >= 1".into()));
    }
    if k > config.max_k {
        return Err(Error::KTooLarge { k, max: config.max_k });
    }
    if k == 1 {
        let (params, loglik) = em::fit_one_class(patterns, config.rho_floor);
        return finish_model(patterns, item_ids, params, loglik, vec![loglik], true, 0, seed, config, true);
    }

    // Burn-in all starts, keep the n_best by burn-in log-likelihood.
    let mut burned: Vec<(f64, usize, Params)> = (0..config.n_starts)
        .into_par_iter()
        .map(|s| {
            let init = random_init(patterns, k, seed, s as u64);
            let (params, ll) = em::em_burn_in(patterns, init, config.burn_in, config.rho_floor);
            (ll, s, params)
        })
        .collect();
    burned.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    burned.truncate(config.n_best.max(1));

    let runs: Vec<Result<(usize, em::EmRun)>> = burned
        .into_par_iter()
        .map(|(_, s, params)| {
            em_converge(patterns, params, config.tol, config.max_iter, config.rho_floor)
                .map(|run| (s, run))
        })
        .collect();
    let mut best: Option<(usize, em::EmRun)> = None;
    for run in runs {
        let (s, run) = run?;
        best = Some(match best {
            None => (s, run),
            Some(cur) => {
                if run.loglik > cur.1.loglik
                    || (run.loglik == cur.1.loglik && s < cur.0)
                {
                    (s, run)
                } else {
                    cur
                }
            }
        });
    }
    let (_, run) = best.expect("n_starts >= 1");
    finish_model(
        patterns,
        item_ids,
        run.params,
        run.loglik,
        run.trace,
        run.converged,
        config.n_starts,
        seed,
        config,
        true,
    )
}

/// Converges EM from explicit starting parameters (warm start). Used by
/// bootstrap and BLRT replicate fits; class order is left as given so
/// labels stay aligned with the start.
pub fn fit_lca_from(
    dataset: &SurveyDataset,
    init: &LcaModel,
    config: &EmConfig,
) -> Result<LcaModel> {
    let patterns = Patterns::from_dataset(dataset)?;
    fit_patterns_from(&patterns, indicator_ids(dataset), init, config)
}

pub(crate) fn fit_patterns_from(
    patterns: &Patterns,
    item_ids: Vec<String>,
    init: &LcaModel,
    config: &EmConfig,
) -> Result<LcaModel> {
    let run = em_converge(
        patterns,
        init.params(),
        config.tol,
        config.max_iter,
        config.rho_floor,
    )?;
    finish_model(
        patterns,
        item_ids,
        run.params,
        run.loglik,
        run.trace,
        run.converged,
        1,
        init.seed,
        config,
        false,
    )
}

fn random_init(patterns: &Patterns, k: usize, seed: u64, start: u64) -> Params {
    let mut rng = rng::rng_for(seed, start);
    let pi = rng::dirichlet(&mut rng, k, 5.0);
    let rho = patterns
        .cards
        .iter()
        .map(|&r| {
            // Draw per-class category rows, stored transposed as [r][k].
            let cols: Vec<Vec<f64>> = (0..k)
                .map(|_| rng::dirichlet(&mut rng, r as usize, 1.0))
                .collect();
            (0..r as usize)
                .map(|cat| cols.iter().map(|col| col[cat]).collect())
                .collect()
        })
        .collect();
    Params { pi, rho }
}

#[allow(clippy::too_many_arguments)]
fn finish_model(
    patterns: &Patterns,
    item_ids: Vec<String>,
    mut params: Params,
    loglik: f64,
    trace: Vec<f64>,
    converged: bool,
    n_starts_used: usize,
    seed: u64,
    config: &EmConfig,
    canonical_order: bool,
) -> Result<LcaModel> {
    let k = params.k();
    // Kill simplex drift before validating.
    renormalize(&mut params);
    let mut model = LcaModel {
        k,
        prevalences: params.pi,
        item_probs: params.rho,
        loglik,
        n_params: count_parameters(k, &patterns.cards),
        converged,
        n_starts_used,
        seed,
        item_ids,
        cardinalities: patterns.cards.clone(),
        warnings: Vec::new(),
        loglik_trace: trace,
    };
    if canonical_order && k > 1 {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            model
                .class_score(a)
                .total_cmp(&model.class_score(b))
                .then(model.prevalences[b].total_cmp(&model.prevalences[a]))
                .then(a.cmp(&b))
        });
        model = model.permuted(&order);
    }
    if !model.converged {
        model
            .warnings
            .push(format!("EM did not converge within {} iterations", config.max_iter));
    }
    for (kk, &p) in model.prevalences.iter().enumerate() {
        if p < config.degenerate_share {
            model.warnings.push(format!(
                "class {} prevalence {:.5} is below the degeneracy floor {}",
                kk + 1,
                p,
                config.degenerate_share
            ));
        }
    }
    model.validate()?;
    Ok(model)
}

fn renormalize(params: &mut Params) {
    let sum: f64 = params.pi.iter().sum();
    params.pi.iter_mut().for_each(|p| *p /= sum);
    let k = params.pi.len();
    for item in params.rho.iter_mut() {
        for kk in 0..k {
            let s: f64 = item.iter().map(|row| row[kk]).sum();
            for row in item.iter_mut() {
                row[kk] /= s;
            }
        }
    }
}
