//! Class enumeration: information criteria, likelihood-ratio tests, and
//! a transparent recommendation rule.
//!
//! The sample size entering every criterion is the unweighted number of
//! analyzed respondents. Adjacent class counts are compared with a
//! parametric-bootstrap likelihood ratio test (BLRT) and an adjusted
//! likelihood ratio test referred to a chi-square reference; both are
//! treated as corroborating evidence, not as the sole arbiter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SurveyDataset;
use crate::error::{Error, Result};
use crate::lca::{
    self, entropy, fit_lca, posteriors, EmConfig, LcaModel,
};
use crate::rng;

/// Candidate class counts must reach this classification entropy.
pub const DEFAULT_ENTROPY_MIN: f64 = 0.80;
/// Candidate class counts must keep every class share at or above this.
pub const DEFAULT_SHARE_FLOOR: f64 = 0.05;
/// Diminishing returns: the next BIC drop must fall below this fraction
/// of the previous drop for the elbow to fire at K.
pub const DEFAULT_ELBOW_RATIO: f64 = 0.70;
/// Default significance level for the enumeration tests.
pub const DEFAULT_ALPHA: f64 = 0.05;
/// Default parametric-bootstrap replicate count.
pub const DEFAULT_BLRT_REPLICATES: usize = 199;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub bic: f64,
    pub sabic: f64,
    pub aic: f64,
}

/// BIC = −2ℓ + p·ln n, sample-size-adjusted BIC = −2ℓ + p·ln((n+2)/24),
/// AIC = −2ℓ + 2p, with n the unweighted analyzed sample size.
pub fn information_criteria(loglik: f64, n_params: usize, n: usize) -> InformationCriteria {
    let p = n_params as f64;
    let n = n as f64;
    InformationCriteria {
        bic: -2.0 * loglik + p * n.ln(),
        sabic: -2.0 * loglik + p * ((n + 2.0) / 24.0).ln(),
        aic: -2.0 * loglik + 2.0 * p,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlrtResult {
    /// Observed statistic 2(ℓ_K − ℓ_{K−1}).
    pub t: f64,
    /// (1 + #{T_b ≥ T}) / (successes + 1).
    pub p: f64,
    pub replicates: usize,
    pub exceed: usize,
    pub failures: usize,
}

/// Parametric-bootstrap likelihood ratio test of `model_small` against
/// `model_big` on the same indicators.
///
/// Replicate datasets of `n` unit-weight rows are generated from the
/// small model. Each replicate fits both class counts warm-started at
/// the parent estimates plus a reduced random multistart; a replicate
/// whose statistic comes out negative (the larger model fit worse, an
/// optimization failure) is retried once with a fresh seed and then
/// counted as a failure. More than 10% failures aborts the test.
pub fn blrt(
    model_small: &LcaModel,
    model_big: &LcaModel,
    n: usize,
    b: usize,
    config: &EmConfig,
    seed: u64,
) -> Result<BlrtResult> {
    if model_small.item_ids != model_big.item_ids
        || model_small.cardinalities != model_big.cardinalities
    {
        return Err(Error::Invalid("models were fitted on different indicators".into()));
    }
    if model_big.k <= model_small.k {
        return Err(Error::Invalid("the alternative model must have more classes".into()));
    }
    if b == 0 || n == 0 {
        return Err(Error::Invalid("need positive replicate count and sample size".into()));
    }
    let t = 2.0 * (model_big.loglik - model_small.loglik);
    if t < 0.0 {
        return Err(Error::LikelihoodOrder {
            l_small: model_small.loglik,
            l_big: model_big.loglik,
        });
    }

    // Per-class category distributions of the generating model,
    // transposed to [k][j][r] for sampling.
    let k_small = model_small.k;
    let cards = &model_small.cardinalities;
    let gen_dist: Vec<Vec<Vec<f64>>> = (0..k_small)
        .map(|kk| {
            model_small
                .item_probs
                .iter()
                .map(|item| item.iter().map(|row| row[kk]).collect())
                .collect()
        })
        .collect();

    let replicate_cfg = config.replicate();
    let one_replicate = |rep_seed: u64| -> Result<f64> {
        let mut rng = rng::rng(rep_seed);
        let rows: Vec<Vec<u8>> = (0..n)
            .map(|_| {
                let class = rng::sample_index(&mut rng, &model_small.prevalences);
                gen_dist[class]
                    .iter()
                    .map(|dist| rng::sample_index(&mut rng, dist) as u8 + 1)
                    .collect()
            })
            .collect();
        let patterns = lca::Patterns::from_generated(&rows, cards);
        let fit_order = |parent: &LcaModel, salt: u64| -> Result<f64> {
            let warm = lca::em_converge(
                &patterns,
                parent.params(),
                config.tol,
                config.max_iter,
                config.rho_floor,
            )?;
            let multi = lca::fit_patterns(
                &patterns,
                parent.item_ids.clone(),
                parent.k,
                &replicate_cfg,
                rng::derive(rep_seed, salt),
            )?;
            Ok(warm.loglik.max(multi.loglik))
        };
        let ll_small = fit_order(model_small, 1)?;
        let ll_big = fit_order(model_big, 2)?;
        let t_b = 2.0 * (ll_big - ll_small);
        if t_b < -1e-6 {
            return Err(Error::LikelihoodOrder { l_small: ll_small, l_big: ll_big });
        }
        Ok(t_b.max(0.0))
    };

    let draws: Vec<Option<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|rep| {
            one_replicate(rng::derive(seed, rep))
                .or_else(|_| one_replicate(rng::derive(rng::derive(seed, rep), u64::MAX)))
                .ok()
        })
        .collect();

    let failures = draws.iter().filter(|d| d.is_none()).count();
    if failures * 10 > b {
        return Err(Error::BootstrapFailures { failures, total: b });
    }
    let successes: Vec<f64> = draws.into_iter().flatten().collect();
    let exceed = successes.iter().filter(|&&tb| tb >= t).count();
    Ok(BlrtResult {
        t,
        p: (1.0 + exceed as f64) / (successes.len() as f64 + 1.0),
        replicates: successes.len(),
        exceed,
        failures,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VlmrResult {
    pub lr: f64,
    pub adjusted_lr: f64,
    pub df: usize,
    pub p: f64,
}

/// Adjusted likelihood ratio test of K−1 against K classes: the raw
/// statistic 2(ℓ_K − ℓ_{K−1}) is shrunk by 1/(1 + 1/(d·ln n)), d being
/// the parameter difference, and referred to χ²_d. The chi-square
/// reference is an operational approximation of the mixture sampling
/// distribution and is conservative under the null.
pub fn vlmr_lrt(model_small: &LcaModel, model_big: &LcaModel, n: usize) -> Result<VlmrResult> {
    if model_big.n_params <= model_small.n_params {
        return Err(Error::Invalid("the alternative model must have more parameters".into()));
    }
    let lr = 2.0 * (model_big.loglik - model_small.loglik);
    if lr < 0.0 {
        return Err(Error::LikelihoodOrder {
            l_small: model_small.loglik,
            l_big: model_big.loglik,
        });
    }
    let df = model_big.n_params - model_small.n_params;
    let adjusted_lr = lr / (1.0 + 1.0 / (df as f64 * (n as f64).ln()));
    Ok(VlmrResult {
        lr,
        adjusted_lr,
        df,
        p: crate::dataset::chi_sq_sf(adjusted_lr, df as f64),
    })
}

/// One row of the enumeration table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRow {
    pub k: usize,
    pub loglik: f64,
    pub n_params: usize,
    pub bic: f64,
    pub sabic: f64,
    pub aic: f64,
    /// None for K = 1, where classification entropy is undefined
    /// (reported as 1.000 in formatted tables by convention).
    pub entropy: Option<f64>,
    pub min_share: f64,
    pub blrt_p: Option<f64>,
    pub vlmr_p: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnumerationOptions {
    pub k_max: usize,
    /// None skips the bootstrap test (the adjusted LRT still runs).
    pub blrt_replicates: Option<usize>,
    pub alpha: f64,
    pub entropy_min: f64,
    pub share_floor: f64,
    pub elbow_ratio: f64,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        EnumerationOptions {
            k_max: 7,
            blrt_replicates: Some(DEFAULT_BLRT_REPLICATES),
            alpha: DEFAULT_ALPHA,
            entropy_min: DEFAULT_ENTROPY_MIN,
            share_floor: DEFAULT_SHARE_FLOOR,
            elbow_ratio: DEFAULT_ELBOW_RATIO,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnumerationTable {
    pub rows: Vec<FitRow>,
    pub recommended_k: Option<usize>,
    /// Human-readable audit trail of the recommendation rule.
    pub rationale: Vec<String>,
    /// The fitted models, aligned with `rows` (not persisted).
    #[serde(skip)]
    pub models: Vec<LcaModel>,
}

/// Fits K = 1..k_max, computes criteria and adjacent-model tests, and
/// applies the recommendation rule.
pub fn enumerate(
    dataset: &SurveyDataset,
    opts: &EnumerationOptions,
    config: &EmConfig,
    seed: u64,
) -> Result<EnumerationTable> {
    if opts.k_max < 1 {
        return Err(Error::Invalid("k_max must be at least 1".into()));
    }
    let n = dataset.n();
    let mut models = Vec::with_capacity(opts.k_max);
    for k in 1..=opts.k_max {
        models.push(fit_lca(dataset, k, config, rng::derive(seed, k as u64))?);
    }
    let mut rows = Vec::with_capacity(opts.k_max);
    for (idx, model) in models.iter().enumerate() {
        let k = idx + 1;
        let ic = information_criteria(model.loglik, model.n_params, n);
        let ent = if k == 1 {
            None
        } else {
            let post = posteriors(model, dataset)?;
            Some(entropy(&post, k)?)
        };
        let min_share = model.prevalences.iter().cloned().fold(f64::INFINITY, f64::min);
        let vlmr_p = if k >= 2 {
            Some(vlmr_lrt(&models[idx - 1], model, n)?.p)
        } else {
            None
        };
        let blrt_p = match (k >= 2, opts.blrt_replicates) {
            (true, Some(b)) => Some(
                blrt(&models[idx - 1], model, n, b, config, rng::derive(seed, 100 + k as u64))?.p,
            ),
            _ => None,
        };
        rows.push(FitRow {
            k,
            loglik: model.loglik,
            n_params: model.n_params,
            bic: ic.bic,
            sabic: ic.sabic,
            aic: ic.aic,
            entropy: ent,
            min_share,
            blrt_p,
            vlmr_p,
            converged: model.converged,
        });
    }
    let (recommended_k, rationale) = recommend(&rows, opts);
    Ok(EnumerationTable { rows, recommended_k, rationale, models })
}

/// The recommendation rule, applied to a completed enumeration table.
///
/// A class count K >= 2 is a candidate when: classification entropy is at
/// least `entropy_min`, the smallest class share is at least
/// `share_floor`, both adjacent-model tests that were run are significant
/// at `alpha`, moving from K−1 to K actually lowered the BIC, and the
/// BIC improvement shows diminishing returns at K (the K→K+1 drop falls
/// below `elbow_ratio` times the (K−1)→K drop). The positivity gate
/// matters: without it a count whose own BIC step is a regression could
/// still "elbow" because the ratio comparison is meaningless for
/// negative drops. The recommendation is the largest candidate: every
/// smaller count leaves substantial fit on the table, every larger one
/// adds classes that are small, poorly separated, or unsupported by the
/// tests. With no candidates, a non-significant K=2 test recommends the
/// one-class model; otherwise no recommendation is made.
pub fn recommend(rows: &[FitRow], opts: &EnumerationOptions) -> (Option<usize>, Vec<String>) {
    let mut rationale = Vec::new();
    let k_max = rows.len();
    let bic_drop = |k: usize| -> Option<f64> {
        // Drop achieved moving from K-1 to K classes (1-based K).
        if k >= 2 && k <= k_max {
            Some(rows[k - 2].bic - rows[k - 1].bic)
        } else {
            None
        }
    };
    let mut candidates = Vec::new();
    for row in rows.iter().filter(|r| r.k >= 2) {
        let k = row.k;
        let entropy_ok = row.entropy.map(|e| e >= opts.entropy_min).unwrap_or(false);
        let share_ok = row.min_share >= opts.share_floor;
        let tests_ok = row.vlmr_p.map(|p| p <= opts.alpha).unwrap_or(false)
            && row.blrt_p.map(|p| p <= opts.alpha).unwrap_or(true);
        let improves = bic_drop(k).map(|d| d > 0.0).unwrap_or(false);
        let elbow = match (bic_drop(k), bic_drop(k + 1)) {
            (Some(prev), Some(next)) => next < opts.elbow_ratio * prev,
            _ => false,
        };
        let verdicts = format!(
            "K={k}: entropy {} ({}), min share {} ({:.3}), tests {} BIC {}, elbow {} (drop to K {}, drop past K {})",
            if entropy_ok { "ok" } else { "low" },
            row.entropy.map_or("n/a".into(), |e| format!("{e:.3}")),
            if share_ok { "ok" } else { "low" },
            row.min_share,
            if tests_ok { "significant," } else { "not significant," },
            if improves { "improves" } else { "worsens" },
            if elbow { "fires" } else { "quiet" },
            bic_drop(k).map_or("n/a".into(), |d| format!("{d:.1}")),
            bic_drop(k + 1).map_or("n/a".into(), |d| format!("{d:.1}")),
        );
        rationale.push(verdicts);
        if entropy_ok && share_ok && tests_ok && improves && elbow {
            candidates.push(k);
        }
    }
    let recommended = if let Some(&k) = candidates.iter().max() {
        rationale.push(format!(
            "candidates {candidates:?}; recommending the largest, K={k}"
        ));
        Some(k)
    } else if rows.len() >= 2 {
        let two = &rows[1];
        let two_insignificant = two.vlmr_p.map(|p| p > opts.alpha).unwrap_or(false)
            && two.blrt_p.map(|p| p > opts.alpha).unwrap_or(true);
        if two_insignificant {
            rationale.push(
                "no candidates and the 2-class tests are not significant; recommending K=1".into(),
            );
            Some(1)
        } else {
            rationale.push(
                "no class count meets all criteria; no recommendation (inspect the table)".into(),
            );
            None
        }
    } else {
        rationale.push(
            "only the one-class model was fitted; nothing to compare, no recommendation".into(),
        );
        None
    };
    (recommended, rationale)
}
