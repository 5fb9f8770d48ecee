//! Sensitivity and stability checks for a fitted class solution.
//!
//! Every check reduces to the same question: does the substantive class
//! structure survive a perturbation (dropping an indicator, splitting the
//! sample, changing the random starts, swapping the distal estimator)?
//! Profile similarity is measured with Tucker's congruence coefficient
//! after optimally matching class labels, because class order is not
//! identified across fits.

use serde::{Deserialize, Serialize};

use crate::dataset::{Role, SurveyDataset};
use crate::distal::{
    bch_class_means, bch_weights, error_matrix, ml_three_step_means, naive_means,
    DEFAULT_CONDITION_LIMIT,
};
use crate::error::{Error, Result};
use crate::lca::{fit_lca, posteriors, EmConfig, LcaModel, PosteriorMatrix};
use crate::rng;

/// Classes with matched profiles are considered recovered at or above
/// this congruence.
pub const DEFAULT_PHI_THRESHOLD: f64 = 0.85;
/// Minimum class share used when judging whether a refit recovers all
/// K classes.
pub const DEFAULT_SHARE_FLOOR: f64 = 0.05;
/// Best log-likelihoods across start counts should agree within this.
pub const DEFAULT_LL_RANGE_TOL: f64 = 1e-3;
/// Label matching enumerates all K! permutations; beyond this K the
/// factorial blows up and the caller gets an explicit guard error.
const MAX_MATCH_K: usize = 9;

/// Tucker's congruence coefficient φ(x, y) = Σxy / sqrt(Σx² · Σy²).
///
/// Computed with a single square root so that φ(x, x) is exactly 1.0
/// in floating point.
pub fn tucker_phi(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "profiles must have equal length");
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Flattened response-probability profile of one class restricted to the
/// given item ids (in the order given).
fn profile_on_items(model: &LcaModel, items: &[String], class: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for id in items {
        let j = model
            .item_ids
            .iter()
            .position(|m| m == id)
            .ok_or_else(|| Error::UnknownItem(id.clone()))?;
        for r in 0..model.cardinalities[j] as usize {
            out.push(model.item_probs[j][r][class]);
        }
    }
    Ok(out)
}

fn shared_items(a: &LcaModel, b: &LcaModel) -> Vec<String> {
    a.item_ids
        .iter()
        .filter(|id| b.item_ids.contains(id))
        .cloned()
        .collect()
}

/// φ[i][j] between reference class i and candidate class j over the
/// models' shared items.
fn phi_matrix(reference: &LcaModel, candidate: &LcaModel) -> Result<Vec<Vec<f64>>> {
    if reference.k != candidate.k {
        return Err(Error::Invalid("models have different numbers of classes".into()));
    }
    let items = shared_items(reference, candidate);
    if items.is_empty() {
        return Err(Error::Invalid("models share no items".into()));
    }
    let k = reference.k;
    let ref_profiles: Vec<Vec<f64>> = (0..k)
        .map(|c| profile_on_items(reference, &items, c))
        .collect::<Result<_>>()?;
    let cand_profiles: Vec<Vec<f64>> = (0..k)
        .map(|c| profile_on_items(candidate, &items, c))
        .collect::<Result<_>>()?;
    Ok((0..k)
        .map(|i| (0..k).map(|j| tucker_phi(&ref_profiles[i], &cand_profiles[j])).collect())
        .collect())
}

/// Exhaustive search over permutations for the assignment maximizing the
/// total congruence. Returns perm (perm[i] = candidate class matched to
/// reference class i) and the per-class φ under that matching.
pub(crate) fn best_permutation(phi: &[Vec<f64>]) -> Result<(Vec<usize>, Vec<f64>)> {
    let k = phi.len();
    if k > MAX_MATCH_K {
        return Err(Error::Guard(format!(
            "label matching enumerates K! permutations; K={k} exceeds the K<={MAX_MATCH_K} guard"
        )));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut perm: Vec<usize> = (0..k).collect();
    // Recursion-free Heap's algorithm over the candidate indices.
    let mut c = vec![0usize; k];
    let score = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| phi[i][j]).sum::<f64>();
    let consider = |best: &mut Option<(f64, Vec<usize>)>, p: &[usize], s: f64| {
        let better = match best {
            None => true,
            Some((bs, bp)) => s > *bs + 1e-15 || ((s - *bs).abs() <= 1e-15 && p < bp.as_slice()),
        };
        if better {
            *best = Some((s, p.to_vec()));
        }
    };
    consider(&mut best, &perm, score(&perm));
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            consider(&mut best, &perm, score(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    let (_, p) = best.expect("at least the identity permutation");
    let per_class = (0..k).map(|i| phi[i][p[i]]).collect();
    Ok((p, per_class))
}

/// Optimal label matching between two fitted models. Returns the
/// permutation (candidate class matched to each reference class) and the
/// mean per-class congruence under it.
pub fn match_profiles(reference: &LcaModel, candidate: &LcaModel) -> Result<(Vec<usize>, f64)> {
    let phi = phi_matrix(reference, candidate)?;
    let (perm, per_class) = best_permutation(&phi)?;
    let mean = per_class.iter().sum::<f64>() / per_class.len() as f64;
    Ok((perm, mean))
}

/// Per-class congruence between two solutions after optimal matching.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Congruence {
    /// matching[i] = candidate class matched to reference class i.
    pub matching: Vec<usize>,
    pub per_class_phi: Vec<f64>,
    pub mean_phi: f64,
    pub min_phi: f64,
}

pub fn congruence(reference: &LcaModel, candidate: &LcaModel) -> Result<Congruence> {
    let phi = phi_matrix(reference, candidate)?;
    let (matching, per_class_phi) = best_permutation(&phi)?;
    let mean_phi = per_class_phi.iter().sum::<f64>() / per_class_phi.len() as f64;
    let min_phi = per_class_phi.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Congruence { matching, per_class_phi, mean_phi, min_phi })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LooRow {
    pub omitted: String,
    pub converged: bool,
    /// max_k |π̂_k(full) − π̂_matched(k)(refit)|.
    pub max_prevalence_shift: f64,
    pub min_share: f64,
    pub mean_phi: f64,
    pub all_classes_recovered: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LooReport {
    pub rows: Vec<LooRow>,
    pub max_shift: f64,
    pub all_recovered: bool,
}

/// Refits the model dropping each indicator in turn and compares the
/// matched prevalences against the full-model fit.
pub fn leave_one_out(
    dataset: &SurveyDataset,
    k: usize,
    config: &EmConfig,
    seed: u64,
) -> Result<LooReport> {
    let indicators = dataset.items_with_role(Role::Indicator);
    if indicators.len() < 3 {
        return Err(Error::Invalid(
            "leave-one-out needs at least three indicators".into(),
        ));
    }
    let full = fit_lca(dataset, k, config, seed)?;
    let mut rows = Vec::with_capacity(indicators.len());
    for (pos, &col) in indicators.iter().enumerate() {
        let keep: Vec<usize> = indicators.iter().cloned().filter(|&c| c != col).collect();
        let sub = dataset.subset_items(&keep);
        let refit = fit_lca(&sub, k, config, rng::derive(seed, pos as u64 + 1))?;
        let (perm, mean_phi) = match_profiles(&full, &refit)?;
        let max_prevalence_shift = (0..k)
            .map(|i| (full.prevalences[i] - refit.prevalences[perm[i]]).abs())
            .fold(0.0f64, f64::max);
        let min_share = refit.prevalences.iter().cloned().fold(f64::INFINITY, f64::min);
        rows.push(LooRow {
            omitted: dataset.item(col).item_id.clone(),
            converged: refit.converged,
            max_prevalence_shift,
            min_share,
            mean_phi,
            all_classes_recovered: min_share >= DEFAULT_SHARE_FLOOR,
        });
    }
    let max_shift = rows.iter().map(|r| r.max_prevalence_shift).fold(0.0f64, f64::max);
    let all_recovered = rows.iter().all(|r| r.all_classes_recovered);
    Ok(LooReport { rows, max_shift, all_recovered })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub item_id: String,
    pub level_a: u8,
    pub level_b: u8,
    pub n_a: usize,
    pub n_b: usize,
    pub matching: Vec<usize>,
    pub per_class_phi: Vec<f64>,
    pub mean_phi: f64,
    pub min_phi: f64,
    pub pass: bool,
}

/// Fits the class model separately within two levels of a grouping item
/// and reports the profile congruence between the subgroup solutions
/// (configural similarity). Passing requires mean φ at or above the
/// threshold; the minimum is always reported alongside.
pub fn subgroup_invariance(
    dataset: &SurveyDataset,
    item_id: &str,
    level_a: u8,
    level_b: u8,
    k: usize,
    config: &EmConfig,
    seed: u64,
    threshold: f64,
) -> Result<InvarianceReport> {
    let col = dataset.item_index(item_id)?;
    let split = |level: u8| -> Vec<usize> {
        (0..dataset.n())
            .filter(|&i| dataset.value(i, col) == Some(level))
            .collect()
    };
    let rows_a = split(level_a);
    let rows_b = split(level_b);
    if rows_a.is_empty() || rows_b.is_empty() {
        return Err(Error::Invalid(format!(
            "subgroup split on {item_id:?} leaves an empty group"
        )));
    }
    let sub_a = dataset.subset_rows(&rows_a);
    let sub_b = dataset.subset_rows(&rows_b);
    let model_a = fit_lca(&sub_a, k, config, rng::derive(seed, 1))?;
    let model_b = fit_lca(&sub_b, k, config, rng::derive(seed, 2))?;
    let cong = congruence(&model_a, &model_b)?;
    Ok(InvarianceReport {
        item_id: item_id.to_string(),
        level_a,
        level_b,
        n_a: rows_a.len(),
        n_b: rows_b.len(),
        matching: cong.matching,
        per_class_phi: cong.per_class_phi,
        mean_phi: cong.mean_phi,
        min_phi: cong.min_phi,
        pass: cong.mean_phi >= threshold,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub start_counts: Vec<usize>,
    pub best_loglik: Vec<f64>,
    /// max − min of the best log-likelihoods across start counts.
    pub loglik_range: f64,
    /// Max |Δπ̂| between each solution and the largest-count solution
    /// after matching.
    pub max_prevalence_shift: f64,
}

/// Refits with increasing numbers of random starts. Start seeds are
/// derived per start index from the same base seed, so each larger count
/// strictly extends the smaller one's start set and the best
/// log-likelihood is monotone in the count.
pub fn start_stability(
    dataset: &SurveyDataset,
    k: usize,
    start_counts: &[usize],
    config: &EmConfig,
    seed: u64,
) -> Result<StabilityReport> {
    if start_counts.is_empty() {
        return Err(Error::Invalid("need at least one start count".into()));
    }
    let mut counts = start_counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    let mut models = Vec::with_capacity(counts.len());
    for &c in &counts {
        if c == 0 {
            return Err(Error::Invalid("start count must be positive".into()));
        }
        let cfg = EmConfig {
            n_starts: c,
            n_best: config.n_best.min(c),
            ..config.clone()
        };
        models.push(fit_lca(dataset, k, &cfg, seed)?);
    }
    let best_loglik: Vec<f64> = models.iter().map(|m| m.loglik).collect();
    let max_ll = best_loglik.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_ll = best_loglik.iter().cloned().fold(f64::INFINITY, f64::min);
    let reference = models.last().expect("nonempty");
    let mut max_prevalence_shift = 0.0f64;
    for m in &models {
        let (perm, _) = match_profiles(reference, m)?;
        for i in 0..k {
            max_prevalence_shift =
                max_prevalence_shift.max((reference.prevalences[i] - m.prevalences[perm[i]]).abs());
        }
    }
    Ok(StabilityReport {
        start_counts: counts,
        best_loglik,
        loglik_range: max_ll - min_ll,
        max_prevalence_shift,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorRow {
    pub outcome_id: String,
    pub bch: Vec<f64>,
    pub bch_se: Vec<f64>,
    pub naive: Vec<f64>,
    pub ml_three_step: Vec<f64>,
    pub max_naive_gap: f64,
    pub max_ml_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub rows: Vec<EstimatorRow>,
    pub max_naive_gap: f64,
    pub max_ml_gap: f64,
}

/// Runs all three distal estimators (BCH, naive modal, ML three-step) on
/// each outcome and reports the largest absolute disagreements with BCH.
pub fn estimator_check(
    dataset: &SurveyDataset,
    model: &LcaModel,
    outcome_ids: &[String],
) -> Result<EstimatorReport> {
    let post = posteriors(model, dataset)?;
    estimator_check_with(dataset, &post, outcome_ids)
}

pub fn estimator_check_with(
    dataset: &SurveyDataset,
    post: &PosteriorMatrix,
    outcome_ids: &[String],
) -> Result<EstimatorReport> {
    let d = error_matrix(post, &dataset.weights)?;
    let w = bch_weights(&d, DEFAULT_CONDITION_LIMIT)?;
    let mut rows = Vec::with_capacity(outcome_ids.len());
    for id in outcome_ids {
        let bch = bch_class_means(dataset, id, post, &w)?;
        let naive = naive_means(dataset, id, &post.modal, post.k)?;
        let ml = ml_three_step_means(dataset, id, post, &d)?;
        let max_naive_gap = bch
            .class_means
            .iter()
            .zip(&naive)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let max_ml_gap = bch
            .class_means
            .iter()
            .zip(&ml)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        rows.push(EstimatorRow {
            outcome_id: id.clone(),
            bch: bch.class_means,
            bch_se: bch.std_errors,
            naive,
            ml_three_step: ml,
            max_naive_gap,
            max_ml_gap,
        });
    }
    let max_naive_gap = rows.iter().map(|r| r.max_naive_gap).fold(0.0f64, f64::max);
    let max_ml_gap = rows.iter().map(|r| r.max_ml_gap).fold(0.0f64, f64::max);
    Ok(EstimatorReport { rows, max_naive_gap, max_ml_gap })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub detail: String,
}

/// Bundle of all robustness checks with one pass/fail verdict per check.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct RobustnessReport {
    pub leave_one_out: Option<LooReport>,
    pub stability: Option<StabilityReport>,
    pub invariance: Vec<InvarianceReport>,
    pub estimator: Option<EstimatorReport>,
    pub verdicts: Vec<Verdict>,
}

impl RobustnessReport {
    /// Derives the verdict list from whichever checks were run.
    pub fn summarize(&mut self) {
        let mut v = Vec::new();
        if let Some(loo) = &self.leave_one_out {
            v.push(Verdict {
                check: "leave_one_out".into(),
                pass: loo.all_recovered,
                detail: format!(
                    "max prevalence shift {:.3}; all classes recovered: {}",
                    loo.max_shift, loo.all_recovered
                ),
            });
        }
        if let Some(st) = &self.stability {
            v.push(Verdict {
                check: "start_stability".into(),
                pass: st.loglik_range.abs() <= DEFAULT_LL_RANGE_TOL,
                detail: format!("log-likelihood range {:.3}", st.loglik_range),
            });
        }
        for inv in &self.invariance {
            v.push(Verdict {
                check: format!("invariance[{}:{} vs {}]", inv.item_id, inv.level_a, inv.level_b),
                pass: inv.pass,
                detail: format!("mean phi {:.3}, min phi {:.3}", inv.mean_phi, inv.min_phi),
            });
        }
        if let Some(est) = &self.estimator {
            v.push(Verdict {
                check: "estimator_agreement".into(),
                pass: true,
                detail: format!(
                    "max |naive-BCH| {:.3}, max |ML3-BCH| {:.3}",
                    est.max_naive_gap, est.max_ml_gap
                ),
            });
        }
        self.verdicts = v;
    }
}
