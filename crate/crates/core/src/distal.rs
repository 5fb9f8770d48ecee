//! Classification-error-corrected distal-outcome analysis.
//!
//! Modal assignment misclassifies a share of respondents, which attenuates
//! class differences in outcome means. The BCH correction reweights each
//! respondent by the inverse classification-error matrix so the corrected
//! class means are consistent despite modal misclassification. Naive and
//! ML three-step estimators are provided as comparators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::SurveyDataset;
use crate::error::{Error, Result};
use crate::lca::PosteriorMatrix;

/// Condition numbers of D above this abort the BCH correction.
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e6;

/// D[k][m]: weighted average posterior of class m among respondents
/// modally assigned to class k. Rows sum to 1; the diagonal holds the
/// per-class assignment accuracies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationErrorMatrix {
    pub d: Vec<Vec<f64>>,
    /// Respondents modally assigned to each class.
    pub counts: Vec<usize>,
    /// Summed weights of respondents assigned to each class.
    pub assigned_weight: Vec<f64>,
}

impl ClassificationErrorMatrix {
    pub fn k(&self) -> usize {
        self.d.len()
    }

    pub fn average_diagonal(&self) -> f64 {
        let k = self.k();
        (0..k).map(|i| self.d[i][i]).sum::<f64>() / k as f64
    }
}

/// Computes the classification error matrix from posteriors and weights.
pub fn error_matrix(
    post: &PosteriorMatrix,
    weights: &[f64],
) -> Result<ClassificationErrorMatrix> {
    let k = post.k;
    if k < 2 {
        return Err(Error::Invalid("need K >= 2".into()));
    }
    if weights.len() != post.n() {
        return Err(Error::Invalid("weights length differs from posteriors".into()));
    }
    let mut d = vec![vec![0.0f64; k]; k];
    let mut counts = vec![0usize; k];
    let mut assigned_weight = vec![0.0f64; k];
    for i in 0..post.n() {
        let c = post.modal[i];
        let w = weights[i];
        counts[c] += 1;
        assigned_weight[c] += w;
        for (m, &p) in post.row(i).iter().enumerate() {
            d[c][m] += w * p;
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            return Err(Error::EmptyClass { class: c + 1 });
        }
        for m in 0..k {
            d[c][m] /= assigned_weight[c];
        }
    }
    Ok(ClassificationErrorMatrix { d, counts, assigned_weight })
}

/// Correction weights W for the composite-weight estimator
/// u_ik = w_i·W[k][Ĉ_i].
///
/// W inverts the assignment table M[s][t] = P(Ĉ=s | C=t), obtained from
/// the stored error matrix by Bayes inversion (the same auxiliary table
/// the ML three-step estimator fixes): M[s][t] = A_s·D[s][t] / Σ_s A_s·D[s][t]
/// with A the assigned weight masses. Inverting the row-normalized D
/// directly would weight each assigned class by its share twice, biasing
/// the corrected means and breaking the identity that per-class composite
/// masses reproduce the model prevalences; inverting M makes both exact.
/// Off-diagonal entries of W are negative whenever classification is
/// imperfect; that is expected and required for the correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BchWeights {
    pub w: Vec<Vec<f64>>,
    pub condition_number: f64,
}

pub fn bch_weights(
    d: &ClassificationErrorMatrix,
    condition_limit: f64,
) -> Result<BchWeights> {
    let k = d.k();
    // Joint mass of (assigned s, latent t), column-normalized so that
    // M[s][t] = P(assigned = s | latent = t).
    let mut col_mass = vec![0.0f64; k];
    for s in 0..k {
        for t in 0..k {
            col_mass[t] += d.assigned_weight[s] * d.d[s][t];
        }
    }
    for (t, &mass) in col_mass.iter().enumerate() {
        if mass <= 0.0 {
            return Err(Error::EmptyClass { class: t + 1 });
        }
    }
    let mat = DMatrix::from_fn(k, k, |s, t| d.assigned_weight[s] * d.d[s][t] / col_mass[t]);
    let svd = mat.clone().svd(false, false);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let condition_number = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if condition_number > condition_limit {
        return Err(Error::IllConditioned(condition_number));
    }
    let inv = mat
        .try_inverse()
        .ok_or(Error::IllConditioned(f64::INFINITY))?;
    let w = (0..k)
        .map(|r| (0..k).map(|c| inv[(r, c)]).collect())
        .collect();
    Ok(BchWeights { w, condition_number })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaldTest {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairwiseRow {
    /// 0-based class indices, a < b.
    pub class_a: usize,
    pub class_b: usize,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub raw_p: f64,
    pub reject: bool,
}

/// BCH-corrected class means for one distal outcome with sandwich
/// covariance; the omnibus and pairwise tests are filled by
/// [`wald_equality_test`] and [`pairwise_holm`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistalResult {
    pub outcome_id: String,
    pub class_means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub n_used: usize,
    pub wald: Option<WaldTest>,
    pub pairwise: Vec<PairwiseRow>,
}

/// Estimates μ̂_k = Σ_i u_ik z_i / Σ_i u_ik with composite weights
/// u_ik = w_i W[k][Ĉ_i]. Rows missing the outcome are dropped pairwise.
///
/// The covariance is the influence-function linearization of the ratio
/// means: ψ_ik = u_ik (z_i − μ̂_k) / Σ_i u_ik and
/// Σ̂[k][m] = Σ_i ψ_ik ψ_im, which also yields the off-diagonal terms the
/// pairwise contrasts need.
pub fn bch_class_means(
    dataset: &SurveyDataset,
    outcome_id: &str,
    post: &PosteriorMatrix,
    w: &BchWeights,
) -> Result<DistalResult> {
    let col = dataset.item_index(outcome_id)?;
    let k = post.k;
    if post.n() != dataset.n() {
        return Err(Error::Invalid("posteriors do not match dataset rows".into()));
    }
    let mut rows = Vec::new();
    for i in 0..dataset.n() {
        if let Some(v) = dataset.value(i, col) {
            rows.push((i, v as f64));
        }
    }
    if rows.is_empty() {
        return Err(Error::Invalid(format!("outcome {outcome_id:?} has no observed values")));
    }
    let total_w: f64 = rows.iter().map(|&(i, _)| dataset.weights[i]).sum();

    let mut num = vec![0.0f64; k];
    let mut den = vec![0.0f64; k];
    for &(i, z) in &rows {
        let wi = dataset.weights[i];
        let c = post.modal[i];
        for kk in 0..k {
            let u = wi * w.w[kk][c];
            num[kk] += u * z;
            den[kk] += u;
        }
    }
    let mut class_means = vec![0.0f64; k];
    for kk in 0..k {
        if den[kk].abs() < 1e-10 * total_w {
            return Err(Error::Estimation(format!(
                "BCH composite weight mass for class {} vanishes",
                kk + 1
            )));
        }
        class_means[kk] = num[kk] / den[kk];
    }

    let mut cov = vec![vec![0.0f64; k]; k];
    let mut psi = vec![0.0f64; k];
    for &(i, z) in &rows {
        let wi = dataset.weights[i];
        let c = post.modal[i];
        for kk in 0..k {
            let u = wi * w.w[kk][c];
            psi[kk] = u * (z - class_means[kk]) / den[kk];
        }
        for a in 0..k {
            for b in 0..k {
                cov[a][b] += psi[a] * psi[b];
            }
        }
    }
    let std_errors = (0..k).map(|kk| cov[kk][kk].max(0.0).sqrt()).collect();
    Ok(DistalResult {
        outcome_id: outcome_id.to_string(),
        class_means,
        std_errors,
        cov,
        n_used: rows.len(),
        wald: None,
        pairwise: Vec::new(),
    })
}

/// Omnibus Wald test of H0: μ_1 = … = μ_K using the successive-difference
/// contrast; the statistic is invariant to the choice of full-rank
/// contrast. Returns an error when the contrast covariance is singular
/// (p is then reported as absent by the caller).
pub fn wald_equality_test(result: &DistalResult) -> Result<WaldTest> {
    let k = result.class_means.len();
    if k < 2 {
        return Err(Error::Invalid("need K >= 2".into()));
    }
    let df = k - 1;
    // C μ and C Σ Cᵀ under successive differences: d_i = μ_i − μ_{i+1}.
    let d = DMatrix::from_fn(df, 1, |r, _| result.class_means[r] - result.class_means[r + 1]);
    let v = DMatrix::from_fn(df, df, |r, c| {
        result.cov[r][c] - result.cov[r][c + 1] - result.cov[r + 1][c] + result.cov[r + 1][c + 1]
    });
    let lu = v.lu();
    let solved = lu
        .solve(&d)
        .ok_or_else(|| Error::Estimation("contrast covariance is singular".into()))?;
    let chi2 = (d.transpose() * solved)[(0, 0)].max(0.0);
    Ok(WaldTest {
        chi2,
        df,
        p: crate::dataset::chi_sq_sf(chi2, df as f64),
    })
}

/// Holm step-down decisions for pre-sorted raw p-values: reject the
/// i-th smallest (0-based) while p_(i) <= alpha / (m - i).
pub fn holm_decisions(raw_p: &[f64], alpha: f64) -> Vec<bool> {
    let m = raw_p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| raw_p[a].total_cmp(&raw_p[b]));
    let mut reject = vec![false; m];
    for (i, &idx) in order.iter().enumerate() {
        if raw_p[idx] <= alpha / (m - i) as f64 {
            reject[idx] = true;
        } else {
            break;
        }
    }
    reject
}

/// All K(K-1)/2 pairwise z-tests on class mean differences with Holm
/// step-down control of the family-wise error rate.
pub fn pairwise_holm(result: &DistalResult, alpha: f64) -> Result<Vec<PairwiseRow>> {
    let k = result.class_means.len();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut rows = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in (a + 1)..k {
            let estimate = result.class_means[a] - result.class_means[b];
            let var = result.cov[a][a] + result.cov[b][b] - 2.0 * result.cov[a][b];
            if var <= 0.0 {
                if estimate == 0.0 {
                    rows.push(PairwiseRow {
                        class_a: a,
                        class_b: b,
                        estimate,
                        se: 0.0,
                        z: 0.0,
                        raw_p: 1.0,
                        reject: false,
                    });
                    continue;
                }
                return Err(Error::Estimation(format!(
                    "nonpositive contrast variance for classes {} and {}",
                    a + 1,
                    b + 1
                )));
            }
            let se = var.sqrt();
            let z = estimate / se;
            let raw_p = 2.0 * (1.0 - normal.cdf(z.abs()));
            rows.push(PairwiseRow {
                class_a: a,
                class_b: b,
                estimate,
                se,
                z,
                raw_p: raw_p.clamp(0.0, 1.0),
                reject: false,
            });
        }
    }
    let decisions = holm_decisions(&rows.iter().map(|r| r.raw_p).collect::<Vec<_>>(), alpha);
    for (row, reject) in rows.iter_mut().zip(decisions) {
        row.reject = reject;
    }
    Ok(rows)
}

/// Ordinary weighted outcome means within modal classes; the attenuation
/// comparator for the BCH estimates.
pub fn naive_means(
    dataset: &SurveyDataset,
    outcome_id: &str,
    modal: &[usize],
    k: usize,
) -> Result<Vec<f64>> {
    let col = dataset.item_index(outcome_id)?;
    if modal.len() != dataset.n() {
        return Err(Error::Invalid("modal length differs from dataset rows".into()));
    }
    let mut num = vec![0.0f64; k];
    let mut den = vec![0.0f64; k];
    for i in 0..dataset.n() {
        if let Some(v) = dataset.value(i, col) {
            let w = dataset.weights[i];
            num[modal[i]] += w * v as f64;
            den[modal[i]] += w;
        }
    }
    for kk in 0..k {
        if den[kk] <= 0.0 {
            return Err(Error::EmptyClass { class: kk + 1 });
        }
    }
    Ok((0..k).map(|kk| num[kk] / den[kk]).collect())
}

/// ML three-step estimator: EM on the auxiliary model where the modal
/// class is a single indicator with fixed classification probabilities
/// P(Ĉ = c | T = t) derived from D and the assigned weight shares, and
/// the outcome is class-conditional normal. Returns the class-specific
/// outcome means.
pub fn ml_three_step_means(
    dataset: &SurveyDataset,
    outcome_id: &str,
    post: &PosteriorMatrix,
    d: &ClassificationErrorMatrix,
) -> Result<Vec<f64>> {
    let col = dataset.item_index(outcome_id)?;
    let k = post.k;
    let mut rows = Vec::new();
    for i in 0..dataset.n() {
        if let Some(v) = dataset.value(i, col) {
            rows.push((dataset.weights[i], post.modal[i], v as f64));
        }
    }
    if rows.is_empty() {
        return Err(Error::Invalid(format!("outcome {outcome_id:?} has no observed values")));
    }

    // Q[t][c] = P(Ĉ=c | T=t) by Bayes inversion of D with the weighted
    // assigned masses; exactly the identity when classification is crisp.
    let mut q = vec![vec![0.0f64; k]; k];
    for t in 0..k {
        let mut denom = 0.0;
        for c in 0..k {
            q[t][c] = d.assigned_weight[c] * d.d[c][t];
            denom += q[t][c];
        }
        if denom <= 0.0 {
            return Err(Error::EmptyClass { class: t + 1 });
        }
        for c in 0..k {
            q[t][c] /= denom;
        }
    }

    // Initialize at the naive solution.
    let mut mu = naive_means(dataset, outcome_id, &post.modal, k)?;
    let grand_var = {
        let wsum: f64 = rows.iter().map(|r| r.0).sum();
        let mean: f64 = rows.iter().map(|r| r.0 * r.2).sum::<f64>() / wsum;
        let var: f64 = rows.iter().map(|r| r.0 * (r.2 - mean) * (r.2 - mean)).sum::<f64>() / wsum;
        var.max(1e-12)
    };
    let mut sigma2 = vec![grand_var; k];
    let mut pi: Vec<f64> = {
        let wsum: f64 = rows.iter().map(|r| r.0).sum();
        let mut shares = vec![0.0f64; k];
        for &(w, c, _) in &rows {
            shares[c] += w;
        }
        shares.iter().map(|s| s / wsum).collect()
    };
    let sigma_floor = grand_var * 1e-8;

    let max_iter = 1000;
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..max_iter {
        // E step.
        let mut ll = 0.0;
        let mut resp = vec![0.0f64; rows.len() * k];
        for (i, &(w, c, z)) in rows.iter().enumerate() {
            let mut total = 0.0;
            for t in 0..k {
                let diff = z - mu[t];
                let dens = (-0.5 * diff * diff / sigma2[t]).exp()
                    / (2.0 * std::f64::consts::PI * sigma2[t]).sqrt();
                let val = pi[t] * q[t][c] * dens;
                resp[i * k + t] = val;
                total += val;
            }
            if total <= 0.0 {
                return Err(Error::Estimation(
                    "ML three-step responsibility underflow".into(),
                ));
            }
            for t in 0..k {
                resp[i * k + t] /= total;
            }
            ll += w * total.ln();
        }
        if prev.is_finite() && (ll - prev).abs() / (ll.abs() + 1.0) < 1e-10 {
            return Ok(mu);
        }
        prev = ll;
        // M step.
        let mut mass = vec![0.0f64; k];
        let mut zsum = vec![0.0f64; k];
        for (i, &(w, _, z)) in rows.iter().enumerate() {
            for t in 0..k {
                let r = w * resp[i * k + t];
                mass[t] += r;
                zsum[t] += r * z;
            }
        }
        let total_mass: f64 = mass.iter().sum();
        for t in 0..k {
            if mass[t] <= 0.0 {
                return Err(Error::EmptyClass { class: t + 1 });
            }
            mu[t] = zsum[t] / mass[t];
            pi[t] = mass[t] / total_mass;
        }
        let mut ssq = vec![0.0f64; k];
        for (i, &(w, _, z)) in rows.iter().enumerate() {
            for t in 0..k {
                let diff = z - mu[t];
                ssq[t] += w * resp[i * k + t] * diff * diff;
            }
        }
        for t in 0..k {
            sigma2[t] = (ssq[t] / mass[t]).max(sigma_floor);
        }
    }
    Err(Error::NonConvergence { max_iter })
}
