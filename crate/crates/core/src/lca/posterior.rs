//! Posterior class probabilities, modal assignment, and entropy.

use serde::{Deserialize, Serialize};

use crate::dataset::SurveyDataset;
use crate::error::{Error, Result};
use crate::lca::em::Patterns;
use crate::lca::num::logsumexp;
use crate::lca::LcaModel;

/// Per-respondent posterior class probabilities p̂_ik with modal
/// assignments (ties broken to the lowest class index).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorMatrix {
    pub k: usize,
    /// Row-major n x K probabilities; each row sums to 1.
    pub probs: Vec<f64>,
    pub modal: Vec<usize>,
    pub max_prob: Vec<f64>,
}

impl PosteriorMatrix {
    pub fn n(&self) -> usize {
        self.modal.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.k..(i + 1) * self.k]
    }

    /// Builds a matrix from explicit rows, normalizing nothing; rows must
    /// already sum to 1. Used by tests and the crisp-assignment fixtures.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<PosteriorMatrix> {
        let k = rows.first().map(|r| r.len()).unwrap_or(0);
        if k == 0 {
            return Err(Error::Invalid("empty posterior rows".into()));
        }
        let mut probs = Vec::with_capacity(rows.len() * k);
        for row in rows {
            if row.len() != k {
                return Err(Error::Invalid("ragged posterior rows".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-10 {
                return Err(Error::Invalid(format!("posterior row sums to {sum}")));
            }
            probs.extend_from_slice(row);
        }
        Ok(finalize(probs, k))
    }
}

fn finalize(probs: Vec<f64>, k: usize) -> PosteriorMatrix {
    let n = probs.len() / k;
    let mut modal = Vec::with_capacity(n);
    let mut max_prob = Vec::with_capacity(n);
    for i in 0..n {
        let row = &probs[i * k..(i + 1) * k];
        let mut best = 0usize;
        for (kk, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = kk;
            }
        }
        modal.push(best);
        max_prob.push(row[best]);
    }
    PosteriorMatrix { k, probs, modal, max_prob }
}

/// Posterior membership probabilities under `model` for every respondent:
/// p̂_ik ∝ π_k Π_j ρ[j][y_ij][k], computed in log space and normalized
/// per row.
pub fn posteriors(model: &LcaModel, dataset: &SurveyDataset) -> Result<PosteriorMatrix> {
    let patterns = Patterns::from_dataset(dataset)?;
    if patterns.cards != model.cardinalities {
        return Err(Error::Invalid(
            "model items do not match dataset indicator schema".into(),
        ));
    }
    posteriors_patterns(model, &patterns)
}

pub(crate) fn posteriors_patterns(
    model: &LcaModel,
    patterns: &Patterns,
) -> Result<PosteriorMatrix> {
    let k = model.k;
    let ln_pi: Vec<f64> = model.prevalences.iter().map(|&p| p.ln()).collect();
    let ln_rho: Vec<Vec<Vec<f64>>> = model
        .item_probs
        .iter()
        .map(|item| {
            item.iter()
                .map(|row| row.iter().map(|&p| p.ln()).collect())
                .collect()
        })
        .collect();
    let mut per_pattern = vec![0.0f64; patterns.len() * k];
    let mut s = vec![0.0f64; k];
    for p in 0..patterns.len() {
        s.copy_from_slice(&ln_pi);
        for (j, &code) in patterns.pattern(p).iter().enumerate() {
            let lr = &ln_rho[j][code as usize - 1];
            for (sk, &l) in s.iter_mut().zip(lr) {
                *sk += l;
            }
        }
        let m = logsumexp(&s);
        for (kk, &sk) in s.iter().enumerate() {
            per_pattern[p * k + kk] = (sk - m).exp();
        }
    }
    let mut probs = Vec::with_capacity(patterns.n_rows * k);
    for &p in &patterns.row_pattern {
        probs.extend_from_slice(&per_pattern[p * k..(p + 1) * k]);
    }
    Ok(finalize(probs, k))
}

/// Relative entropy of the classification,
/// E_K = 1 - [Σ_i Σ_k -p̂_ik ln p̂_ik] / (n ln K), with 0·ln 0 = 0.
/// Undefined at K = 1; enumeration tables report 1.0 there by convention.
pub fn entropy(post: &PosteriorMatrix, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::EntropyUndefined);
    }
    if post.k != k {
        return Err(Error::Invalid("posterior width differs from K".into()));
    }
    let n = post.n();
    let mut h = 0.0;
    for i in 0..n {
        for &p in post.row(i) {
            if p > 0.0 {
                h -= p * p.ln();
            }
        }
    }
    Ok(1.0 - h / (n as f64 * (k as f64).ln()))
}
