//! EM estimation on collapsed response patterns.
//!
//! Identical indicator rows are collapsed into patterns carrying summed
//! weights; the E and M steps then cost
//! O(n_patterns * K * J) per iteration. All loops run in a fixed order so
//! repeated runs produce bit-identical results.

use crate::dataset::{Role, SurveyDataset};
use crate::error::{Error, Result};
use crate::lca::num::{logsumexp, KahanSum};

/// Collapsed indicator patterns. `row_pattern[i]` maps respondent i to
/// the pattern index carrying its codes.
pub(crate) struct Patterns {
    pub codes: Vec<u8>,
    pub weight: Vec<f64>,
    pub row_pattern: Vec<usize>,
    pub j: usize,
    pub cards: Vec<u8>,
    pub total_weight: f64,
    pub n_rows: usize,
}

impl Patterns {
    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn pattern(&self, p: usize) -> &[u8] {
        &self.codes[p * self.j..(p + 1) * self.j]
    }

    /// Collapses the indicator columns of `dataset`. Missing indicator
    /// values violate the estimation precondition and are an error.
    pub fn from_dataset(dataset: &SurveyDataset) -> Result<Patterns> {
        let cols = dataset.items_with_role(Role::Indicator);
        if cols.is_empty() {
            return Err(Error::Invalid("dataset has no indicator items".into()));
        }
        Self::from_columns(dataset, &cols)
    }

    /// Collapses generated unit-weight code rows (parametric bootstrap
    /// replicates are unweighted by design).
    pub fn from_generated(rows: &[Vec<u8>], cards: &[u8]) -> Patterns {
        let j = cards.len();
        let mut index: std::collections::BTreeMap<&[u8], usize> = std::collections::BTreeMap::new();
        let mut codes = Vec::new();
        let mut weight = Vec::new();
        let mut row_pattern = Vec::with_capacity(rows.len());
        for row in rows {
            let next = index.len();
            let p = *index.entry(row.as_slice()).or_insert(next);
            if p == weight.len() {
                codes.extend_from_slice(row);
                weight.push(1.0);
            } else {
                weight[p] += 1.0;
            }
            row_pattern.push(p);
        }
        Patterns {
            codes,
            weight,
            row_pattern,
            j,
            cards: cards.to_vec(),
            total_weight: rows.len() as f64,
            n_rows: rows.len(),
        }
    }

    pub fn from_columns(dataset: &SurveyDataset, cols: &[usize]) -> Result<Patterns> {
        let j = cols.len();
        let cards: Vec<u8> = cols.iter().map(|&c| dataset.item(c).cardinality).collect();
        let mut index: std::collections::BTreeMap<Vec<u8>, usize> = std::collections::BTreeMap::new();
        let mut codes = Vec::new();
        let mut weight = Vec::new();
        let mut row_pattern = Vec::with_capacity(dataset.n());
        let mut total_weight = 0.0;
        for row in 0..dataset.n() {
            let key = dataset.complete_codes(row, cols).ok_or_else(|| {
                Error::Invalid(format!(
                    "row {} has a missing indicator value; apply listwise deletion first",
                    row + 1
                ))
            })?;
            let w = dataset.weights[row];
            total_weight += w;
            let next = index.len();
            let p = *index.entry(key.clone()).or_insert(next);
            if p == weight.len() {
                codes.extend_from_slice(&key);
                weight.push(w);
            } else {
                weight[p] += w;
            }
            row_pattern.push(p);
        }
        Ok(Patterns {
            codes,
            weight,
            row_pattern,
            j,
            cards,
            total_weight,
            n_rows: dataset.n(),
        })
    }
}

/// Mixture parameters; `rho[j][r][k]` is indexed item, category (0-based),
/// class, matching the reported item-response probabilities.
#[derive(Debug, Clone)]
pub(crate) struct Params {
    pub pi: Vec<f64>,
    pub rho: Vec<Vec<Vec<f64>>>,
}

impl Params {
    pub fn k(&self) -> usize {
        self.pi.len()
    }

    pub fn zeros(k: usize, cards: &[u8]) -> Params {
        Params {
            pi: vec![0.0; k],
            rho: cards
                .iter()
                .map(|&r| vec![vec![0.0; k]; r as usize])
                .collect(),
        }
    }
}

/// Weighted log-likelihood at `params`, plus per-pattern posteriors when
/// `post` is provided (filled in place, n_patterns x K row-major).
pub(crate) fn e_step(patterns: &Patterns, params: &Params, mut post: Option<&mut Vec<f64>>) -> f64 {
    let k = params.k();
    let ln_pi: Vec<f64> = params.pi.iter().map(|&p| p.ln()).collect();
    let ln_rho: Vec<Vec<Vec<f64>>> = params
        .rho
        .iter()
        .map(|item| {
            item.iter()
                .map(|row| row.iter().map(|&p| p.ln()).collect())
                .collect()
        })
        .collect();
    let mut ll = KahanSum::new();
    let mut s = vec![0.0f64; k];
    for p in 0..patterns.len() {
        let codes = patterns.pattern(p);
        s.copy_from_slice(&ln_pi);
        for (j, &code) in codes.iter().enumerate() {
            let lr = &ln_rho[j][code as usize - 1];
            for (sk, &l) in s.iter_mut().zip(lr) {
                *sk += l;
            }
        }
        let m = logsumexp(&s);
        ll.add(patterns.weight[p] * m);
        if let Some(post) = post.as_deref_mut() {
            for (kk, &sk) in s.iter().enumerate() {
                post[p * k + kk] = (sk - m).exp();
            }
        }
    }
    ll.value()
}

/// One M step from pattern posteriors. Item-response rows are floored at
/// `rho_floor` and renormalized to keep later logs finite.
pub(crate) fn m_step(patterns: &Patterns, post: &[f64], k: usize, rho_floor: f64) -> Params {
    let mut params = Params::zeros(k, &patterns.cards);
    for p in 0..patterns.len() {
        let w = patterns.weight[p];
        let codes = patterns.pattern(p);
        for kk in 0..k {
            let wp = w * post[p * k + kk];
            params.pi[kk] += wp;
            for (j, &code) in codes.iter().enumerate() {
                params.rho[j][code as usize - 1][kk] += wp;
            }
        }
    }
    let class_mass = params.pi.clone();
    normalize_floor(&mut params.pi, 1e-12);
    for item in params.rho.iter_mut() {
        for kk in 0..k {
            let mass = class_mass[kk].max(f64::MIN_POSITIVE);
            let mut col: Vec<f64> = item.iter().map(|row| row[kk] / mass).collect();
            normalize_floor(&mut col, rho_floor);
            for (row, &v) in item.iter_mut().zip(&col) {
                row[kk] = v;
            }
        }
    }
    params
}

fn normalize_floor(probs: &mut [f64], floor: f64) {
    let mut sum: f64 = probs.iter().sum();
    if sum <= 0.0 {
        let u = 1.0 / probs.len() as f64;
        probs.iter_mut().for_each(|p| *p = u);
        return;
    }
    probs.iter_mut().for_each(|p| *p /= sum);
    if probs.iter().any(|&p| p < floor) {
        probs.iter_mut().for_each(|p| *p = p.max(floor));
        sum = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= sum);
    }
}

pub(crate) struct EmRun {
    pub params: Params,
    pub loglik: f64,
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Runs EM to convergence on relative log-likelihood change
/// |Δℓ| / (|ℓ| + 1) < tol, recording the per-iteration trace. EM cannot
/// decrease the weighted log-likelihood; a drop beyond 1e-9 indicates a
/// numeric defect and is reported as an estimation error.
pub(crate) fn em_converge(
    patterns: &Patterns,
    mut params: Params,
    tol: f64,
    max_iter: usize,
    rho_floor: f64,
) -> Result<EmRun> {
    let k = params.k();
    let mut post = vec![0.0f64; patterns.len() * k];
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    let mut converged = false;
    for _ in 0..max_iter {
        let ll = e_step(patterns, &params, Some(&mut post));
        trace.push(ll);
        if prev.is_finite() {
            if ll < prev - 1e-9 {
                return Err(Error::Estimation(format!(
                    "log-likelihood decreased during EM: {prev} -> {ll}"
                )));
            }
            if (ll - prev).abs() / (ll.abs() + 1.0) < tol {
                converged = true;
                break;
            }
        }
        prev = ll;
        params = m_step(patterns, &post, k, rho_floor);
    }
    let loglik = *trace.last().expect("max_iter > 0");
    Ok(EmRun { params, loglik, trace, converged })
}

/// Burn-in: a fixed number of EM iterations with no convergence check,
/// used to rank random starts cheaply.
pub(crate) fn em_burn_in(
    patterns: &Patterns,
    mut params: Params,
    iters: usize,
    rho_floor: f64,
) -> (Params, f64) {
    let k = params.k();
    let mut post = vec![0.0f64; patterns.len() * k];
    let mut ll = f64::NEG_INFINITY;
    for _ in 0..iters {
        ll = e_step(patterns, &params, Some(&mut post));
        params = m_step(patterns, &post, k, rho_floor);
    }
    if !ll.is_finite() {
        ll = e_step(patterns, &params, None);
    }
    (params, ll)
}

/// Closed-form single-class fit: weighted marginal frequencies.
pub(crate) fn fit_one_class(patterns: &Patterns, rho_floor: f64) -> (Params, f64) {
    let mut params = Params::zeros(1, &patterns.cards);
    params.pi[0] = 1.0;
    for p in 0..patterns.len() {
        let w = patterns.weight[p];
        for (j, &code) in patterns.pattern(p).iter().enumerate() {
            params.rho[j][code as usize - 1][0] += w;
        }
    }
    for item in params.rho.iter_mut() {
        let mut col: Vec<f64> = item.iter().map(|row| row[0] / patterns.total_weight).collect();
        normalize_floor(&mut col, rho_floor);
        for (row, &v) in item.iter_mut().zip(&col) {
            row[0] = v;
        }
    }
    let ll = e_step(patterns, &params, None);
    (params, ll)
}
