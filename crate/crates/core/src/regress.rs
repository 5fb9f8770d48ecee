//! Survey-weighted multinomial logistic regression of class membership
//! on covariates.
//!
//! The outcome is the modal class assignment; one class serves as the
//! reference and every other class gets its own coefficient vector.
//! Estimation maximizes the weighted log-likelihood by BFGS with an
//! Armijo backtracking line search on the weight-normalized objective,
//! so the convergence tolerance is invariant to rescaling the weights.
//! Standard errors come from the sandwich estimator A⁻¹ B A⁻¹ with
//! weighted scores, the usual design-based choice.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::SurveyDataset;
use crate::error::{Error, Result};

/// Dummy levels whose weighted count falls below this get a warning.
pub const SPARSE_LEVEL_WEIGHT: f64 = 30.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "coding", rename_all = "lowercase")]
pub enum Coding {
    /// One indicator column per non-reference level.
    Dummy { reference: u8 },
    /// The category code entered as a single numeric column.
    Numeric,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub item_id: String,
    #[serde(flatten)]
    pub coding: Coding,
}

/// A design matrix over the listwise-complete covariate rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Design {
    /// Row-major n × p, first column the intercept.
    pub x: Vec<Vec<f64>>,
    pub col_names: Vec<String>,
    /// Original dataset row index behind each design row.
    pub rows: Vec<usize>,
    pub weights: Vec<f64>,
    pub dropped: usize,
    pub warnings: Vec<String>,
}

impl Design {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn p(&self) -> usize {
        self.col_names.len()
    }
}

/// Builds the covariate design matrix: an intercept, then for each
/// covariate either dummy columns against its reference level or the
/// raw code as one numeric column. Rows missing any covariate are
/// dropped; dummy levels carrying weighted mass below
/// [`SPARSE_LEVEL_WEIGHT`] are flagged in `warnings`.
pub fn build_design(dataset: &SurveyDataset, covariates: &[CovariateSpec]) -> Result<Design> {
    if covariates.is_empty() {
        return Err(Error::Invalid("need at least one covariate".into()));
    }
    let mut cols = Vec::with_capacity(covariates.len());
    for c in covariates {
        let idx = dataset.item_index(&c.item_id)?;
        let card = dataset.item(idx).cardinality;
        if let Coding::Dummy { reference } = c.coding {
            if reference == 0 || reference > card {
                return Err(Error::Config(format!(
                    "reference level {} outside 1..={} for {:?}",
                    reference, card, c.item_id
                )));
            }
        }
        cols.push((idx, card, c));
    }

    let mut col_names = vec!["intercept".to_string()];
    for &(_, card, c) in &cols {
        match c.coding {
            Coding::Dummy { reference } => {
                for level in 1..=card {
                    if level != reference {
                        col_names.push(format!("{}=={}", c.item_id, level));
                    }
                }
            }
            Coding::Numeric => col_names.push(c.item_id.clone()),
        }
    }

    let mut x = Vec::new();
    let mut rows = Vec::new();
    let mut weights = Vec::new();
    let mut dropped = 0usize;
    // Weighted mass per (covariate, level) for the sparseness warnings.
    let mut level_mass: Vec<Vec<f64>> =
        cols.iter().map(|&(_, card, _)| vec![0.0; card as usize]).collect();
    'row: for i in 0..dataset.n() {
        let mut row = Vec::with_capacity(col_names.len());
        row.push(1.0);
        for (ci, &(idx, card, c)) in cols.iter().enumerate() {
            let Some(v) = dataset.value(i, idx) else {
                dropped += 1;
                continue 'row;
            };
            level_mass[ci][v as usize - 1] += dataset.weights[i];
            match c.coding {
                Coding::Dummy { reference } => {
                    for level in 1..=card {
                        if level != reference {
                            row.push(if v == level { 1.0 } else { 0.0 });
                        }
                    }
                }
                Coding::Numeric => row.push(v as f64),
            }
        }
        x.push(row);
        rows.push(i);
        weights.push(dataset.weights[i]);
    }
    if x.is_empty() {
        return Err(Error::EmptyAfterDeletion);
    }
    let mut warnings = Vec::new();
    for (ci, &(_, card, c)) in cols.iter().enumerate() {
        for level in 1..=card as usize {
            let mass = level_mass[ci][level - 1];
            if mass < SPARSE_LEVEL_WEIGHT {
                warnings.push(format!(
                    "covariate {:?} level {} carries weighted mass {:.1} (< {})",
                    c.item_id, level, mass, SPARSE_LEVEL_WEIGHT
                ));
            }
        }
    }
    Ok(Design { x, col_names, rows, weights, dropped, warnings })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MnlConfig {
    pub max_iter: usize,
    /// Supremum-norm tolerance on the scaled-objective gradient.
    pub grad_tol: f64,
}

impl Default for MnlConfig {
    fn default() -> Self {
        MnlConfig { max_iter: 500, grad_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MnlFit {
    pub k: usize,
    pub reference: usize,
    /// Non-reference classes, ascending; block c of the coefficients
    /// belongs to target_classes[c].
    pub target_classes: Vec<usize>,
    pub col_names: Vec<String>,
    /// coef[c][j]: log-odds of target class c vs the reference per unit
    /// of design column j.
    pub coef: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    /// Sandwich covariance of the flattened coefficients
    /// (class-major blocks), row-major.
    pub cov: Vec<Vec<f64>>,
    pub loglik: f64,
    pub null_loglik: f64,
    pub n: usize,
    pub sum_weights: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Class probabilities for one design row given flattened coefficients;
/// `out` has length K with the reference entry included.
fn softmax_probs(
    theta: &DVector<f64>,
    x: &[f64],
    k: usize,
    reference: usize,
    targets: &[usize],
    out: &mut [f64],
) {
    let p = x.len();
    debug_assert_eq!(out.len(), k);
    out.iter_mut().for_each(|v| *v = 0.0);
    for (c, &class) in targets.iter().enumerate() {
        let mut eta = 0.0;
        for j in 0..p {
            eta += theta[c * p + j] * x[j];
        }
        out[class] = eta;
    }
    out[reference] = 0.0;
    let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in out.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in out.iter_mut() {
        *v /= total;
    }
}

/// Scaled negative log-likelihood and its gradient at theta.
fn objective(
    theta: &DVector<f64>,
    design: &Design,
    classes: &[usize],
    k: usize,
    reference: usize,
    targets: &[usize],
    sum_w: f64,
    grad: Option<&mut DVector<f64>>,
) -> f64 {
    let p = design.p();
    let mut probs = vec![0.0f64; k];
    let mut ll = 0.0;
    if let Some(g) = &grad {
        debug_assert_eq!(g.len(), targets.len() * p);
    }
    let mut g_acc = grad.map(|g| {
        g.fill(0.0);
        g
    });
    for (i, x) in design.x.iter().enumerate() {
        softmax_probs(theta, x, k, reference, targets, &mut probs);
        let w = design.weights[i];
        ll += w * probs[classes[i]].max(f64::MIN_POSITIVE).ln();
        if let Some(g) = g_acc.as_deref_mut() {
            for (c, &class) in targets.iter().enumerate() {
                let e = if classes[i] == class { 1.0 } else { 0.0 };
                let coeff = w * (e - probs[class]);
                for j in 0..p {
                    // Gradient of the *negative* scaled log-likelihood.
                    g[c * p + j] -= coeff * x[j] / sum_w;
                }
            }
        }
    }
    -ll / sum_w
}

/// Scaled negative log-likelihood and its analytic gradient at an
/// arbitrary coefficient vector (flattened class-major over the
/// non-reference classes ascending, then design columns). Exposed so the
/// analytic derivatives can be checked against finite differences.
pub fn mnl_objective(
    design: &Design,
    classes: &[usize],
    k: usize,
    reference: usize,
    theta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if classes.len() != design.n() {
        return Err(Error::Invalid("class vector length differs from design rows".into()));
    }
    if k < 2 {
        return Err(Error::Invalid("need K >= 2".into()));
    }
    if reference >= k {
        return Err(Error::Invalid(format!("reference class {reference} outside 0..{k}")));
    }
    if let Some(&c) = classes.iter().find(|&&c| c >= k) {
        return Err(Error::Invalid(format!("class label {c} outside 0..{k}")));
    }
    let targets: Vec<usize> = (0..k).filter(|&c| c != reference).collect();
    let p = design.p();
    if theta.len() != targets.len() * p {
        return Err(Error::Invalid(format!(
            "theta has {} entries; expected {} classes x {} columns",
            theta.len(),
            targets.len(),
            p
        )));
    }
    let sum_w: f64 = design.weights.iter().sum();
    let theta = DVector::from_column_slice(theta);
    let mut grad = DVector::zeros(targets.len() * p);
    let value = objective(&theta, design, classes, k, reference, &targets, sum_w, Some(&mut grad));
    Ok((value, grad.iter().cloned().collect()))
}

/// Fits the weighted multinomial logit of `classes` (0-based, one per
/// design row) on the design columns by BFGS from a zero start.
pub fn fit_mnl(
    design: &Design,
    classes: &[usize],
    k: usize,
    reference: usize,
    config: &MnlConfig,
) -> Result<MnlFit> {
    if classes.len() != design.n() {
        return Err(Error::Invalid("class vector length differs from design rows".into()));
    }
    if k < 2 {
        return Err(Error::Invalid("need K >= 2".into()));
    }
    if reference >= k {
        return Err(Error::Invalid(format!("reference class {reference} outside 0..{k}")));
    }
    let mut counts = vec![0usize; k];
    for &c in classes {
        if c >= k {
            return Err(Error::Invalid(format!("class label {c} outside 0..{k}")));
        }
        counts[c] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class: empty + 1 });
    }
    let targets: Vec<usize> = (0..k).filter(|&c| c != reference).collect();
    let p = design.p();
    let dim = targets.len() * p;
    let sum_w: f64 = design.weights.iter().sum();

    let mut theta = DVector::zeros(dim);
    let mut grad = DVector::zeros(dim);
    let mut f = objective(&theta, design, classes, k, reference, &targets, sum_w, Some(&mut grad));
    let mut h_inv = DMatrix::identity(dim, dim);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..config.max_iter {
        iterations = it;
        if grad.amax() < config.grad_tol {
            converged = true;
            break;
        }
        let mut direction = -(&h_inv * &grad);
        let mut slope = direction.dot(&grad);
        if slope >= 0.0 {
            // Curvature corrupted the approximation; reset to steepest descent.
            h_inv = DMatrix::identity(dim, dim);
            direction = -grad.clone();
            slope = direction.dot(&grad);
        }
        // Armijo backtracking.
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &theta + alpha * &direction;
            let f_new = objective(&candidate, design, classes, k, reference, &targets, sum_w, None);
            if f_new <= f + 1e-4 * alpha * slope {
                accepted = Some((candidate, f_new));
                break;
            }
            alpha *= 0.5;
        }
        let Some((theta_new, f_new)) = accepted else {
            return Err(Error::Estimation(
                "line search failed in the multinomial fit (separation or collinearity)".into(),
            ));
        };
        let mut grad_new = DVector::zeros(dim);
        objective(&theta_new, design, classes, k, reference, &targets, sum_w, Some(&mut grad_new));
        let s = &theta_new - &theta;
        let y = &grad_new - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            // Standard inverse-Hessian BFGS update.
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            h_inv += (sy + yhy) * rho * rho * (&s * s.transpose())
                - rho * (&hy * s.transpose() + &s * hy.transpose());
        }
        theta = theta_new;
        grad = grad_new;
        f = f_new;
    }
    if !converged {
        return Err(Error::NonConvergence { max_iter: config.max_iter });
    }

    // Observed information A of the unscaled negative log-likelihood and
    // outer-product matrix B of the weighted per-observation scores.
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DMatrix::zeros(dim, dim);
    let mut probs = vec![0.0f64; k];
    let mut score = DVector::zeros(dim);
    let mut loglik = 0.0;
    for (i, x) in design.x.iter().enumerate() {
        softmax_probs(&theta, x, k, reference, &targets, &mut probs);
        let w = design.weights[i];
        loglik += w * probs[classes[i]].max(f64::MIN_POSITIVE).ln();
        for (c, &class) in targets.iter().enumerate() {
            let e = if classes[i] == class { 1.0 } else { 0.0 };
            for j in 0..p {
                score[c * p + j] = w * (e - probs[class]) * x[j];
            }
        }
        b += &score * score.transpose();
        for (c1, &cl1) in targets.iter().enumerate() {
            for (c2, &cl2) in targets.iter().enumerate() {
                let block = w
                    * (if cl1 == cl2 { probs[cl1] } else { 0.0 } - probs[cl1] * probs[cl2]);
                if block != 0.0 {
                    for j1 in 0..p {
                        for j2 in 0..p {
                            a[(c1 * p + j1, c2 * p + j2)] += block * x[j1] * x[j2];
                        }
                    }
                }
            }
        }
    }
    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Estimation("singular information matrix".into()))?;
    let cov = &a_inv * &b * &a_inv;

    let null_loglik = {
        let mut mass = vec![0.0f64; k];
        for (i, &c) in classes.iter().enumerate() {
            mass[c] += design.weights[i];
        }
        mass.iter().map(|&m| m * (m / sum_w).ln()).sum()
    };

    let coef: Vec<Vec<f64>> = (0..targets.len())
        .map(|c| (0..p).map(|j| theta[c * p + j]).collect())
        .collect();
    let se: Vec<Vec<f64>> = (0..targets.len())
        .map(|c| (0..p).map(|j| cov[(c * p + j, c * p + j)].max(0.0).sqrt()).collect())
        .collect();
    let cov_rows: Vec<Vec<f64>> =
        (0..dim).map(|r| (0..dim).map(|c| cov[(r, c)]).collect()).collect();
    Ok(MnlFit {
        k,
        reference,
        target_classes: targets,
        col_names: design.col_names.clone(),
        coef,
        se,
        cov: cov_rows,
        loglik,
        null_loglik,
        n: design.n(),
        sum_weights: sum_w,
        converged,
        iterations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrRow {
    /// Target class (0-based) the log-odds contrast belongs to.
    pub class: usize,
    pub term: String,
    pub beta: f64,
    pub se: f64,
    pub odds_ratio: f64,
    pub lower: f64,
    pub upper: f64,
    pub z: f64,
    pub p: f64,
}

/// Odds ratios exp(β) with Wald 95% intervals exp(β ± 1.96·SE) for every
/// coefficient (intercepts included; presentation layers may filter).
pub fn odds_ratios(fit: &MnlFit) -> Vec<OrRow> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut rows = Vec::new();
    for (c, &class) in fit.target_classes.iter().enumerate() {
        for (j, term) in fit.col_names.iter().enumerate() {
            let beta = fit.coef[c][j];
            let se = fit.se[c][j];
            let z = if se > 0.0 { beta / se } else { 0.0 };
            rows.push(OrRow {
                class,
                term: term.clone(),
                beta,
                se,
                odds_ratio: beta.exp(),
                lower: (beta - 1.96 * se).exp(),
                upper: (beta + 1.96 * se).exp(),
                z,
                p: (2.0 * (1.0 - normal.cdf(z.abs()))).clamp(0.0, 1.0),
            });
        }
    }
    rows
}

/// McFadden pseudo-R²: 1 − ℓ/ℓ₀ against the intercept-only model.
pub fn mcfadden_r2(fit: &MnlFit) -> f64 {
    1.0 - fit.loglik / fit.null_loglik
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IiaRow {
    pub omitted_class: usize,
    pub statistic: f64,
    pub df: usize,
    pub p: f64,
}

/// Hausman–McFadden IIA checks: refit dropping each non-reference class
/// and compare the shared coefficients. The covariance of the contrast
/// uses the model-based (inverse-information) matrices; a non-positive
/// quadratic form — common in finite samples — is reported as statistic
/// 0 with p = 1, i.e. no evidence against IIA.
pub fn hausman_mcfadden_iia(
    design: &Design,
    classes: &[usize],
    fit: &MnlFit,
    config: &MnlConfig,
) -> Result<Vec<IiaRow>> {
    let k = fit.k;
    let reference = fit.reference;
    let p = design.p();
    // Each omitted-class refit is independent; run them in parallel.
    let rows: Result<Vec<IiaRow>> = fit.target_classes.par_iter().map(|&omit| {
        // Restrict to rows outside the omitted class and relabel the
        // remaining classes onto 0..K-1.
        let mut relabel = vec![usize::MAX; k];
        let mut next = 0usize;
        for c in 0..k {
            if c != omit {
                relabel[c] = next;
                next += 1;
            }
        }
        let keep: Vec<usize> =
            (0..design.n()).filter(|&i| classes[i] != omit).collect();
        let sub = Design {
            x: keep.iter().map(|&i| design.x[i].clone()).collect(),
            col_names: design.col_names.clone(),
            rows: keep.iter().map(|&i| design.rows[i]).collect(),
            weights: keep.iter().map(|&i| design.weights[i]).collect(),
            dropped: design.dropped,
            warnings: Vec::new(),
        };
        let sub_classes: Vec<usize> = keep.iter().map(|&i| relabel[classes[i]]).collect();
        let sub_fit = fit_mnl(&sub, &sub_classes, k - 1, relabel[reference], config)?;

        // Shared coefficients: every target class of the restricted model.
        let shared: Vec<usize> = fit
            .target_classes
            .iter()
            .cloned()
            .filter(|&c| c != omit)
            .collect();
        let dim = shared.len() * p;
        let mut diff = DVector::zeros(dim);
        for (bi, &class) in shared.iter().enumerate() {
            let full_block = fit.target_classes.iter().position(|&c| c == class).unwrap();
            let sub_block = sub_fit
                .target_classes
                .iter()
                .position(|&c| c == relabel[class])
                .unwrap();
            for j in 0..p {
                diff[bi * p + j] = sub_fit.coef[sub_block][j] - fit.coef[full_block][j];
            }
        }
        let v = model_cov_blocks(design, fit, &shared)?;
        let v_sub_full = model_cov_blocks(
            &sub,
            &sub_fit,
            &shared.iter().map(|&c| relabel[c]).collect::<Vec<_>>(),
        )?;
        let dv = v_sub_full - v;
        let statistic = dv
            .lu()
            .solve(&diff)
            .map(|solved| diff.dot(&solved))
            .unwrap_or(-1.0);
        let (statistic, pval) = if statistic > 0.0 {
            (statistic, crate::dataset::chi_sq_sf(statistic, dim as f64))
        } else {
            (0.0, 1.0)
        };
        Ok(IiaRow { omitted_class: omit, statistic, df: dim, p: pval })
    }).collect();
    rows
}

/// Model-based covariance (inverse information) of the coefficients for
/// the given target classes, evaluated at the fit.
fn model_cov_blocks(
    design: &Design,
    fit: &MnlFit,
    want_classes: &[usize],
) -> Result<DMatrix<f64>> {
    let p = design.p();
    let k = fit.k;
    let targets = &fit.target_classes;
    let dim = targets.len() * p;
    let theta = DVector::from_iterator(
        dim,
        fit.coef.iter().flat_map(|block| block.iter().cloned()),
    );
    let mut a = DMatrix::zeros(dim, dim);
    let mut probs = vec![0.0f64; k];
    for (i, x) in design.x.iter().enumerate() {
        softmax_probs(&theta, x, k, fit.reference, targets, &mut probs);
        let w = design.weights[i];
        for (c1, &cl1) in targets.iter().enumerate() {
            for (c2, &cl2) in targets.iter().enumerate() {
                let block = w
                    * (if cl1 == cl2 { probs[cl1] } else { 0.0 } - probs[cl1] * probs[cl2]);
                if block != 0.0 {
                    for j1 in 0..p {
                        for j2 in 0..p {
                            a[(c1 * p + j1, c2 * p + j2)] += block * x[j1] * x[j2];
                        }
                    }
                }
            }
        }
    }
    let a_inv = a
        .try_inverse()
        .ok_or_else(|| Error::Estimation("singular information matrix".into()))?;
    // Extract the rows/columns of the wanted class blocks.
    let mut idx = Vec::with_capacity(want_classes.len() * p);
    for &class in want_classes {
        let block = targets
            .iter()
            .position(|&c| c == class)
            .ok_or_else(|| Error::Invalid("class is not a target of the fit".into()))?;
        for j in 0..p {
            idx.push(block * p + j);
        }
    }
    Ok(DMatrix::from_fn(idx.len(), idx.len(), |r, c| a_inv[(idx[r], idx[c])]))
}

/// Weighted variance inflation factors for the non-intercept design
/// columns: regress each column on all others by weighted least squares
/// and report 1/(1 − R²).
pub fn vif(design: &Design) -> Result<Vec<(String, f64)>> {
    let p = design.p();
    if p < 3 {
        return Err(Error::Invalid("VIF needs at least two non-intercept columns".into()));
    }
    let n = design.n();
    let mut out = Vec::with_capacity(p - 1);
    for target in 1..p {
        let others: Vec<usize> = (0..p).filter(|&j| j != target).collect();
        let q = others.len();
        let mut xtx: DMatrix<f64> = DMatrix::zeros(q, q);
        let mut xty: DVector<f64> = DVector::zeros(q);
        let mut sw = 0.0;
        let mut sy = 0.0;
        let mut syy = 0.0;
        for i in 0..n {
            let w = design.weights[i];
            let y = design.x[i][target];
            sw += w;
            sy += w * y;
            syy += w * y * y;
            for (a, &ja) in others.iter().enumerate() {
                xty[a] += w * design.x[i][ja] * y;
                for (b, &jb) in others.iter().enumerate() {
                    xtx[(a, b)] += w * design.x[i][ja] * design.x[i][jb];
                }
            }
        }
        let mean = sy / sw;
        let sst = syy - sw * mean * mean;
        if sst <= 0.0 {
            return Err(Error::DegenerateItem(design.col_names[target].clone()));
        }
        let beta = xtx
            .lu()
            .solve(&xty)
            .ok_or_else(|| Error::Estimation("singular design in VIF regression".into()))?;
        // SSR via the normal equations: SSE = Σw·y² − βᵀXᵀWy.
        let sse: f64 = (syy - beta.dot(&xty)).max(0.0);
        let r2 = 1.0 - sse / sst;
        let v = if r2 >= 1.0 - 1e-12 { f64::INFINITY } else { 1.0 / (1.0 - r2) };
        out.push((design.col_names[target].clone(), v));
    }
    Ok(out)
}

/// Predicted class-membership probabilities for explicit design rows
/// (intercept included), e.g. covariate profiles of interest. Each
/// output row has length K and sums to 1.
pub fn predicted_profiles(fit: &MnlFit, profiles: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let p = fit.col_names.len();
    let theta = DVector::from_iterator(
        fit.target_classes.len() * p,
        fit.coef.iter().flat_map(|block| block.iter().cloned()),
    );
    let mut out = Vec::with_capacity(profiles.len());
    for x in profiles {
        if x.len() != p {
            return Err(Error::Invalid(format!(
                "profile has {} entries; the design has {} columns",
                x.len(),
                p
            )));
        }
        let mut probs = vec![0.0f64; fit.k];
        softmax_probs(&theta, x, fit.k, fit.reference, &fit.target_classes, &mut probs);
        out.push(probs);
    }
    Ok(out)
}
