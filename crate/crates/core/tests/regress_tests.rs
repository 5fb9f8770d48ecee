//! Design construction, weighted multinomial logit estimation, and the
//! collinearity / IIA diagnostics around it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svylca::regress::{
    build_design, fit_mnl, hausman_mcfadden_iia, mcfadden_r2, mnl_objective, odds_ratios,
    predicted_profiles, vif, Coding, CovariateSpec, Design, MnlConfig, MnlFit,
    SPARSE_LEVEL_WEIGHT,
};
use svylca::{ItemSchema, Role, SurveyDataset};

fn covariate_dataset(cards: &[u8], rows: &[&[u8]], weights: Option<Vec<f64>>) -> SurveyDataset {
    let items: Vec<ItemSchema> = cards
        .iter()
        .enumerate()
        .map(|(j, &c)| ItemSchema::new(&format!("cov_{j}"), c, Role::Covariate))
        .collect();
    let values: Vec<u8> = rows.iter().flat_map(|r| r.iter().cloned()).collect();
    let weights = weights.unwrap_or_else(|| vec![1.0; rows.len()]);
    SurveyDataset::new(Vec::new(), items, values, weights).expect("dataset")
}

fn dummy(item: &str, reference: u8) -> CovariateSpec {
    CovariateSpec { item_id: item.into(), coding: Coding::Dummy { reference } }
}

fn numeric(item: &str) -> CovariateSpec {
    CovariateSpec { item_id: item.into(), coding: Coding::Numeric }
}

/// Hand-constructed intercept-only design over explicit weights.
fn intercept_design(weights: &[f64]) -> Design {
    Design {
        x: vec![vec![1.0]; weights.len()],
        col_names: vec!["intercept".into()],
        rows: (0..weights.len()).collect(),
        weights: weights.to_vec(),
        dropped: 0,
        warnings: Vec::new(),
    }
}

/// Draws (design, classes) from a known 3-class multinomial logit with
/// two standard-normal covariates; reference class 0.
fn simulate_mnl(n: usize, beta: &[[f64; 3]; 2], seed: u64) -> (Design, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut classes = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let z2: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let row = vec![1.0, z1, z2];
        let eta1: f64 = beta[0][0] + beta[0][1] * z1 + beta[0][2] * z2;
        let eta2: f64 = beta[1][0] + beta[1][1] * z1 + beta[1][2] * z2;
        let denom = 1.0 + eta1.exp() + eta2.exp();
        let p1 = eta1.exp() / denom;
        let p2 = eta2.exp() / denom;
        let u: f64 = rng.random();
        let class = if u < p1 {
            1
        } else if u < p1 + p2 {
            2
        } else {
            0
        };
        x.push(row);
        classes.push(class);
    }
    let design = Design {
        x,
        col_names: vec!["intercept".into(), "z1".into(), "z2".into()],
        rows: (0..n).collect(),
        weights: vec![1.0; n],
        dropped: 0,
        warnings: Vec::new(),
    };
    (design, classes)
}

#[test]
fn dummy_coding_expands_to_indicator_columns() {
    let data = covariate_dataset(&[3], &[&[1], &[2], &[3], &[2]], None);
    let design = build_design(&data, &[dummy("cov_0", 1)]).expect("design");
    assert_eq!(design.col_names, vec!["intercept", "cov_0==2", "cov_0==3"]);
    assert_eq!(design.x[0], vec![1.0, 0.0, 0.0]);
    assert_eq!(design.x[1], vec![1.0, 1.0, 0.0]);
    assert_eq!(design.x[2], vec![1.0, 0.0, 1.0]);
    assert_eq!(design.x[3], vec![1.0, 1.0, 0.0]);
    assert_eq!(design.dropped, 0);

    // A non-first reference level skips that level instead.
    let design = build_design(&data, &[dummy("cov_0", 2)]).expect("design");
    assert_eq!(design.col_names, vec!["intercept", "cov_0==1", "cov_0==3"]);
    assert_eq!(design.x[1], vec![1.0, 0.0, 0.0]);
}

#[test]
fn numeric_coding_passes_the_raw_code_through() {
    let data = covariate_dataset(&[5], &[&[1], &[4], &[5]], None);
    let design = build_design(&data, &[numeric("cov_0")]).expect("design");
    assert_eq!(design.col_names, vec!["intercept", "cov_0"]);
    assert_eq!(design.x[1], vec![1.0, 4.0]);
}

#[test]
fn rows_missing_any_covariate_are_dropped() {
    let data = covariate_dataset(&[3, 2], &[&[1, 1], &[0, 2], &[2, 0], &[3, 2]], None);
    let design =
        build_design(&data, &[dummy("cov_0", 1), dummy("cov_1", 1)]).expect("design");
    assert_eq!(design.n(), 2);
    assert_eq!(design.rows, vec![0, 3]);
    assert_eq!(design.dropped, 2);
}

#[test]
fn bad_reference_level_is_rejected() {
    let data = covariate_dataset(&[3], &[&[1], &[2]], None);
    assert!(build_design(&data, &[dummy("cov_0", 4)]).is_err());
    assert!(build_design(&data, &[dummy("cov_0", 0)]).is_err());
    assert!(build_design(&data, &[]).is_err());
}

#[test]
fn sparse_levels_are_flagged_not_rejected() {
    // Level 2 carries weighted mass 2 < 30; level 1 carries 60.
    let mut rows: Vec<&[u8]> = vec![&[1]; 60];
    rows.push(&[2]);
    rows.push(&[2]);
    let data = covariate_dataset(&[2], &rows, None);
    let design = build_design(&data, &[dummy("cov_0", 1)]).expect("design");
    assert_eq!(design.warnings.len(), 1);
    assert!(design.warnings[0].contains("level 2"));
    assert!(design.warnings[0].contains(&format!("{}", SPARSE_LEVEL_WEIGHT)));
}

#[test]
fn intercept_only_fit_recovers_weighted_class_shares() {
    // Weighted shares: class 0: 6/12, class 1: 4/12, class 2: 2/12.
    let weights = [3.0, 3.0, 2.0, 2.0, 1.0, 1.0];
    let classes = [0usize, 0, 1, 1, 2, 2];
    let design = intercept_design(&weights);
    let fit = fit_mnl(&design, &classes, 3, 0, &MnlConfig::default()).expect("fit");
    assert!(fit.converged);
    let probs = predicted_profiles(&fit, &[vec![1.0]]).expect("profiles")[0].clone();
    for (p, want) in probs.iter().zip([0.5, 1.0 / 3.0, 1.0 / 6.0]) {
        assert!((p - want).abs() < 1e-6, "{p} vs {want}");
    }
    // Saturated intercept-only model: fitted loglik equals the null.
    assert!((mcfadden_r2(&fit)).abs() < 1e-9);
    assert!((fit.loglik - fit.null_loglik).abs() < 1e-7);
}

#[test]
fn odds_ratio_rows_apply_the_wald_interval_formula() {
    let fit = MnlFit {
        k: 2,
        reference: 0,
        target_classes: vec![1],
        col_names: vec!["intercept".into(), "x".into()],
        coef: vec![vec![0.0, 0.6931471805599453]],
        se: vec![vec![0.1, 0.25]],
        cov: vec![vec![0.0; 4]; 4],
        loglik: -10.0,
        null_loglik: -12.0,
        n: 40,
        sum_weights: 40.0,
        converged: true,
        iterations: 5,
    };
    let rows = odds_ratios(&fit);
    assert_eq!(rows.len(), 2);

    // beta = 0, SE = 0.1: OR 1.00, CI [exp(-0.196), exp(0.196)], p = 1.
    assert_eq!(rows[0].term, "intercept");
    assert!((rows[0].odds_ratio - 1.0).abs() < 1e-12);
    assert!((rows[0].lower - (-0.196f64).exp()).abs() < 1e-12);
    assert!((rows[0].upper - 0.196f64.exp()).abs() < 1e-12);
    assert!((rows[0].p - 1.0).abs() < 1e-12);

    // beta = ln 2, SE = 0.25: OR 2.00, CI [2 exp(-0.49), 2 exp(0.49)].
    assert!((rows[1].odds_ratio - 2.0).abs() < 1e-12);
    assert!((rows[1].lower - 2.0 * (-0.49f64).exp()).abs() < 1e-12);
    assert!((rows[1].upper - 2.0 * 0.49f64.exp()).abs() < 1e-12);
    assert!((rows[1].z - 0.6931471805599453 / 0.25).abs() < 1e-12);

    // Pseudo-R2 from the stored likelihoods.
    assert!((mcfadden_r2(&fit) - (1.0 - 10.0 / 12.0)).abs() < 1e-12);
}

#[test]
fn analytic_gradient_matches_central_finite_differences() {
    let beta = [[0.3, 0.8, -0.5], [-0.2, -0.6, 0.9]];
    let (design, classes) = simulate_mnl(80, &beta, 41);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let dim = 2 * design.p();
    for point in 0..5 {
        let theta: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let (_, grad) =
            mnl_objective(&design, &classes, 3, 0, &theta).expect("objective");
        let h = 1e-5;
        for j in 0..dim {
            let mut up = theta.clone();
            up[j] += h;
            let mut down = theta.clone();
            down[j] -= h;
            let (f_up, _) = mnl_objective(&design, &classes, 3, 0, &up).unwrap();
            let (f_down, _) = mnl_objective(&design, &classes, 3, 0, &down).unwrap();
            let fd = (f_up - f_down) / (2.0 * h);
            let denom = grad[j].abs().max(fd.abs()).max(1e-6);
            assert!(
                ((grad[j] - fd) / denom).abs() < 1e-4,
                "point {point}, coord {j}: analytic {} vs fd {fd}",
                grad[j]
            );
        }
    }
}

#[test]
fn gradient_vanishes_at_the_fitted_optimum() {
    let beta = [[0.3, 0.8, -0.5], [-0.2, -0.6, 0.9]];
    let (design, classes) = simulate_mnl(300, &beta, 43);
    let fit = fit_mnl(&design, &classes, 3, 0, &MnlConfig::default()).expect("fit");
    assert!(fit.converged);
    let theta: Vec<f64> = fit.coef.iter().flatten().cloned().collect();
    let (_, grad) = mnl_objective(&design, &classes, 3, 0, &theta).expect("objective");
    let sup = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    assert!(sup < 1e-6, "gradient sup-norm {sup}");
}

#[test]
fn single_seed_coefficient_recovery_is_close() {
    let beta = [[0.3, 0.8, -0.5], [-0.2, -0.6, 0.9]];
    let (design, classes) = simulate_mnl(6_000, &beta, 47);
    let fit = fit_mnl(&design, &classes, 3, 0, &MnlConfig::default()).expect("fit");
    assert!(fit.converged);
    for c in 0..2 {
        for j in 0..3 {
            let err = (fit.coef[c][j] - beta[c][j]).abs();
            assert!(
                err < 4.0 * fit.se[c][j].max(0.02),
                "coef [{c}][{j}]: {} vs {} (se {})",
                fit.coef[c][j],
                beta[c][j],
                fit.se[c][j]
            );
        }
    }
}

#[test]
fn reference_class_switch_obeys_log_odds_algebra() {
    let beta = [[0.3, 0.8, -0.5], [-0.2, -0.6, 0.9]];
    let (design, classes) = simulate_mnl(500, &beta, 53);
    // The 1e-6 algebra tolerance needs convergence beyond the default.
    let config = MnlConfig { grad_tol: 1e-8, max_iter: 3_000 };
    let fit_a = fit_mnl(&design, &classes, 3, 0, &config).expect("ref 0");
    let fit_b = fit_mnl(&design, &classes, 3, 1, &config).expect("ref 1");

    // beta_{2|ref 0} - beta_{1|ref 0} must equal beta_{2|ref 1}.
    let block = |fit: &MnlFit, class: usize| -> Vec<f64> {
        let b = fit.target_classes.iter().position(|&c| c == class).unwrap();
        fit.coef[b].clone()
    };
    let b1_a = block(&fit_a, 1);
    let b2_a = block(&fit_a, 2);
    let b2_b = block(&fit_b, 2);
    let b0_b = block(&fit_b, 0);
    for j in 0..3 {
        assert!(
            ((b2_a[j] - b1_a[j]) - b2_b[j]).abs() < 1e-6,
            "column {j}: {} vs {}",
            b2_a[j] - b1_a[j],
            b2_b[j]
        );
        // beta_{0|ref 1} = -beta_{1|ref 0}.
        assert!((b0_b[j] + b1_a[j]).abs() < 1e-6);
    }

    // Predicted probabilities are reference-invariant.
    let profiles = vec![vec![1.0, 0.5, -0.3], vec![1.0, -1.0, 1.0]];
    let p_a = predicted_profiles(&fit_a, &profiles).unwrap();
    let p_b = predicted_profiles(&fit_b, &profiles).unwrap();
    for (ra, rb) in p_a.iter().zip(&p_b) {
        for (a, b) in ra.iter().zip(rb) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn rescaling_weights_leaves_estimates_and_ses_unchanged() {
    let beta = [[0.3, 0.8, -0.5], [-0.2, -0.6, 0.9]];
    let (mut design, classes) = simulate_mnl(400, &beta, 59);
    let fit = fit_mnl(&design, &classes, 3, 0, &MnlConfig::default()).expect("fit");
    for w in design.weights.iter_mut() {
        *w *= 7.25;
    }
    let scaled = fit_mnl(&design, &classes, 3, 0, &MnlConfig::default()).expect("fit");
    for c in 0..2 {
        for j in 0..3 {
            assert!((fit.coef[c][j] - scaled.coef[c][j]).abs() < 1e-8);
            assert!((fit.se[c][j] - scaled.se[c][j]).abs() < 1e-8);
        }
    }
    assert!((scaled.sum_weights - 7.25 * fit.sum_weights).abs() < 1e-6);
}

#[test]
fn iia_on_a_saturated_intercept_model_accepts_with_p_one() {
    // Intercept-only multinomial fits every class share exactly, so
    // removing an alternative cannot move the remaining coefficients:
    // the divergence is zero up to optimizer tolerance and every
    // omitted-class test must accept with p approximately 1.
    let weights = vec![1.0; 90];
    let classes: Vec<usize> = (0..90).map(|i| i % 3).collect();
    let design = intercept_design(&weights);
    let fit = fit_mnl(&design, &classes, 3, 0, &MnlConfig::default()).expect("fit");
    let rows = hausman_mcfadden_iia(&design, &classes, &fit, &MnlConfig::default())
        .expect("iia");
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert!(row.statistic >= 0.0);
        assert!(row.p > 0.999, "omit {}: p = {}", row.omitted_class, row.p);
        assert_eq!(row.df, 1);
    }
}

#[test]
fn iia_rows_are_well_formed_under_a_true_mnl() {
    let beta = [[0.2, 0.7, -0.4], [-0.1, -0.5, 0.8]];
    let (design, classes) = simulate_mnl(1_500, &beta, 61);
    let fit = fit_mnl(&design, &classes, 3, 0, &MnlConfig::default()).expect("fit");
    let rows = hausman_mcfadden_iia(&design, &classes, &fit, &MnlConfig::default())
        .expect("iia");
    assert_eq!(rows.len(), 2);
    let omitted: Vec<usize> = rows.iter().map(|r| r.omitted_class).collect();
    assert_eq!(omitted, vec![1, 2]);
    for row in &rows {
        assert_eq!(row.df, design.p());
        assert!(row.statistic >= 0.0);
        assert!((0.0..=1.0).contains(&row.p));
        // The model satisfies IIA by construction; the test must accept.
        assert!(row.p > 0.05, "omit {}: spurious rejection p = {}", row.omitted_class, row.p);
    }
}

#[test]
fn vif_is_one_for_orthogonal_columns() {
    // Balanced 2x2 factorial: the two dummies are exactly uncorrelated.
    let rows: Vec<&[u8]> = vec![&[1, 1], &[1, 2], &[2, 1], &[2, 2]];
    let data = covariate_dataset(&[2, 2], &rows, None);
    let design =
        build_design(&data, &[dummy("cov_0", 1), dummy("cov_1", 1)]).expect("design");
    let table = vif(&design).expect("vif");
    assert_eq!(table.len(), 2);
    for (name, v) in &table {
        assert!((v - 1.0).abs() < 1e-9, "{name}: VIF {v}");
    }
}

#[test]
fn vif_flags_a_duplicated_column_as_infinite() {
    let rows: Vec<&[u8]> = vec![&[1], &[2], &[3], &[2], &[1], &[3]];
    let data = covariate_dataset(&[3], &rows, None);
    let design = build_design(&data, &[numeric("cov_0"), numeric("cov_0")]).expect("design");
    let table = vif(&design).expect("vif");
    assert_eq!(table.len(), 2);
    for (_, v) in &table {
        assert!(v.is_infinite(), "duplicated column must give infinite VIF, got {v}");
    }
}

#[test]
fn vif_requires_two_non_intercept_columns() {
    let data = covariate_dataset(&[3], &[&[1], &[2]], None);
    let design = build_design(&data, &[numeric("cov_0")]).expect("design");
    assert!(vif(&design).is_err());
}

#[test]
fn predicted_profiles_are_hand_computable_softmaxes() {
    let fit = MnlFit {
        k: 3,
        reference: 0,
        target_classes: vec![1, 2],
        col_names: vec!["intercept".into(), "x".into()],
        coef: vec![vec![0.5, 1.0], vec![-0.25, 2.0]],
        se: vec![vec![0.0; 2]; 2],
        cov: vec![vec![0.0; 4]; 4],
        loglik: 0.0,
        null_loglik: 0.0,
        n: 0,
        sum_weights: 0.0,
        converged: true,
        iterations: 0,
    };
    let profiles = vec![vec![1.0, 0.0], vec![1.0, 1.5], vec![1.0, -2.0]];
    let probs = predicted_profiles(&fit, &profiles).expect("profiles");
    for (x, row) in profiles.iter().zip(&probs) {
        let eta1 = 0.5 + 1.0 * x[1];
        let eta2 = -0.25 + 2.0 * x[1];
        let denom = 1.0 + eta1.exp() + eta2.exp();
        let want = [1.0 / denom, eta1.exp() / denom, eta2.exp() / denom];
        for (p, w) in row.iter().zip(want) {
            assert!((p - w).abs() < 1e-12, "{p} vs {w}");
        }
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    // Wrong profile width is rejected.
    assert!(predicted_profiles(&fit, &[vec![1.0]]).is_err());
}

#[test]
fn covariate_spec_json_shape_is_stable() {
    let spec: CovariateSpec =
        serde_json::from_str(r#"{"item_id":"edu","coding":"dummy","reference":2}"#)
            .expect("dummy spec");
    assert!(matches!(spec.coding, Coding::Dummy { reference: 2 }));
    let spec: CovariateSpec =
        serde_json::from_str(r#"{"item_id":"age","coding":"numeric"}"#).expect("numeric spec");
    assert!(matches!(spec.coding, Coding::Numeric));
    let text = serde_json::to_string(&spec).expect("serialize");
    assert!(text.contains(r#""coding":"numeric""#));
}
