//! Profile congruence, indicator sensitivity, start stability, subgroup
//! invariance, and the estimator cross-check harness.

use proptest::prelude::*;
use svylca::lca::LcaModel;
use svylca::robustness::{
    congruence, estimator_check_with, leave_one_out, match_profiles, start_stability,
    subgroup_invariance, tucker_phi, EstimatorReport, LooReport, RobustnessReport,
    StabilityReport, Verdict, DEFAULT_LL_RANGE_TOL, DEFAULT_PHI_THRESHOLD,
};
use svylca::simulate::{generate, GeneratorSpec, ItemGenerator, WeightGenerator};
use svylca::{EmConfig, Error, PosteriorMatrix, SurveyDataset};

fn small_config() -> EmConfig {
    EmConfig {
        n_starts: 30,
        n_best: 6,
        burn_in: 10,
        ..EmConfig::default()
    }
}

/// Three well-separated classes over five 3-category indicators with a
/// binary grouping covariate unrelated to class.
fn separated_spec() -> GeneratorSpec {
    let peak = |at: usize| -> Vec<f64> {
        let mut row = vec![0.075; 3];
        row[at] = 0.85;
        row
    };
    GeneratorSpec {
        class_prevalences: vec![0.25, 0.45, 0.3],
        items: (0..5)
            .map(|j| ItemGenerator {
                item_id: format!("item_{j}"),
                cardinality: 3,
                class_category_probs: vec![peak(0), peak(1), peak(2)],
            })
            .collect(),
        distal: Vec::new(),
        covariates: vec![svylca::simulate::CovariateGenerator {
            item_id: "group".into(),
            cardinality: 2,
            class_level_probs: vec![vec![0.5, 0.5]; 3],
        }],
        weights: WeightGenerator::Uniform,
    }
}

/// A minimal synthetic model: `k` classes over two 3-category items with
/// rotated peaks, good enough for matching arithmetic. Layout is
/// item_probs[item][category][class].
fn toy_model(k: usize) -> LcaModel {
    let item_probs: Vec<Vec<Vec<f64>>> = (0..2)
        .map(|_| {
            (0..3)
                .map(|r| {
                    (0..k)
                        .map(|c| if c % 3 == r { 0.8 } else { 0.1 })
                        .collect()
                })
                .collect()
        })
        .collect();
    LcaModel {
        k,
        prevalences: vec![1.0 / k as f64; k],
        item_probs,
        loglik: -1.0,
        n_params: 0,
        converged: true,
        n_starts_used: 1,
        seed: 0,
        item_ids: vec!["a".into(), "b".into()],
        cardinalities: vec![3, 3],
        warnings: Vec::new(),
        loglik_trace: Vec::new(),
    }
}

#[test]
fn tucker_phi_is_exactly_one_on_itself() {
    let x = [0.3, 0.1, 0.6, 0.25, 0.4, 0.35];
    let phi = tucker_phi(&x, &x);
    assert_eq!(phi, 1.0, "self-congruence must be exactly 1.0, got {phi}");
}

#[test]
fn tucker_phi_hand_values() {
    // Orthogonal profiles.
    assert_eq!(tucker_phi(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
    // 45 degrees: 1/sqrt(2).
    let phi = tucker_phi(&[1.0, 0.0], &[1.0, 1.0]);
    assert!((phi - 1.0 / 2.0f64.sqrt()).abs() < 1e-15);
    // Degenerate all-zero profile maps to 0 rather than NaN.
    assert_eq!(tucker_phi(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
}

#[test]
fn tucker_phi_is_scale_invariant() {
    let x = [0.5, 0.2, 0.3];
    let y = [0.1, 0.7, 0.2];
    let base = tucker_phi(&x, &y);
    let scaled: Vec<f64> = x.iter().map(|v| v * 4.0).collect();
    // Power-of-two scaling is exact in floating point.
    assert_eq!(tucker_phi(&scaled, &y), base);
    let scaled: Vec<f64> = x.iter().map(|v| v * 3.7).collect();
    assert!((tucker_phi(&scaled, &y) - base).abs() < 1e-12);
}

proptest! {
    #[test]
    fn tucker_phi_bounded_and_symmetric(
        x in proptest::collection::vec(0.01f64..1.0, 6),
        y in proptest::collection::vec(0.01f64..1.0, 6),
    ) {
        let phi = tucker_phi(&x, &y);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&phi));
        prop_assert!((phi - tucker_phi(&y, &x)).abs() < 1e-12);
        prop_assert_eq!(tucker_phi(&x, &x), 1.0);
    }
}

#[test]
fn matching_recovers_a_label_permutation_exactly() {
    let model = toy_model(3);
    let perm = vec![2usize, 0, 1];
    let shuffled = model.permuted(&perm);
    let (matching, mean_phi) = match_profiles(&model, &shuffled).expect("match");
    // Reference class i must map to the shuffled position holding it.
    for (i, &m) in matching.iter().enumerate() {
        assert_eq!(perm[m], i, "class {i} matched to {m}");
    }
    assert_eq!(mean_phi, 1.0, "identical profiles must give exactly 1.0");

    let cong = congruence(&model, &shuffled).expect("congruence");
    assert_eq!(cong.min_phi, 1.0);
    assert!(cong.per_class_phi.iter().all(|&p| p == 1.0));
}

#[test]
fn congruence_survives_small_probability_jitter() {
    let model = toy_model(3);
    let mut jittered = model.clone();
    for item in jittered.item_probs.iter_mut() {
        for c in 0..3 {
            // Deterministic +/-0.02 wiggle per class, renormalized over
            // the categories.
            for (r, row) in item.iter_mut().enumerate() {
                row[c] += if (c + r) % 2 == 0 { 0.02 } else { -0.02 };
            }
            let total: f64 = item.iter().map(|row| row[c]).sum();
            for row in item.iter_mut() {
                row[c] /= total;
            }
        }
    }
    let cong = congruence(&model, &jittered).expect("congruence");
    assert_eq!(cong.matching, vec![0, 1, 2]);
    assert!(cong.mean_phi > 0.99, "mean phi {}", cong.mean_phi);
    assert!(cong.min_phi > 0.98, "min phi {}", cong.min_phi);
}

#[test]
fn matching_beyond_the_factorial_guard_is_rejected() {
    let model = toy_model(10);
    match match_profiles(&model, &model) {
        Err(Error::Guard(msg)) => assert!(msg.contains("K=10")),
        other => panic!("expected the K guard, got {other:?}"),
    }
}

#[test]
fn congruence_uses_the_shared_item_subset() {
    let a = toy_model(2);
    // Fully disjoint item ids cannot be compared.
    let mut disjoint = toy_model(2);
    disjoint.item_ids = vec!["c".into(), "d".into()];
    assert!(congruence(&a, &disjoint).is_err());
    // Partial overlap compares on the common items (the leave-one-out
    // workflow relies on this).
    let mut partial = toy_model(2);
    partial.item_ids = vec!["a".into(), "d".into()];
    let cong = congruence(&a, &partial).expect("shared-subset congruence");
    assert_eq!(cong.matching, vec![0, 1]);
    assert_eq!(cong.mean_phi, 1.0);
}

#[test]
fn leave_one_out_is_stable_on_well_separated_classes() {
    let sim = generate(&separated_spec(), 3_000, 71).expect("generate");
    let report = leave_one_out(&sim.dataset, 3, &small_config(), 73).expect("loo");
    assert_eq!(report.rows.len(), 5);
    let omitted: Vec<&str> = report.rows.iter().map(|r| r.omitted.as_str()).collect();
    assert_eq!(omitted, vec!["item_0", "item_1", "item_2", "item_3", "item_4"]);
    assert!(
        report.max_shift < 0.05,
        "max prevalence shift {} under indicator omission",
        report.max_shift
    );
    assert!(report.all_recovered);
    for row in &report.rows {
        assert!(row.converged);
        assert!(row.mean_phi > 0.95, "{}: mean phi {}", row.omitted, row.mean_phi);
    }
}

#[test]
fn leave_one_out_needs_three_indicators() {
    let spec = GeneratorSpec {
        items: separated_spec().items.into_iter().take(2).collect(),
        ..separated_spec()
    };
    let sim = generate(&spec, 200, 79).expect("generate");
    assert!(leave_one_out(&sim.dataset, 2, &small_config(), 1).is_err());
}

#[test]
fn nested_start_counts_give_monotone_best_loglik() {
    let sim = generate(&separated_spec(), 1_200, 83).expect("generate");
    let report = start_stability(
        &sim.dataset,
        3,
        &[40, 5, 10, 20, 10],
        &small_config(),
        89,
    )
    .expect("stability");
    // Counts are sorted and deduplicated.
    assert_eq!(report.start_counts, vec![5, 10, 20, 40]);
    for pair in report.best_loglik.windows(2) {
        assert!(
            pair[1] >= pair[0] - 1e-9,
            "best loglik decreased when adding starts: {} -> {}",
            pair[0],
            pair[1]
        );
    }
    assert!(report.loglik_range >= 0.0);
    // Well-separated data: every start count finds the same optimum.
    assert!(report.loglik_range <= DEFAULT_LL_RANGE_TOL, "range {}", report.loglik_range);
    assert!(report.max_prevalence_shift < 0.01);
}

#[test]
fn start_stability_rejects_a_zero_count() {
    let sim = generate(&separated_spec(), 200, 97).expect("generate");
    assert!(start_stability(&sim.dataset, 3, &[0, 10], &small_config(), 1).is_err());
    assert!(start_stability(&sim.dataset, 3, &[], &small_config(), 1).is_err());
}

#[test]
fn subgroup_invariance_holds_when_groups_share_the_structure() {
    let sim = generate(&separated_spec(), 4_000, 101).expect("generate");
    let report = subgroup_invariance(
        &sim.dataset,
        "group",
        1,
        2,
        3,
        &small_config(),
        103,
        DEFAULT_PHI_THRESHOLD,
    )
    .expect("invariance");
    assert!(report.pass, "mean phi {}", report.mean_phi);
    assert!(report.mean_phi > 0.98);
    assert_eq!(report.n_a + report.n_b, 4_000);
    assert!(report.n_a > 1_500 && report.n_b > 1_500);
}

#[test]
fn subgroup_invariance_rejects_an_empty_level() {
    let sim = generate(&separated_spec(), 300, 107).expect("generate");
    assert!(subgroup_invariance(
        &sim.dataset,
        "group",
        1,
        2,
        3,
        &small_config(),
        1,
        DEFAULT_PHI_THRESHOLD
    )
    .is_ok());
    // Level 7 does not occur.
    assert!(subgroup_invariance(
        &sim.dataset,
        "group",
        1,
        7,
        3,
        &small_config(),
        1,
        DEFAULT_PHI_THRESHOLD
    )
    .is_err());
}

#[test]
fn estimator_check_reports_zero_gaps_under_crisp_assignment() {
    use svylca::{ItemSchema, Role};
    let data = SurveyDataset::new(
        Vec::new(),
        vec![ItemSchema::new("outcome", 5, Role::Distal)],
        vec![1, 2, 4, 5, 3, 4],
        vec![1.0, 2.0, 1.0, 1.0, 0.5, 1.0],
    )
    .expect("dataset");
    let post = PosteriorMatrix::from_rows(&[
        vec![1.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
    ])
    .expect("posteriors");
    let report =
        estimator_check_with(&data, &post, &["outcome".to_string()]).expect("estimators");
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.max_naive_gap, 0.0);
    assert_eq!(report.max_ml_gap, 0.0);
    let row = &report.rows[0];
    assert_eq!(row.bch, row.naive);
    assert_eq!(row.bch, row.ml_three_step);
}

#[test]
fn summarize_turns_reports_into_verdicts() {
    let mut report = RobustnessReport {
        leave_one_out: Some(LooReport { rows: Vec::new(), max_shift: 0.03, all_recovered: true }),
        stability: Some(StabilityReport {
            start_counts: vec![10, 20],
            best_loglik: vec![-50.0, -50.0],
            loglik_range: 0.0,
            max_prevalence_shift: 0.0,
        }),
        invariance: Vec::new(),
        estimator: Some(EstimatorReport { rows: Vec::new(), max_naive_gap: 0.1, max_ml_gap: 0.01 }),
        verdicts: vec![Verdict { check: "stale".into(), pass: false, detail: String::new() }],
    };
    report.summarize();
    let names: Vec<&str> = report.verdicts.iter().map(|v| v.check.as_str()).collect();
    assert_eq!(names, vec!["leave_one_out", "start_stability", "estimator_agreement"]);
    assert!(report.verdicts.iter().all(|v| v.pass));

    // A diverging stability report flips its verdict.
    report.stability.as_mut().unwrap().loglik_range = 10.0 * DEFAULT_LL_RANGE_TOL;
    report.summarize();
    let stability = report.verdicts.iter().find(|v| v.check == "start_stability").unwrap();
    assert!(!stability.pass);
}
