//! Ingestion, deletion, weighting, and association diagnostics.

use std::io::Write;

use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use svylca::dataset::{
    cramers_v_matrix, kish_effective_n, listwise_delete, load_dataset, sparseness_report,
};
use svylca::{Error, ItemSchema, Role, SurveyDataset};

fn schema3() -> Vec<ItemSchema> {
    vec![
        ItemSchema::new("a", 5, Role::Indicator),
        ItemSchema::new("b", 3, Role::Indicator),
        ItemSchema::new("w", 2, Role::Weight),
    ]
}

fn write_csv(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().expect("tempfile");
    f.write_all(text.as_bytes()).expect("write");
    f
}

/// Builds a dataset of indicator items from a code matrix (0 = missing).
fn make_dataset(cards: &[u8], rows: &[&[u8]], weights: &[f64]) -> SurveyDataset {
    let items: Vec<ItemSchema> = cards
        .iter()
        .enumerate()
        .map(|(j, &c)| ItemSchema::new(&format!("item_{j}"), c, Role::Indicator))
        .collect();
    let values: Vec<u8> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    SurveyDataset::new(Vec::new(), items, values, weights.to_vec()).expect("valid dataset")
}

fn item_ids(dataset: &SurveyDataset) -> Vec<String> {
    dataset.items.iter().map(|it| it.item_id.clone()).collect()
}

#[test]
fn loads_well_formed_rows() {
    let f = write_csv("id,a,b,w\nr1,1,2,1.0\nr2,5,3,0.5\nr3,3,1,2.0\n");
    let d = load_dataset(f.path(), &schema3()).expect("load");
    assert_eq!(d.n(), 3);
    assert_eq!(d.n_items(), 2);
    assert_eq!(d.value(1, 0), Some(5));
    assert_eq!(d.weights, vec![1.0, 0.5, 2.0]);
}

#[test]
fn rejects_code_above_cardinality_naming_row_and_item() {
    let f = write_csv("id,a,b,w\nr1,1,2,1.0\nr2,6,3,0.5\n");
    match load_dataset(f.path(), &schema3()) {
        Err(Error::OutOfRange { row, item, code, cardinality }) => {
            assert_eq!(row, 2);
            assert_eq!(item, "a");
            assert_eq!(code, 6);
            assert_eq!(cardinality, 5);
        }
        other => panic!("expected OutOfRange, got {other:?}"),
    }
}

#[test]
fn reverse_coding_flips_five_point_and_three_point_scales() {
    let schema = vec![
        ItemSchema::new("a", 5, Role::Indicator).reversed(),
        ItemSchema::new("b", 3, Role::Indicator).reversed(),
        ItemSchema::new("w", 2, Role::Weight),
    ];
    let f = write_csv("id,a,b,w\nr1,1,2,1.0\nr2,4,3,1.0\n");
    let d = load_dataset(f.path(), &schema).expect("load");
    // 5-point: r -> 6 - r; 3-point: r -> 4 - r.
    assert_eq!(d.value(0, 0), Some(5));
    assert_eq!(d.value(0, 1), Some(2));
    assert_eq!(d.value(1, 0), Some(2));
    assert_eq!(d.value(1, 1), Some(1));
}

#[test]
fn empty_field_and_refusal_code_both_mark_missing() {
    let f = write_csv("id,a,b,w\nr1,,2,1.0\nr2,99,3,1.0\n");
    let d = load_dataset(f.path(), &schema3()).expect("load");
    assert_eq!(d.value(0, 0), None);
    assert_eq!(d.value(1, 0), None);
    assert_eq!(d.value(1, 1), Some(3));
}

#[test]
fn rejects_duplicate_ids_nonpositive_weights_and_bad_codes() {
    let dup = write_csv("id,a,b,w\nr1,1,1,1.0\nr1,2,2,1.0\n");
    assert!(matches!(
        load_dataset(dup.path(), &schema3()),
        Err(Error::DuplicateId { first: 1, second: 2, .. })
    ));

    let bad_w = write_csv("id,a,b,w\nr1,1,1,0.0\n");
    assert!(matches!(load_dataset(bad_w.path(), &schema3()), Err(Error::BadWeight { row: 1 })));

    let not_int = write_csv("id,a,b,w\nr1,x,1,1.0\n");
    assert!(matches!(
        load_dataset(not_int.path(), &schema3()),
        Err(Error::MalformedRow { row: 1, .. })
    ));
}

#[test]
fn listwise_drops_rows_missing_on_listed_items_only() {
    // 10 rows; rows 2, 5, 8 missing on item_0; row 3 missing on item_1
    // (not listed, so kept).
    let rows: Vec<Vec<u8>> = (0..10u8)
        .map(|i| {
            let a = if i == 2 || i == 5 || i == 8 { 0 } else { 1 + i % 3 };
            let b = if i == 3 { 0 } else { 1 + i % 2 };
            vec![a, b]
        })
        .collect();
    let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
    let d = make_dataset(&[3, 2], &refs, &[1.0; 10]);
    let (kept, report) = listwise_delete(&d, &["item_0".to_string()]).expect("delete");
    assert_eq!(kept.n(), 7);
    assert_eq!(report.n_before, 10);
    assert_eq!(report.n_after, 7);
    assert_eq!(report.per_item_missing["item_0"], 3);
    assert!((report.retention_rate - 0.7).abs() < 1e-12);
    // Row original index 3 (now index 2 of kept) still missing on item_1.
    assert_eq!(kept.value(2, 1), None);
}

#[test]
fn listwise_is_identity_on_complete_items() {
    let d = make_dataset(&[3, 2], &[&[1, 2], &[3, 1], &[2, 2]], &[1.0, 2.0, 0.5]);
    let ids = item_ids(&d);
    let (kept, report) = listwise_delete(&d, &ids).expect("delete");
    assert_eq!(kept.n(), 3);
    assert_eq!(report.retention_rate, 1.0);
    assert!(report.per_item_missing.values().all(|&m| m == 0));
}

#[test]
fn listwise_errors_when_everything_is_missing() {
    let d = make_dataset(&[3], &[&[0], &[0]], &[1.0, 1.0]);
    assert!(matches!(
        listwise_delete(&d, &["item_0".to_string()]),
        Err(Error::EmptyAfterDeletion)
    ));
}

#[test]
fn kish_formula_on_hand_weights() {
    // {1,1,2}: n_eff = (4)^2 / 6 = 16/6, deff = 3 / (16/6) = 1.125.
    let (n_eff, deff) = kish_effective_n(&[1.0, 1.0, 2.0]).expect("kish");
    assert!((n_eff - 16.0 / 6.0).abs() < 1e-12);
    assert!((deff - 1.125).abs() < 1e-12);

    let (n_eff, deff) = kish_effective_n(&[0.7; 50]).expect("kish");
    assert!((n_eff - 50.0).abs() < 1e-9);
    assert!((deff - 1.0).abs() < 1e-12);

    assert!(kish_effective_n(&[]).is_err());
}

#[test]
fn cramers_v_is_one_for_an_exact_copy() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rows: Vec<Vec<u8>> = (0..400)
        .map(|_| {
            let v = rng.random_range(1..=4u8);
            vec![v, v]
        })
        .collect();
    let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
    let d = make_dataset(&[4, 4], &refs, &vec![1.0; 400]);
    let table = cramers_v_matrix(&d, &item_ids(&d)).expect("v");
    assert!((table.v[0][1] - 1.0).abs() < 1e-9, "copy pair V = {}", table.v[0][1]);
    assert!(table.p[0][1] < 1e-6);
}

#[test]
fn cramers_v_is_near_zero_for_independent_items() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let rows: Vec<Vec<u8>> = (0..10_000)
        .map(|_| vec![rng.random_range(1..=5u8), rng.random_range(1..=5u8)])
        .collect();
    let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
    let d = make_dataset(&[5, 5], &refs, &vec![1.0; 10_000]);
    let table = cramers_v_matrix(&d, &item_ids(&d)).expect("v");
    assert!(table.v[0][1] < 0.03, "independent pair V = {}", table.v[0][1]);
}

#[test]
fn cramers_v_rejects_single_category_items() {
    let d = make_dataset(&[3, 3], &[&[1, 1], &[1, 2], &[1, 3]], &[1.0; 3]);
    assert!(matches!(
        cramers_v_matrix(&d, &item_ids(&d)),
        Err(Error::DegenerateItem(_))
    ));
}

#[test]
fn sparseness_counts_theoretical_cells_and_observed_patterns() {
    // Six 5-category and three 3-category items: 5^6 * 3^3 cells.
    let cards = [5u8, 5, 5, 5, 5, 5, 3, 3, 3];
    let row: Vec<u8> = vec![1, 2, 3, 4, 5, 1, 1, 2, 3];
    let rows: Vec<&[u8]> = vec![&row; 4];
    let d = make_dataset(&cards, &rows, &[1.0; 4]);
    let report = sparseness_report(&d, &item_ids(&d)).expect("sparseness");
    assert_eq!(report.theoretical_cells, 421_875);
    assert_eq!(report.observed_patterns, 1);
    assert!(report.sparseness_ratio > 0.999);
}

#[test]
fn sparseness_is_invariant_under_row_reordering() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rows: Vec<Vec<u8>> = (0..60)
        .map(|_| vec![rng.random_range(1..=3u8), rng.random_range(1..=2u8)])
        .collect();
    let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
    let d1 = make_dataset(&[3, 2], &refs, &vec![1.0; 60]);
    let before = sparseness_report(&d1, &item_ids(&d1)).expect("sparseness");
    rows.reverse();
    let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
    let d2 = make_dataset(&[3, 2], &refs, &vec![1.0; 60]);
    let after = sparseness_report(&d2, &item_ids(&d2)).expect("sparseness");
    assert_eq!(before.observed_patterns, after.observed_patterns);
}

proptest! {
    #[test]
    fn kish_is_scale_invariant(
        weights in proptest::collection::vec(0.05f64..20.0, 1..40),
        c in 0.01f64..100.0,
    ) {
        let (n_eff, deff) = kish_effective_n(&weights).unwrap();
        let scaled: Vec<f64> = weights.iter().map(|w| w * c).collect();
        let (n_eff_c, deff_c) = kish_effective_n(&scaled).unwrap();
        prop_assert!((n_eff - n_eff_c).abs() < 1e-8 * n_eff.max(1.0));
        prop_assert!((deff - deff_c).abs() < 1e-8 * deff.max(1.0));
    }

    #[test]
    fn kish_effective_n_never_exceeds_n(
        weights in proptest::collection::vec(0.05f64..20.0, 1..40),
    ) {
        let (n_eff, deff) = kish_effective_n(&weights).unwrap();
        prop_assert!(n_eff <= weights.len() as f64 + 1e-9);
        prop_assert!(deff >= 1.0 - 1e-12);
    }

    #[test]
    fn listwise_is_idempotent(
        codes in proptest::collection::vec(0u8..=3, 24),
    ) {
        // 12 rows x 2 items with cardinality 3; 0 encodes missing.
        if codes.chunks(2).all(|r| r[0] == 0) {
            return Ok(()); // every row dropped: error case, not idempotence
        }
        let rows: Vec<&[u8]> = codes.chunks(2).collect();
        let d = make_dataset(&[3, 3], &rows, &vec![1.0; 12]);
        let list = vec!["item_0".to_string()];
        let (once, _) = listwise_delete(&d, &list).unwrap();
        let (twice, report) = listwise_delete(&once, &list).unwrap();
        prop_assert_eq!(once.n(), twice.n());
        prop_assert_eq!(report.retention_rate, 1.0);
        for row in 0..once.n() {
            prop_assert_eq!(once.raw_row(row), twice.raw_row(row));
        }
    }

    #[test]
    fn cramers_v_matrix_is_symmetric_and_bounded(
        codes in proptest::collection::vec(1u8..=3, 90),
        weights in proptest::collection::vec(0.2f64..5.0, 30),
    ) {
        let rows: Vec<&[u8]> = codes.chunks(3).collect();
        let d = make_dataset(&[3, 3, 3], &rows, &weights);
        let ids = item_ids(&d);
        match cramers_v_matrix(&d, &ids) {
            Ok(table) => {
                for a in 0..3 {
                    prop_assert_eq!(table.v[a][a], 1.0);
                    for b in 0..3 {
                        prop_assert_eq!(table.v[a][b], table.v[b][a]);
                        prop_assert!((0.0..=1.0 + 1e-12).contains(&table.v[a][b]));
                    }
                }
            }
            // A constant column in the drawn data is a legitimate rejection.
            Err(Error::DegenerateItem(_)) => {}
            Err(other) => return Err(TestCaseError::fail(format!("{other}"))),
        }
    }
}
