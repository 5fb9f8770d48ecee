//! Survey-weighted latent class analysis (LCA) for polytomous indicators,
//! with the estimators a profile analysis of weighted survey data needs
//! around the measurement model itself:
//!
//! - [`dataset`]: CSV ingestion, schema validation, listwise deletion,
//!   Kish effective sample size, bias-corrected weighted Cramér's V, and
//!   response-pattern sparseness diagnostics.
//! - [`lca`]: multi-start EM estimation of the weighted latent class model,
//!   posterior class probabilities, entropy, bivariate residuals, and
//!   bootstrap prevalence intervals.
//! - [`selection`]: information criteria (BIC/SABIC/AIC), the parametric
//!   bootstrap likelihood-ratio test, the adjusted likelihood-ratio test for
//!   adjacent class counts, and class-enumeration over K = 1..K_max.
//! - [`distal`]: classification-error-corrected (BCH) distal-outcome means
//!   with sandwich covariance, Wald equality tests, Holm-Bonferroni pairwise
//!   contrasts, and naive / ML three-step comparators.
//! - [`regress`]: survey-weighted multinomial logistic regression of modal
//!   class membership with sandwich variance, odds ratios, McFadden R²,
//!   Hausman-McFadden IIA checks, VIF, and predicted profiles.
//! - [`robustness`]: leave-one-out indicator sensitivity, estimator
//!   comparison, configural invariance via Tucker's congruence, and
//!   random-start stability.
//! - [`simulate`]: seeded synthetic-data generation from known parameters
//!   and brute-force oracles used throughout the test suites.
//! - [`pipeline`]: the staged command-line pipeline (prepare → enumerate →
//!   profile → distal → regress → robustness) plus artifact serialization.
//!
//! # Determinism
//!
//! Every stochastic routine takes an explicit `u64` seed and draws from
//! ChaCha8 (via [`rand_chacha::ChaCha8Rng`]); parallel work units (random
//! starts, bootstrap replicates) derive per-unit seeds with a SplitMix64
//! step and are merged in a fixed order, so results are bit-identical
//! across runs and thread counts of the same build.

pub mod dataset;
pub mod distal;
pub mod error;
pub mod lca;
pub mod pipeline;
pub mod regress;
pub mod report;
pub mod rng;
pub mod robustness;
pub mod selection;
pub mod simulate;

pub use dataset::{DeletionReport, ItemSchema, Role, SparsenessReport, SurveyDataset};
pub use error::{Error, Result};
pub use lca::{EmConfig, LcaModel, PosteriorMatrix};
pub use selection::{EnumerationTable, FitRow};
pub use simulate::GeneratorSpec;

/// Configures the global rayon thread pool. Call at most once, before any
/// parallel work; later calls return an error from rayon and are ignored.
pub fn set_thread_count(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
}
