//! Error type shared by every module.
//!
//! Variants are grouped by how the CLI maps them to exit codes: config /
//! input-contract problems (exit 2), estimation failures (exit 3), and
//! tripped diagnostic guards (exit 4). See `pipeline::exit_code`.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ---- configuration / input contract ----
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed row {row}, column {column}: {message}")]
    MalformedRow {
        row: usize,
        column: String,
        message: String,
    },
    #[error("row {row}, item {item}: code {code} outside 1..={cardinality}")]
    OutOfRange {
        row: usize,
        item: String,
        code: i64,
        cardinality: u8,
    },
    #[error("row {row}: weight must be a positive finite number")]
    BadWeight { row: usize },
    #[error("duplicate respondent id {id:?} (rows {first} and {second})")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },
    #[error("unknown item id {0:?}")]
    UnknownItem(String),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("missing artifact {path}: {hint}")]
    MissingArtifact { path: String, hint: String },

    // ---- estimation ----
    #[error("listwise deletion removed every row")]
    EmptyAfterDeletion,
    #[error("class count {k} exceeds configured maximum {max}")]
    KTooLarge { k: usize, max: usize },
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("EM did not converge within {max_iter} iterations")]
    NonConvergence { max_iter: usize },
    #[error("bootstrap aborted: {failures} of {total} replicate fits failed (> 10%)")]
    BootstrapFailures { failures: usize, total: usize },
    #[error("likelihood decreased from K-1 to K ({l_small} > {l_big}); increase starts")]
    LikelihoodOrder { l_small: f64, l_big: f64 },

    // ---- diagnostic guards ----
    #[error("item {0:?} has a single observed category; association undefined")]
    DegenerateItem(String),
    #[error("classification error matrix is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("latent class {class} has no modally assigned respondents")]
    EmptyClass { class: usize },
    #[error("diagnostic guard tripped: {0}")]
    Guard(String),

    // ---- invalid call ----
    #[error("{0}")]
    Invalid(String),
    #[error("entropy is undefined for K = 1")]
    EntropyUndefined,
    #[error("brute-force guard exceeded: n*K*J = {0} > 1e7")]
    BruteForceGuard(u64),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
