use thiserror::Error;

/// Errors raised while parsing an instance file.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("line {line}: missing or malformed header (expected `CKM nf nc k`)")]
    Header { line: usize },
    #[error("line {line}: malformed {field}: `{token}`")]
    Field {
        line: usize,
        field: &'static str,
        token: String,
    },
    #[error("line {line}: unexpected record `{token}`")]
    Record { line: usize, token: String },
    #[error("line {line}: capacity must be a positive integer, got `{token}`")]
    Capacity { line: usize, token: String },
    #[error("line {line}: k out of range (1 <= k <= {nf}), got {k}")]
    KOutOfRange { line: usize, k: usize, nf: usize },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("expected {expected} {what} records, found {found}")]
    Count {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: coordinates and an explicit metric are mutually exclusive")]
    MixedMetric { line: usize },
    #[error("no metric: give coordinates on every record or a `D` block")]
    NoMetric,
    #[error("metric block has {found} entries, expected {expected}")]
    MetricSize { expected: usize, found: usize },
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration enumeration for |B| = {size}, l1 = {l1} needs {count} configurations, budget is {budget}")]
    BudgetExceeded {
        size: usize,
        l1: usize,
        count: u128,
        budget: usize,
    },
    #[error("[{stage}] invariant violated: {detail}")]
    Invariant { stage: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invariant(stage: &'static str, detail: impl Into<String>) -> Self {
        Error::Invariant {
            stage,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
