use thiserror::Error;

/// A single broken invariant, naming the offending field and the rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}", self.field, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model invalid: {}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("shape mismatch: {context} (expected {expected}, got {got})")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("enumeration too large: {count} configurations exceeds cap {cap}")]
    EnumerationTooLarge { count: u128, cap: u128 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("bad argument: {0}")]
    BadArgument(String),

    #[error("singular moment matrix at level {level}, nuisance {nuisance}")]
    SingularMoment { level: usize, nuisance: usize },

    #[error("non-finite loss at epoch {epoch}; try a lower learning rate")]
    NonFiniteLoss { epoch: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Errors from the persistence layer (datasets, models, nets, forests).
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("version mismatch: found {found}, reader supports up to {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("checksum mismatch for {path}: manifest {expected}, file {actual}")]
    ChecksumMismatch {
        path: String,
        expected: String,
        actual: String,
    },

    #[error(transparent)]
    Model(#[from] ModelError),
}
