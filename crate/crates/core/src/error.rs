use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("row {row} has {found} columns, expected {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {index} has zero norm")]
    ZeroRow { index: usize },

    #[error("resource limit: {requested} elements requested, budget is {budget}")]
    Resource { requested: usize, budget: usize },

    #[error("failed to converge: {0}")]
    Convergence(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("no baseline run at compute {computes:?}")]
    UnmatchedCompute { computes: Vec<f64> },

    #[error("baseline loss undefined at compute {0}")]
    UndefinedBaseline(f64),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least two clusters with two members each, found {0}")]
    InsufficientClusters(usize),

    #[error("negative scores have zero variance")]
    ZeroVariance,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("mismatch: {0}")]
    Mismatch(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by invalid arguments or input files, as opposed
    /// to numerical or runtime failures.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Convergence(_) | Error::Resource { .. }
        )
    }
}
