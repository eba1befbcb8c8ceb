use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid action {0}; expected -1, 0 or +1")]
    InvalidAction(i64),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("singular linear system of size {size} (numerical rank {rank}); use a positive ridge")]
    SingularSystem { size: usize, rank: usize },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("sample size n = {n} does not exceed V_max^2 * c1 = {threshold:.6e}; the bound is vacuous")]
    SampleSizeTooSmall { n: usize, threshold: f64 },

    #[error("invalid Markov chain: {0}")]
    InvalidChain(String),

    #[error("chain is not irreducible: state {from} cannot reach state {to}")]
    NotIrreducible { from: usize, to: usize },

    #[error("generative model cannot resample from state {0:?}")]
    GenerativeAccessUnavailable(Vec<f64>),

    #[error("policy training failed: {0}")]
    TrainingFailed(String),

    #[error("missing file: {0}")]
    MissingFile(std::path::PathBuf),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures that come from the numerics rather than from the
    /// configuration or the filesystem.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem { .. }
                | Error::NotPositiveSemidefinite { .. }
                | Error::SampleSizeTooSmall { .. }
                | Error::TrainingFailed(_)
        )
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
