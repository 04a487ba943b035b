use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Invalid(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix asymmetry {asymmetry:e} exceeds tolerance {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("nonnegative-definiteness check failed for {what}: min eigenvalue {min_eigenvalue:e} below -{threshold:e}")]
    NotNnd {
        what: String,
        min_eigenvalue: f64,
        threshold: f64,
    },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("quadrature grid too coarse: estimated mass error {estimated:e} exceeds tolerance {tolerance:e}")]
    Quadrature { estimated: f64, tolerance: f64 },

    #[error("negative predictive variance {0:e}")]
    NegativeVariance(f64),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotNnd { .. }
                | Error::Factorization(_)
                | Error::Quadrature { .. }
                | Error::NegativeVariance(_)
        )
    }
}
