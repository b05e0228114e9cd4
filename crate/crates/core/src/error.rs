use thiserror::Error;

pub type Result<T> = std::result::Result<T, VartaError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VartaError {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("latent VAR is not stationary (spectral radius {radius})")]
    NonStationary { radius: f64 },

    #[error("implied innovation covariance is not positive definite")]
    OmegaNotPd,

    #[error("linear system is singular")]
    Singular,

    #[error("eigenvalue iteration did not converge")]
    EigenNonConvergence,

    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),

    #[error("invalid marginal: {0}")]
    InvalidMarginal(String),

    /// `row` and `series` are 1-based data positions (header excluded).
    #[error("observation outside the support of series {series} at row {row}: {value}")]
    Support { row: usize, series: usize, value: f64 },

    #[error("invalid data: {0}")]
    DataInvalid(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl VartaError {
    /// Numerical failures that the optimizer treats as a barrier instead of
    /// an error.
    pub fn is_barrier(&self) -> bool {
        matches!(
            self,
            VartaError::NonStationary { .. }
                | VartaError::OmegaNotPd
                | VartaError::NotPositiveDefinite { .. }
                | VartaError::Singular
                | VartaError::EigenNonConvergence
        )
    }
}

impl From<std::io::Error> for VartaError {
    fn from(e: std::io::Error) -> Self {
        VartaError::Io(e.to_string())
    }
}
