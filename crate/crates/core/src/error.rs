use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("{what} needs C({d},{s}) = {count:.3e} support enumerations, above the limit {limit:.0e}; use the certified lower bound instead")]
    CombinatorialGuard {
        what: &'static str,
        d: usize,
        s: usize,
        count: f64,
        limit: f64,
    },

    #[error("state-space enumeration over 2^{p} states exceeds the limit 2^{limit}; use Gibbs sampling instead")]
    EnumerationGuard { p: usize, limit: usize },

    #[error("degenerate curvature: {name} = {value} must be positive")]
    DegenerateCurvature { name: &'static str, value: f64 },

    #[error("non-finite log quasi-likelihood at the initial state")]
    NonFiniteInit,

    #[error("summary has no retained draws")]
    NoDraws,

    #[error("quadrature truncation: {fraction:.3e} of the mass lies within two cells of the grid boundary (limit {limit:.0e}); widen the grid")]
    Truncation { fraction: f64, limit: f64 },

    #[error("unsupported cone/normalization pair {cone}/{norm}; supported: full/l1, full/l2, s-sparse/l1, s-sparse/l2, pattern/l1, pattern/l2")]
    UnsupportedMargin { cone: String, norm: String },

    #[error("config: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("parse error at {path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user input rather than by a computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Parse { .. }
                | Error::InvalidArgument { .. }
                | Error::DimensionMismatch { .. }
        )
    }
}
