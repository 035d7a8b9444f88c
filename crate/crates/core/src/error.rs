use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular (smallest singular value {min_singular:e})")]
    SingularMatrix { min_singular: f64 },

    #[error("point outside the domain of definition: {0}")]
    Domain(String),

    #[error("transform vanished ({0:e}); the input is not a valid Cauchy transform")]
    ZeroTransform(f64),

    #[error("recovered density is negative ({value:e}) at t = {at}")]
    NonPositiveDensity { at: f64, value: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e}){}", .context.as_deref().map(|c| format!(" at {c}")).unwrap_or_default())]
    NoConvergence {
        iterations: usize,
        residual: f64,
        context: Option<String>,
    },

    #[error("transform is constant on the disk; subordination value is not identifiable")]
    DegenerateTransform,

    #[error("finite-difference Jacobian is numerically singular (reciprocal condition {rcond:e})")]
    JacobianSingular { rcond: f64 },

    #[error("unknown measure family `{0}`")]
    UnknownFamily(String),

    #[error("invalid parameters: {0}")]
    BadParams(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn no_convergence(iterations: usize, residual: f64) -> Self {
        Error::NoConvergence {
            iterations,
            residual,
            context: None,
        }
    }

    /// Attaches a location (a grid point, a matrix argument) to a
    /// convergence failure; other variants pass through unchanged.
    pub fn at(self, where_: impl Into<String>) -> Self {
        match self {
            Error::NoConvergence {
                iterations,
                residual,
                ..
            } => Error::NoConvergence {
                iterations,
                residual,
                context: Some(where_.into()),
            },
            other => other,
        }
    }
}
