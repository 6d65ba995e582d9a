use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value while evaluating {context} at offset {offset:?}")]
    NonFinite {
        context: &'static str,
        offset: Vec<f64>,
    },

    #[error("unsupported: {0}")]
    Capability(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("ill-conditioned jacobian: smallest singular value {sigma_min:e} below {threshold:e}")]
    Conditioning { sigma_min: f64, threshold: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("construction infeasible at column {column}: per-column system is singular (sigma_min {sigma_min:e})")]
    Infeasible { column: usize, sigma_min: f64 },

    #[error("slot {slot} bin {bin} never appears in the in-domain mask")]
    SupportViolation { slot: usize, bin: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at step {step} (loss {loss:e})")]
    Divergence { step: usize, loss: f64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for configuration problems,
    /// 3 for numeric or runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Precondition(_)
            | Error::SupportViolation { .. }
            | Error::Dimension { .. }
            | Error::Format(_)
            | Error::Json(_) => 2,
            _ => 3,
        }
    }
}
