use thiserror::Error;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Solver,
    Statistics,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid truncated space: n_max = {n_max} (need at least 2 Fock states)")]
    InvalidSpace { n_max: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("dispersive quantity requested with zero qubit-cavity detuning")]
    DispersiveLimit,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("series did not converge within {terms} terms (last relative term {last_rel:.3e})")]
    Accuracy { terms: usize, last_rel: f64 },

    #[error("value overflows f64 (log-magnitude {log_mag:.3e})")]
    Overflow { log_mag: f64 },

    #[error("steady state is degenerate: {0}")]
    Degenerate(String),

    #[error("linear solve failed: {reason} (residual {residual:.3e})")]
    Solver { reason: String, residual: f64 },

    #[error("step size underflow at t = {t:.6e} (dt = {dt:.3e}); the problem is too stiff, reduce n_max or use an implicit method")]
    Stiffness { t: f64, dt: f64 },

    #[error("state is not normalized: norm = {norm:.12}")]
    NotNormalized { norm: f64 },

    #[error("trajectory step failed at t = {t:.6e}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no matching samples: {0}")]
    EmptyStatistics(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidSpace { .. }
            | Error::InvalidParams(_)
            | Error::Config(_)
            | Error::Precondition(_)
            | Error::Dimension { .. }
            | Error::DispersiveLimit => ErrorClass::Config,
            Error::EmptyStatistics(_) => ErrorClass::Statistics,
            _ => ErrorClass::Solver,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
