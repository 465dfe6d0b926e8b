use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("integrator step rejected at t = {time_us:.4} us: {reason}")]
    Integrator { time_us: f64, reason: String },

    #[error("fit did not converge (best weighted residual {best_residual:.6e}): {reason}")]
    Fit { best_residual: f64, reason: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("malformed record data: {0}")]
    Record(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
