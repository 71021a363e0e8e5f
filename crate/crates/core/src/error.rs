use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("compatibility error: {message} (residual {residual:e})")]
    Compatibility { message: String, residual: f64 },

    #[error("linear solver did not converge after {iterations} iterations (last relative residual {:e})", history.last().copied().unwrap_or(f64::NAN))]
    Solver { iterations: usize, history: Vec<f64> },

    #[error("boundary closure failed at boundary node {node}: residual {residual:e}")]
    BoundaryClosure { node: usize, residual: f64 },

    #[error("positivity lost at t = {t}: min R = {min_r:e}")]
    Positivity { t: f64, min_r: f64 },

    #[error("amplitude {epsilon} destroys positivity of R; largest admissible amplitude is about {max_admissible}")]
    Amplitude { epsilon: f64, max_admissible: f64 },

    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;
