use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate channel {channel} in {context}: zero range")]
    DegenerateChannel { context: String, channel: usize },

    /// `losses` holds the full-data losses recorded before the failure.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence {
        epoch: usize,
        detail: String,
        losses: Vec<f64>,
    },

    #[error("non-finite gradient at parameter index {index}")]
    NonFiniteGradient { index: usize },

    #[error("{method} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("simulation became non-finite at step {step}")]
    Instability { step: usize, values: Vec<f64> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("best fit rate undefined: reference signal has zero variance")]
    UndefinedBfr,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("model file: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context: context.into(),
            expected,
            actual,
        }
    }
}

pub(crate) fn check_len(context: &str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::shape(context, expected, actual))
    }
}
