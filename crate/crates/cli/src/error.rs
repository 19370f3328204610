use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{field}: {message}")]
    Config { field: String, message: String },

    #[error("missing input {}: {hint}", path.display())]
    MissingInput { path: PathBuf, hint: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: rolpv::Error },

    #[error(transparent)]
    Core(#[from] rolpv::Error),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        source: Box<CliError>,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use rolpv::Error as E;
        match self {
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::MissingInput { .. } | CliError::Io { .. } | CliError::File { .. } => EXIT_IO,
            CliError::Stage { source, .. } => source.exit_code(),
            CliError::Core(e) => match e {
                E::Divergence { .. }
                | E::NonFiniteGradient { .. }
                | E::Instability { .. }
                | E::NoConvergence { .. }
                | E::NonFinite(_) => EXIT_DIVERGENCE,
                E::Shape { .. } | E::Parameter(_) | E::Config(_) | E::DegenerateChannel { .. } => EXIT_CONFIG,
                E::Io(_) | E::Parse { .. } | E::Model(_) | E::Json(_) => EXIT_IO,
                _ => EXIT_FAILURE,
            },
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> CliError {
        match self {
            s @ CliError::Stage { .. } => s,
            other => CliError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}
