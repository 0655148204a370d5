use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] vidprop::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration, 3 for input/output, 4 for classifier failures.
    pub fn exit_code(&self) -> u8 {
        use vidprop::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(e) => match e {
                E::InvalidParameter { .. } | E::InvalidSpec(_) => 2,
                E::Classifier(_) => 4,
                E::Io { .. }
                | E::Json(_)
                | E::MalformedImage(_)
                | E::BadMagic(_)
                | E::Truncated { .. }
                | E::DimensionMismatch { .. }
                | E::EvalMismatch(_)
                | E::OutOfBounds { .. }
                | E::InvalidBox(_) => 3,
                _ => 1,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
