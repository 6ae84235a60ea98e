use std::path::PathBuf;

/// Failures of a CLI command, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid configuration {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] mwdk::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl CliError {
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERICAL: i32 = 4;

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => Self::USAGE,
            CliError::Core(e) => match e {
                mwdk::Error::Parameter(_) | mwdk::Error::Config(_) => Self::USAGE,
                mwdk::Error::Numerical { .. } => Self::NUMERICAL,
                mwdk::Error::Ingestion { .. } | mwdk::Error::Data(_) | mwdk::Error::Io { .. } => Self::DATA,
            },
            CliError::Io { .. } | CliError::Csv { .. } => Self::DATA,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
