use mrh_core::MrhError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A malformed value; `line` is the 1-based line in the input file.
    #[error("{source_name}, line {line}: {msg}")]
    Parse {
        source_name: String,
        line: u64,
        msg: String,
    },

    #[error("{source_name}: {msg}")]
    Schema { source_name: String, msg: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Model(#[from] MrhError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("optimizer did not converge; the best point found was reported")]
    NotConverged,
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 2 for bad input, 3 for numerical non-convergence, 1 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Schema { .. } | CliError::Usage(_) | CliError::Json { .. } => 2,
            CliError::Model(MrhError::Convergence { .. } | MrhError::Quadrature { .. }) => 3,
            CliError::Model(_) => 2,
            CliError::NotConverged => 3,
            CliError::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
