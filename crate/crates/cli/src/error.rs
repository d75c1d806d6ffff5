use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Artifact {
        path: String,
        #[source]
        source: symctl_core::Error,
    },
    #[error("trace: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace line {line}: {msg}")]
    Trace { line: usize, msg: String },
    #[error(transparent)]
    Core(#[from] symctl_core::Error),
}

impl CliError {
    /// 0 success, 1 monitor failure, 2 no controller or not found,
    /// 3 validation, 4 runtime refusal.
    pub fn exit_code(&self) -> i32 {
        use symctl_core::Error as E;
        let core = match self {
            CliError::Core(e) => e,
            _ => return 3,
        };
        match core {
            E::NoController(_) | E::NotFound(_) => 2,
            E::Refusal(_) | E::Inconsistent(_) => 4,
            _ => 3,
        }
    }
}
