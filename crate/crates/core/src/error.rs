use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {kind} id {id} (have {len})")]
    InvalidId {
        kind: &'static str,
        id: usize,
        len: usize,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("grids misaligned in dimension {dim}: {msg}")]
    Alignment { dim: usize, msg: String },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("no controller: {0}")]
    NoController(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("model inconsistency: {0}")]
    Inconsistent(String),
    #[error("runtime refusal: {0}")]
    Refusal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
