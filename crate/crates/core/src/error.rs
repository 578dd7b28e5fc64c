use std::path::PathBuf;

/// Errors produced by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read or write {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate passage id `{0}`")]
    DuplicatePassage(String),
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown embedder `{0}`")]
    UnknownEmbedder(String),
    #[error("unknown encoder `{0}`")]
    UnknownEncoder(String),
    #[error("unresolvable anchor reference `{0}`")]
    UnresolvedAnchor(String),
    #[error("unknown passage `{0}`")]
    UnknownPassage(String),
    #[error("episode already terminated")]
    Terminated,
    #[error("all candidate actions are masked")]
    AllMasked,
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("empty score list")]
    EmptyScores,
    #[error("strategy parse error at position {position}: {message}")]
    Strategy { position: usize, message: String },
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("no trace for question `{0}`")]
    MissingTrace(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
