use std::path::PathBuf;

/// Errors raised by the evaluation toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("overlapping entity mentions in {stream} at tokens {start}..{end}")]
    OverlappingMentions {
        stream: String,
        start: usize,
        end: usize,
    },

    #[error("invalid entity table: {0}")]
    InvalidEntityTable(String),

    #[error("{path}:{line}: malformed JSONL: {message}")]
    MalformedLine {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unknown document ids: {}", .0.join(", "))]
    MissingIds(Vec<String>),

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("undefined correlation: zero variance in {0}")]
    UndefinedCorrelation(String),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid toy model: {0}")]
    InvalidModel(String),

    #[error("search space of {0} sequences exceeds the exhaustive-search bound")]
    SearchSpaceTooLarge(u128),

    #[error("external reader failed: {0}")]
    ExternalReader(String),

    #[error("missing gold answer for question {0}")]
    MissingGold(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 for internal invariant violations, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
