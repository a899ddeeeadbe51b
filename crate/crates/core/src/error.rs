use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {message}")]
    Parse { what: String, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate concept id {0:?}")]
    DuplicateConcept(String),

    #[error("unknown paradigm {0:?} (expected sentence, picture or wordcloud)")]
    UnknownParadigm(String),

    #[error("concept {0:?} missing from embedding file")]
    MissingConcept(String),

    #[error("unknown region {0:?}")]
    UnknownRegion(String),

    #[error("selection is empty: {0}")]
    EmptySelection(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fold {fold}: training split contains a single class")]
    SingleClassFold { fold: usize },

    #[error("ridge system is singular with lambda = 0; use lambda > 0")]
    SingularSystem,

    #[error("zero-norm vector at row {0}")]
    ZeroNorm(usize),

    #[error("non-finite value in {0}")]
    NonFinite(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.into())
        } else {
            Error::Io {
                path: path.into(),
                source,
            }
        }
    }

    pub fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }
}
