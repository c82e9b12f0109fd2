use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("vocabulary cap {cap} does not exceed the {reserved} reserved tokens")]
    VocabCapTooSmall { cap: usize, reserved: usize },

    #[error("sentence pair has no word alignment")]
    MissingAlignment,

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("id {id} outside vocabulary of size {size}")]
    OutOfVocab { id: usize, size: usize },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("non-finite loss {loss} at batch {batch}")]
    NonFiniteLoss { batch: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
