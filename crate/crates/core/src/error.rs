use std::path::PathBuf;

use relsrl_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("vocabulary: {0}")]
    Vocab(String),
    #[error("invalid instance `{id}`: {reason}")]
    Instance { id: String, reason: String },
    #[error("invalid span: {0}")]
    Span(String),
    #[error("instance `{id}` needs {len} positions but only {max} are available")]
    Length { id: String, len: usize, max: usize },
    #[error("unknown label `{0}`")]
    Label(String),
    #[error("cannot pair {gold} gold instances with {predicted} predictions")]
    Pairing { gold: usize, predicted: usize },
    #[error("record {record}: {message}")]
    Schema { record: usize, message: String },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("non-finite loss at epoch {epoch}, batch {batch}{}", param.as_ref().map(|p| format!(" (parameter `{p}`)")).unwrap_or_default())]
    NonFinite {
        epoch: usize,
        batch: usize,
        param: Option<String>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("nothing to {0}")]
    Empty(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn file_error(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::File { path, source }
}
