use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty softmax input")]
    EmptySoftmax,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("shape mismatch between connectome and delta")]
    ShapeMismatch,

    #[error("weights diverged")]
    Diverged,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("not an IDX file")]
    NotIdx,

    #[error("image/label count mismatch")]
    CountMismatch,

    #[error("unexpected end of data")]
    UnexpectedEof,

    #[error("expected 785 fields at line {line}")]
    CsvFieldCount { line: usize },

    #[error("invalid value at line {line}: {reason}")]
    CsvValue { line: usize, reason: String },

    #[error("not a connectome file")]
    NotConnectome,

    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("non-finite weight in connectome file")]
    NonFiniteWeight,

    #[error("{0} trailing bytes after connectome data")]
    TrailingData(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no deltas to merge")]
    NoDeltas,

    #[error("worker failed on batch {batch}: {source}")]
    Worker {
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("baseline worker count missing")]
    MissingBaseline,

    #[error("unknown worker count {0}")]
    UnknownWorkerCount(usize),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Maps a short read onto the format-level "unexpected end of data" error.
    pub(crate) fn from_read(err: io::Error) -> Self {
        if err.kind() == io::ErrorKind::UnexpectedEof {
            Error::UnexpectedEof
        } else {
            Error::Io(err)
        }
    }
}
