use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("graph already has reverse relations")]
    AlreadyAugmented,

    #[error("graph must be reverse-augmented first")]
    NotAugmented,

    #[error("{what} index {index} out of range (size {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("model needs at least one entity and one relation")]
    EmptyVocabulary,

    #[error("embedding table is empty")]
    EmptyTable,

    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),

    #[error("query list is empty")]
    EmptyQueries,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
