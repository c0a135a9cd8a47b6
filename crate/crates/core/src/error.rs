use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("signal too short: {samples} samples, need at least {frame_len}")]
    TooShort { samples: usize, frame_len: usize },

    #[error("no speech detected")]
    NoSpeech,

    #[error("degenerate split: {total} items with {train} in the training part")]
    DegenerateSplit { total: usize, train: usize },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("cannot enroll speaker {speaker}: {reason}")]
    Enrollment { speaker: String, reason: String },

    #[error("missing features for speaker {0}")]
    MissingFeatures(String),

    #[error("error-rate difference never changes sign over the threshold sweep")]
    DegenerateDistribution,

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
