use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate box {0}")]
    DegenerateBox(String),

    #[error("degenerate point correspondence (collinear or too few points)")]
    DegenerateCorrespondence,

    #[error("matrix too large for exhaustive search: min dimension {0} > 8")]
    TooLarge(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty uncertainty history")]
    EmptyHistory,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("frame {got} does not follow frame {previous}")]
    OutOfOrderFrame { previous: u32, got: u32 },

    #[error("no tracklet present at frame {0}")]
    NoCandidates(u32),

    #[error("tracklet {track_id} has no record before frame {frame}")]
    NoHistory { track_id: u32, frame: u32 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("no ground truth for frame {frame}, detection {det_index}")]
    MissingGroundTruth { frame: u32, det_index: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: non-positive box size")]
    NonPositiveSize { line: usize },

    #[error("no embedding for frame {frame}, detection {det_index}")]
    MissingEmbedding { frame: u32, det_index: usize },

    #[error("duplicate embedding for frame {frame}, detection {det_index}")]
    DuplicateEmbedding { frame: u32, det_index: usize },

    #[error("i/o failure on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig { field: field.to_string(), reason: reason.into() }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }
}
