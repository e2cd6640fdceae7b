use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame directory not found: {0}")]
    MissingDirectory(PathBuf),

    #[error("video has {found} frames, at least {required} are needed")]
    TooFewFrames { found: usize, required: usize },

    #[error("frame {index} is {found_w}x{found_h}, expected {expected_w}x{expected_h}")]
    DimensionMismatch {
        index: usize,
        expected_w: usize,
        expected_h: usize,
        found_w: usize,
        found_h: usize,
    },

    #[error("frame index {index} out of range (frame count {count})")]
    FrameOutOfRange { index: usize, count: usize },

    #[error("frame sequence has a gap: expected index {expected}, found {found}")]
    MissingFrame { expected: usize, found: usize },

    #[error("failed to decode {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no candidate distances to select a threshold from")]
    NoCandidates,

    #[error("homography is singular (det = {0:e})")]
    SingularHomography(f64),

    #[error("point maps to infinity under homography")]
    PointAtInfinity,

    #[error("malformed {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error("synthetic scene invalid: {0}")]
    InvalidScene(String),

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Whether the failure is attributable to user input rather than a bug or environment fault.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::NoCandidates => false,
            _ => true,
        }
    }
}
