use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read image {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },

    #[error("image has {planes} plane(s) but sample is labelled {spectrum}")]
    BandMismatch { planes: usize, spectrum: String },

    #[error("crop {target_w}x{target_h} does not fit in {width}x{height}")]
    TargetTooLarge {
        width: usize,
        height: usize,
        target_w: usize,
        target_h: usize,
    },

    #[error("operation needs an RGB image, got band {0}")]
    NotColorImage(String),

    #[error("operation needs a single-plane image, got band {0}")]
    NotSinglePlane(String),

    #[error("segmentation failed: {0}")]
    SegmentationFailed(String),

    #[error("pupil circle is not inside the limbus circle")]
    BoundaryOrderViolation,

    #[error("normalized iris has too few valid samples ({valid} of {total})")]
    EmptyValidRegion { valid: usize, total: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("incompatible iris codes: {0}")]
    IncompatibleCodes(String),

    #[error("only {valid} jointly valid bits, need at least {required}")]
    InsufficientOverlap { valid: usize, required: usize },

    #[error("score list is empty: {0}")]
    EmptyScoreList(&'static str),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("iris {0} has visible-light samples but no NIR enrollment")]
    MissingEnrollment(String),

    #[error("iris {0} is labelled with more than one eye color")]
    InconsistentEyeColor(String),

    #[error("ground truth geometry does not fit the {width}x{height} frame")]
    GeometryOutOfFrame { width: usize, height: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed iris code file: {0}")]
    CodeFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnreadableFile { .. } => "UnreadableFile",
            Error::BandMismatch { .. } => "BandMismatch",
            Error::TargetTooLarge { .. } => "TargetTooLarge",
            Error::NotColorImage(_) => "NotColorImage",
            Error::NotSinglePlane(_) => "NotSinglePlane",
            Error::SegmentationFailed(_) => "SegmentationFailed",
            Error::BoundaryOrderViolation => "BoundaryOrderViolation",
            Error::EmptyValidRegion { .. } => "EmptyValidRegion",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::IncompatibleCodes(_) => "IncompatibleCodes",
            Error::InsufficientOverlap { .. } => "InsufficientOverlap",
            Error::EmptyScoreList(_) => "EmptyScoreList",
            Error::Parse { .. } => "ParseError",
            Error::MissingEnrollment(_) => "MissingEnrollment",
            Error::InconsistentEyeColor(_) => "InconsistentEyeColor",
            Error::GeometryOutOfFrame { .. } => "GeometryOutOfFrame",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::CodeFormat(_) => "CodeFormat",
            Error::Io(_) => "IoError",
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
