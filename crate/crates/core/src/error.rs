use thiserror::Error;

/// Errors produced anywhere in the annotation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("histogram has zero L1 mass ({context})")]
    ZeroHistogram { context: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("image {0} has no usable ground truth")]
    MissingGroundTruth(String),

    #[error("image {0} has candidates without objectness scores")]
    MissingScores(String),

    #[error("invalid rank labels for image {image_id}: {reason}")]
    InvalidLabels { image_id: String, reason: String },

    #[error("training data yields no preference pairs")]
    NoPairs,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least {needed} images for cross-validation, found {found}")]
    TooFewImages { needed: usize, found: usize },

    #[error("training labels are all one class")]
    DegenerateLabels,

    #[error("need more than {n_aux} classes for the split protocol, found {found}")]
    InsufficientClasses { n_aux: usize, found: usize },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error in image {image_id}: {reason}")]
    Validation { image_id: String, reason: String },

    #[error("unsupported document version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn zero_histogram(context: impl Into<String>) -> Self {
        Error::ZeroHistogram {
            context: context.into(),
        }
    }

    pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}
