use std::path::PathBuf;

/// Errors produced by the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mask is empty (height and width must be at least 1)")]
    EmptyMask,

    #[error("unknown class id {0}")]
    UnknownClass(u8),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("every cell of the mask is ignore")]
    AllIgnored,

    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("region is empty")]
    EmptyRegion,

    #[error("zero-length segment")]
    ZeroLengthSegment,

    #[error("infeasible synthetic layout: {0}")]
    Infeasible(String),

    #[error("non-finite loss in batch {batch}")]
    NonFiniteLoss { batch: usize },

    #[error("estimator produced {got} counts for {expected} placeholders")]
    MissingCounts { expected: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("png error: {0}")]
    Png(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(arg: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            arg,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs rather than failures while running.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::NonFiniteLoss { .. } | Error::Png(_)
        )
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyMask => "empty_mask",
            Error::UnknownClass(_) => "unknown_class",
            Error::InvalidMask(_) => "invalid_mask",
            Error::AllIgnored => "all_ignored",
            Error::InvalidArgument { .. } => "invalid_argument",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::EmptyRegion => "empty_region",
            Error::ZeroLengthSegment => "zero_length_segment",
            Error::Infeasible(_) => "infeasible",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::MissingCounts { .. } => "missing_counts",
            Error::Config(_) => "config",
            Error::Manifest(_) => "manifest",
            Error::Io { .. } => "io",
            Error::Png(_) => "png",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
