use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid score scale: {0}")]
    InvalidScale(String),

    #[error("label {label} outside score range [{min}, {max}]")]
    LabelOutOfRange { label: f64, min: f64, max: f64 },

    #[error("distributions live on different score scales")]
    ScaleMismatch,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("fusion rule drops {dropped} of {available} judges")]
    InsufficientJudges { dropped: usize, available: usize },

    #[error("difficulty degree required but missing{}", .0.as_deref().map(|id| format!(" for sample {id}")).unwrap_or_default())]
    MissingDd(Option<String>),

    #[error("predicted difficulty degree requested but the model has no DD head")]
    MissingDdHead,

    #[error("judge panel of size {found} where {expected} was expected")]
    InconsistentPanelSize { expected: usize, found: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("series is constant; rank correlation undefined")]
    DegenerateSeries,

    #[error("correlation {0} is not a valid value in [-1, 1]")]
    RhoOutOfRange(f64),

    #[error("degenerate normalization range: min = max = {0}")]
    DegenerateRange(f64),

    #[error("score {value} outside [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("judge score {0} is not on the half-point grid")]
    NonHalfPointScore(f64),

    #[error("video of {video_len} frames is shorter than one {clip_len}-frame clip")]
    VideoTooShort { video_len: usize, clip_len: usize },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("checkpoint was trained in mode {found}, config asks for {expected}")]
    ModeMismatch { expected: String, found: String },

    #[error("evaluation report missing: {0}")]
    ReportMissing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }
}
