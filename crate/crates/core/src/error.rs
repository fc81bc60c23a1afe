use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty segment")]
    EmptySegment,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("need two points")]
    NeedTwoPoints,

    #[error("invalid law parameter: {0}")]
    InvalidLawParameter(String),

    #[error("mu out of curvature range: {0}")]
    MuOutOfRange(String),

    #[error("nonpositive drift suspected: {0}")]
    NonpositiveDrift(String),

    #[error("degenerate design")]
    DegenerateDesign,

    #[error("plane separates nothing")]
    PlaneSeparatesNothing,

    #[error("model too complex for n (V_m = {v_m}, n = {n})")]
    ModelTooComplex { v_m: f64, n: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn law(msg: impl Into<String>) -> Self {
        Error::InvalidLawParameter(msg.into())
    }
}
