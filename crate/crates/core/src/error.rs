use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mismatched lengths: {what} ({left} vs {right})")]
    MismatchedLengths {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFiniteValue(&'static str),

    #[error("zero vector cannot be normalized")]
    ZeroVector,

    #[error("prompt set is empty")]
    EmptyPromptSet,

    #[error("duplicate prompt: {0:?}")]
    DuplicatePrompt(String),

    #[error("malformed payload: {0}")]
    MalformedPayload(String),

    #[error("unsupported format version {found} (max supported {supported})")]
    VersionUnsupported { found: u16, supported: u16 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("encoder endpoint unavailable: {0}")]
    EndpointUnavailable(String),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("generation failed at prompt index {index}: {message}")]
    GenerationFailure { index: usize, message: String },

    #[error("encoder failure: {0}")]
    EncoderFailure(#[source] Box<Error>),

    #[error("captioning failed for example {index}")]
    CaptionFailure { index: usize },

    #[error("duplicate model id {0:?}")]
    DuplicateModelId(String),

    #[error("model {0:?} already registered")]
    DuplicateModel(String),

    #[error("unknown model {0:?}")]
    UnknownModel(String),

    #[error("specification assignment failed: {0}")]
    AssignmentFailure(#[source] Box<Error>),

    #[error("registry is empty")]
    EmptyRegistry,

    #[error("invalid k = {0}")]
    InvalidK(usize),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("insufficient examples: need {needed}, group has {available}")]
    InsufficientExamples { needed: usize, available: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code used in error envelopes.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MismatchedLengths { .. } => "MismatchedLengths",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonFiniteValue(_) => "NonFiniteValue",
            Error::ZeroVector => "ZeroVector",
            Error::EmptyPromptSet => "EmptyPromptSet",
            Error::DuplicatePrompt(_) => "DuplicatePrompt",
            Error::MalformedPayload(_) => "MalformedPayload",
            Error::VersionUnsupported { .. } => "VersionUnsupported",
            Error::EmptyInput(_) => "EmptyInput",
            Error::InvalidInput(_) => "InvalidInput",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EndpointUnavailable(_) => "EndpointUnavailable",
            Error::ProtocolViolation(_) => "ProtocolViolation",
            Error::GenerationFailure { .. } => "GenerationFailure",
            Error::EncoderFailure(_) => "EncoderFailure",
            Error::CaptionFailure { .. } => "CaptionFailure",
            Error::DuplicateModelId(_) => "DuplicateModelId",
            Error::DuplicateModel(_) => "DuplicateModel",
            Error::UnknownModel(_) => "UnknownModel",
            Error::AssignmentFailure(_) => "AssignmentFailure",
            Error::EmptyRegistry => "EmptyRegistry",
            Error::InvalidK(_) => "InvalidK",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::InsufficientExamples { .. } => "InsufficientExamples",
            Error::Io(_) => "Io",
            Error::Json(_) => "MalformedPayload",
        }
    }
}
