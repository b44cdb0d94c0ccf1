//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("no voiced speech")]
    NoVoicedSpeech,

    #[error("non-positive frequency: {0}")]
    NonPositiveFrequency(f64),

    #[error("unsupported wav format in {path}: {reason}")]
    WavFormat { path: String, reason: String },

    #[error("thresholds must be strictly ascending and positive, got {0:?}")]
    BadThresholds([f64; 3]),

    #[error("{attribute} value {value:?} is not in the configured vocabulary {vocabulary:?}")]
    UnknownVocabEntry {
        attribute: &'static str,
        value: String,
        vocabulary: Vec<String>,
    },

    #[error("malformed label string {0:?}")]
    MalformedLabel(String),

    #[error("invalid session {session_id}: {reason}")]
    InvalidSession { session_id: String, reason: String },

    #[error("caption level mismatch: expected {expected} captions, got {got}")]
    CaptionLevelMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("caption set is missing the {0} style")]
    MissingCaptionStyle(&'static str),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("sampling fraction must be in (0, 1], got {0}")]
    BadFraction(f64),

    #[error("predictor assigned zero probability to an observed code: impossible observation")]
    ImpossibleObservation,

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("scale entries must be positive and finite")]
    NonPositiveScale,

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("manifest error at line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("judgment record {sample_id}: overall is true but attribute {attribute} is false")]
    InconsistentJudgment {
        sample_id: String,
        attribute: &'static str,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("params file error: {0}")]
    ParamsFile(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
