use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt weight container: {0}")]
    CorruptContainer(String),

    #[error("shape mismatch for tensor `{name}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("unsupported dtype `{dtype}` for tensor `{name}`")]
    UnsupportedDtype { name: String, dtype: String },

    #[error("tokenizer error: {0}")]
    Tokenizer(String),

    #[error("unknown token id {0}")]
    UnknownToken(u32),

    #[error("sequence of {len} tokens exceeds max context {max}")]
    ContextOverflow { len: usize, max: usize },

    #[error("layer {layer} out of range (model has {layer_count} layers)")]
    LayerOutOfRange { layer: usize, layer_count: usize },

    #[error("invalid intervention: {0}")]
    InvalidIntervention(String),

    #[error("empty prompt")]
    EmptyPrompt,

    #[error("text too short: {0}")]
    TextTooShort(String),

    #[error("corpus parse error: {0}")]
    CorpusParse(String),

    #[error("corpus validation failed:\n  {}", .0.join("\n  "))]
    CorpusInvalid(Vec<String>),

    #[error("unknown emotion `{0}`")]
    UnknownEmotion(String),

    #[error("extraction failed for `{emotion}`: {reason}")]
    ExtractionFailed { emotion: String, reason: String },

    #[error("degenerate emotion vector for `{0}`: indistinguishable from neutral baseline")]
    DegenerateVector(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector {index} is not unit norm (|v| = {norm})")]
    NotUnit { index: usize, norm: f64 },

    #[error("missing layer {0} in activation trace")]
    MissingLayer(usize),

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("effect size undefined: pooled standard deviation is zero")]
    UndefinedEffect,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
