use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing data: {0}")]
    MissingData(String),

    #[error("schema error in {file}:{line}: {message}")]
    Schema {
        file: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid split spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch at layer {layer}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        layer: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("stale cache: {0}")]
    StaleCache(String),

    #[error("model `{0}` is frozen")]
    FrozenModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("unsupported container version {found} (supported: {supported})")]
    VersionMismatch { found: u16, supported: u16 },

    #[error("corrupt container: {0}")]
    CorruptContainer(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(layer: usize, expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            layer,
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }
}
