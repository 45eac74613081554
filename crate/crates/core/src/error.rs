use thiserror::Error;

/// Errors produced anywhere in the detection framework.
#[derive(Debug, Error)]
pub enum CdfError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("missing feature: {0}")]
    MissingFeature(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CdfError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CdfError {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        CdfError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, unwrapping stage annotations.
    pub fn root(&self) -> &CdfError {
        match self {
            CdfError::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, CdfError>;
