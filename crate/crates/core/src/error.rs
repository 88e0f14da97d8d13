use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{kind} id {id:?} referenced but not defined")]
    DanglingReference { kind: &'static str, id: String },

    #[error("duplicate observation for pair ({model_id}, {instance_id})")]
    DuplicatePair {
        model_id: String,
        instance_id: String,
    },

    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("split would leave {split} empty ({n_models} models, fractions {fractions:?})")]
    TooFewModels {
        split: &'static str,
        n_models: usize,
        fractions: [f64; 3],
    },

    #[error("invalid split fractions {0:?}: must be positive and sum to 1")]
    InvalidFractions([f64; 3]),

    #[error("instance {0:?} has no embedding")]
    MissingEmbedding(String),

    #[error("instance {0:?} has a zero embedding; cosine similarity undefined")]
    ZeroVector(String),

    #[error("k = {k} must be positive and smaller than the number of nodes ({n})")]
    InvalidK { k: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for {kind} (len {len})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        len: usize,
    },

    #[error("no observed pairs to fit")]
    EmptyObservations,

    #[error("training diverged at epoch {epoch}: objective is not finite")]
    Divergence { epoch: usize },

    #[error("degenerate labels: AUC-ROC needs at least one positive and one negative")]
    DegenerateLabels,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing true scores for {count} (model, instance) pairs, e.g. {examples:?}")]
    MissingTrueScores {
        count: usize,
        examples: Vec<(String, String)>,
    },

    #[error("checkpoint does not match dataset: {0}")]
    CheckpointMismatch(String),

    #[error("JSON serialization failed")]
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
