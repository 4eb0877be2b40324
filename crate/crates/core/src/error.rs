use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layer {layer}: shape mismatch: {detail}")]
    ShapeMismatch { layer: usize, detail: String },

    #[error("input shape {got:?} does not match model input shape {expected:?}")]
    InputShape {
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("models are not structurally identical: {0}")]
    StructureMismatch(String),

    #[error("layer {layer}: non-finite value in {what}")]
    NonFinite { layer: usize, what: &'static str },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("layer {0} is not prunable")]
    NotPrunable(usize),

    #[error("layer {layer}: prune count {count} exceeds layer size {size}")]
    PruneOutOfRange {
        layer: usize,
        count: usize,
        size: usize,
    },

    #[error("plan covers {got} layers but the model has {expected} prunable layers")]
    PlanMismatch { expected: usize, got: usize },

    #[error("budget of {requested} weights is infeasible: at most {available} can be pruned")]
    Infeasible { requested: usize, available: usize },

    #[error("no curves to allocate over")]
    EmptyCurves,

    #[error("curve for layer {layer} is malformed: {detail}")]
    BadCurve { layer: usize, detail: String },

    #[error("instance too large for exhaustive search: {layers} layers and {steps} grid steps (limit {max_layers} and {max_steps})")]
    GuardExceeded {
        layers: usize,
        steps: usize,
        max_layers: usize,
        max_steps: usize,
    },

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("curve generation failed for layer {layer}: {source}")]
    Curve {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("checksum mismatch for {what}: stored {stored}, computed {computed}")]
    ChecksumMismatch {
        what: String,
        stored: String,
        computed: String,
    },

    #[error("unknown layer kind `{0}`")]
    UnknownLayerKind(String),

    #[error("shape inconsistency: {0}")]
    ShapeInconsistency(String),

    #[error("malformed file {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Strips `Round`/`Curve` wrappers down to the underlying failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::Round { source, .. } | Error::Curve { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self.root(), Error::Infeasible { .. })
    }

    pub fn is_format(&self) -> bool {
        matches!(
            self.root(),
            Error::Io { .. }
                | Error::Json(_)
                | Error::Csv(_)
                | Error::Format { .. }
                | Error::ChecksumMismatch { .. }
                | Error::UnknownLayerKind(_)
                | Error::ShapeInconsistency(_)
        )
    }

    pub fn is_guard(&self) -> bool {
        matches!(self.root(), Error::GuardExceeded { .. })
    }
}
