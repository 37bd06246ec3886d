use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge ({u}, {v}) has non-positive weight {weight}")]
    NonPositiveWeight { u: String, v: String, weight: f64 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("node {0} has zero degree")]
    IsolatedNode(usize),

    #[error("node index {index} out of range for {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("({0}, {1}) is not an edge")]
    EdgeAbsent(usize, usize),

    #[error("unknown value {value:?} for attribute {attribute:?}")]
    UnknownValue { attribute: String, value: String },

    #[error("node {0:?} has no attribute assignment")]
    MissingNode(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("row {0} has zero total mass")]
    ZeroMass(usize),

    #[error("no groups to compare")]
    EmptyGroups,

    #[error("group {0:?} has no members")]
    EmptyGroup(String),

    #[error("empty stratum: {0}")]
    EmptyStratum(&'static str),

    #[error("metric needs both classes present")]
    SingleClass,

    #[error("invalid matching: {0}")]
    InvalidMatching(String),

    #[error("unknown embedder kind {0:?}")]
    UnknownEmbedder(String),

    #[error("dense eigendecomposition limited to {max} nodes, got {n}")]
    GraphTooLarge { n: usize, max: usize },

    #[error("embedding dimension {d} exceeds node count {n}")]
    DimensionTooLarge { d: usize, n: usize },

    #[error("non-finite loss at epoch {epoch} (L_u = {l_u}, L_f = {l_f})")]
    Diverged { epoch: usize, l_u: f64, l_f: f64 },

    #[error("refined embedding row {0} has zero norm")]
    ZeroNormRow(usize),

    #[error("graph has {have} edges, need at least {need}")]
    TooFewEdges { need: usize, have: usize },

    #[error("not enough non-edges: need {need}, have {have}")]
    NotEnoughNonEdges { need: usize, have: usize },

    #[error("class {0} has no training samples")]
    ClassAbsent(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. } | Error::ZeroNormRow(_) | Error::IsolatedNode(_)
        )
    }
}
