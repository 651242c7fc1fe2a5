use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex count {0} is not a positive even number")]
    OddVertexCount(usize),
    #[error("weight matrix is not square (row {row} has {len} entries, expected {expected})")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("weights are not symmetric at ({i}, {j}): {wij} vs {wji}")]
    NotSymmetric { i: usize, j: usize, wij: f64, wji: f64 },
    #[error("weight of edge ({i}, {j}) is not strictly positive: {w}")]
    NonPositiveWeight { i: usize, j: usize, w: f64 },
    #[error("triangle inequality violated: w({i},{j}) = {wij} > w({i},{via}) + w({via},{j}) = {detour}")]
    NotMetric { i: usize, j: usize, via: usize, wij: f64, detour: f64 },
    #[error("quadrilateral inequality violated: w({u},{v}) = {wuv} > w({u},{v2}) + w({u2},{v2}) + w({u2},{v}) = {detour}")]
    NotBipartiteMetric { u: usize, v: usize, u2: usize, v2: usize, wuv: f64, detour: f64 },
    #[error("positions are not strictly increasing at index {index}")]
    NotIncreasing { index: usize },
    #[error("k = {0} is outside 1..=30")]
    KOutOfRange(u32),
    #[error("epsilon = {epsilon} is outside (0, 1/alpha) for alpha = {alpha}")]
    EpsilonOutOfRange { epsilon: f64, alpha: f64 },
    #[error("alpha = {0} must be a finite real >= 1")]
    AlphaOutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matching does not fit the instance: {0}")]
    VertexMismatch(String),
    #[error("instance with {vertices} vertices exceeds the enumeration limit of {limit}")]
    InstanceTooLarge { vertices: usize, limit: usize },
    #[error("instance has no line embedding")]
    NoEmbedding,
    #[error("instance too small for this operation: {0}")]
    TooSmall(String),
    #[error("no alpha-stable perfect matching found")]
    NoStableMatching,
    #[error("greedy output admits the unstable edge ({u}, {v})")]
    InternalInstability { u: usize, v: usize },
    #[error("inconsistent trace at event {event}: {reason}")]
    InconsistentTrace { event: usize, reason: String },
    #[error("tree with {0} leaves exceeds the exhaustive search limit")]
    NTooLarge(usize),
    #[error("malformed JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid instance data: {0}")]
    Validation(Box<Error>),
}
