use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid instance: {}", .0.join("; "))]
    InvalidInstance(Vec<String>),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("group count {count} exceeds group capacity {capacity}")]
    GroupOverflow { count: usize, capacity: usize },
    #[error("invalid character {0:?} in bit string")]
    BadBitString(char),
    #[error("surrogate undefined: expected weight {expected} is not below budget {budget}")]
    SurrogateUndefined { expected: f64, budget: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgorithmError {
    #[error("max_evaluations must be at least 1")]
    ZeroBudget,
    #[error("RLS needs at least two items for its two-bit move, instance has {0}")]
    TooFewItems(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("incremental state diverged from full recompute at evaluation {evaluation}")]
    StateDrift { evaluation: u64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(
        "level {level} has no balanced solution: needs ceil({level}/{groups}) <= {group_size}"
    )]
    NoBalancedSolution {
        level: usize,
        groups: usize,
        group_size: usize,
    },
    #[error("level {level} is outside 0..={n}")]
    LevelOutOfRange { level: usize, n: usize },
    #[error("covariance bound needs a*l < B, got a*l = {expected} and B = {budget}")]
    NoSlack { expected: f64, budget: f64 },
    #[error("brute force limited to n <= {limit}, instance has n = {n}")]
    TooLarge { n: usize, limit: usize },
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("closed-form target needs uniform or group-mirrored profits")]
    UnsupportedProfits,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("bad budget expression {0:?}")]
    BadBudget(String),
    #[error("{context}: {source}")]
    Json {
        context: String,
        source: serde_json::Error,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed CSV row {row}: {message}")]
    MalformedRow { row: usize, message: String },
}
