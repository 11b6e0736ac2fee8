use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },

    #[error("degenerate operator: F(n⊗n) = {value}")]
    DegenerateOperator { value: f64 },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("node {0} is on the boundary")]
    BoundaryNode(usize),

    #[error("region selects {0} nodes, need at least 2")]
    EmptyRegion(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("no convergence at stage {stage} after {iterations} iterations ({reason})")]
    NonConvergence {
        stage: usize,
        iterations: usize,
        reason: String,
    },

    #[error("boundary datum is not finite at node {0}")]
    InvalidBoundary(usize),

    #[error("comparison precondition violated at nodes {nodes:?}")]
    PreconditionViolated { nodes: Vec<usize> },

    #[error("invalid regime: {0}")]
    InvalidRegime(String),

    #[error("bracket failure: {0}")]
    BracketFailure(String),

    #[error("insufficient span: {0}")]
    InsufficientSpan(String),

    #[error("ladder rung L = {rung} did not converge: {reason}")]
    LadderNonConvergence { rung: f64, reason: String },

    #[error("unresolved layer: {usable} usable shells, need {needed}")]
    UnresolvedLayer { usable: usize, needed: usize },

    #[error("unsupported case: {0}")]
    UnsupportedCase(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
