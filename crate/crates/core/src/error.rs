use thiserror::Error;

use crate::graph::EdgeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("path enumeration exceeded the cap of {cap} paths")]
    PathCapExceeded { cap: usize },

    #[error("no feasible start-goal path remains")]
    Infeasible,

    #[error("edge {0} has already been evaluated")]
    AlreadyEvaluated(EdgeId),

    #[error("selector returned edge {edge}, which is {reason}")]
    SelectorContract { edge: EdgeId, reason: &'static str },

    #[error("the current path has no unevaluated edge")]
    PathFullyEvaluated,

    #[error("world has {got} entries but the graph has {expected} edges")]
    WorldSize { expected: usize, got: usize },

    #[error("training world set is empty")]
    EmptyTrainingSet,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("no feasible world after {attempts} attempts")]
    RetryCapExceeded { attempts: usize },

    #[error("state space too large for tabular methods: {edges} edges (limit {limit})")]
    StateSpaceTooLarge { edges: usize, limit: usize },

    #[error("cover instance too large for exhaustive search: {candidates} candidate edges (limit {limit})")]
    CoverTooLarge { candidates: usize, limit: usize },

    #[error("imitation dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("graph hash mismatch: expected {expected}, found {found}")]
    GraphMismatch { expected: String, found: String },

    #[error("malformed {kind} file: {msg}")]
    Format { kind: &'static str, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
