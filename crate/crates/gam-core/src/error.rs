//! Error types shared across the engine.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An adapter (embedder, NER, segmenter, judge, ...) failed or violated its contract.
    #[error("adapter failure: {0}")]
    Adapter(String),

    #[error("duplicate passage id: {0}")]
    DuplicatePassageId(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("zero vector: {0}")]
    ZeroVector(&'static str),

    #[error("unknown sentence id: {0}")]
    UnknownSentenceId(u32),

    /// A memory store is bound to a graph with different dimensions.
    #[error("stale graph binding: store has {store} sentences, graph has {graph}")]
    StaleGraphBinding { store: usize, graph: usize },

    #[error("graph has no entity nodes to activate")]
    EmptyGraph,

    #[error("snapshot version mismatch: expected {expected:?}, found {found:?}")]
    VersionMismatch { expected: String, found: String },

    #[error("memory snapshot was taken against a different graph")]
    GraphHashMismatch,

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("dataset item is missing question_type")]
    MissingQuestionType,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    /// Corpus or dataset input could not be parsed.
    #[error("corpus error: {0}")]
    Corpus(String),

    /// A snapshot file is structurally malformed.
    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
