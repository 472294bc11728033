//! Construction and evaluation tooling for citation evolution subgraphs.
//!
//! The pipeline turns a seed paper plus its citation neighborhood into a
//! budgeted, temporally consistent DAG of predecessor works, serializes that
//! graph into structured prompt text, and packages masked SFT examples.
//! Companion modules cover metadata fetching, TEI parsing, an LLM gateway
//! with an offline stub, round-robin judged tournaments, and surface metrics.

pub mod config;
pub mod dataset;
pub mod gateway;
pub mod metrics;
pub mod model;
pub mod s2;
pub mod serialize;
pub mod subgraph;
pub mod tei;
pub mod tournament;

use std::path::PathBuf;

/// Unified error type for all library operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration invalid: {0}")]
    Config(String),

    #[error("invalid paper id: {0}")]
    InvalidId(String),

    #[error("invalid idea: {0}")]
    InvalidIdea(String),

    #[error("record validation failed for {id}: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("XML parse error at byte {offset}: {message}")]
    Xml { offset: u64, message: String },

    #[error("document has no recognizable body: {0}")]
    Structure(String),

    #[error("cache miss for {id} (offline mode, cache dir {dir})")]
    CacheMiss { id: String, dir: PathBuf },

    #[error("record not found upstream: {0}")]
    NotFound(String),

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },

    #[error("candidate pool is empty after temporal filtering for seed {0}")]
    EmptySubgraph(String),

    #[error("seed {0} has no year; temporal filtering is impossible")]
    SeedYearUnknown(String),

    #[error("idea extraction failed: {0}")]
    Extraction(String),

    #[error("chat request invalid: {0}")]
    BadRequest(String),

    #[error("backend reply malformed: {0}")]
    MalformedReply(String),

    #[error("vector length mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("zero-norm vector in cosine")]
    ZeroNorm,

    #[error("metric input invalid: {0}")]
    BadMetricInput(String),

    #[error("tournament setup invalid: {0}")]
    BadTournament(String),

    #[error("dataset build failed: {0}")]
    Dataset(String),

    #[error("serialization failed: {0}")]
    Serialize(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an io::Error with the path that produced it.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures worth retrying (rate limits, 5xx, transport).
    pub fn is_transient(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
