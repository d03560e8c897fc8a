use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid: {0}")]
    Grid(String),

    #[error("rank mismatch: kernel {kernel} expects rank {expected}, grid has rank {actual}")]
    RankMismatch {
        kernel: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("kernel {kernel} takes {expected} coefficients, got {actual}")]
    CoeffCount {
        kernel: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("task graph: {0}")]
    Graph(String),

    #[error("cycle detected through task {0}")]
    Cycle(usize),

    #[error("variant registry: {0}")]
    Variant(String),

    #[error("config: {0}")]
    Config(String),

    #[error("config parse error at line {line}, column {column}: {msg}")]
    ConfigParse {
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("placement: {0}")]
    Placement(String),

    #[error("routing: {0}")]
    Route(String),

    #[error("conf register: {0}")]
    Register(String),

    #[error("frame: {0}")]
    Frame(String),

    #[error("misrouted frame for {0}")]
    Misrouted(String),

    #[error("ip stream: {0}")]
    Stream(String),

    #[error("link: {0}")]
    Link(String),

    #[error("simulation deadlock: {component} blocked ({detail})")]
    Deadlock { component: String, detail: String },

    #[error("simulation: {0}")]
    Sim(String),

    #[error("equivalence: {0}")]
    Equivalence(String),

    #[error("metrics: {0}")]
    Metrics(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
