use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid cycle: {0}")]
    InvalidCycle(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no positive-power steps in cycle `{0}`")]
    NoPositivePowerSteps(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("solver did not reach optimality: {0}")]
    NotOptimal(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unknown cycle fixture `{name}`; available: {available}")]
    UnknownFixture { name: String, available: String },

    #[error("brute force over {scenarios} scenarios exceeds the cap of {cap}; use benders or the heuristic instead")]
    BruteForceCap { scenarios: usize, cap: usize },

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
