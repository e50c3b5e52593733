use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown neuron {0}")]
    UnknownNeuron(String),

    #[error("neuron {0} of the compared pattern is missing from the evolved pattern")]
    Coverage(String),

    #[error("invalid pattern: {0}")]
    Pattern(String),

    #[error("graph has {nodes} nodes, brute force limit is {limit}")]
    TooLarge { nodes: usize, limit: usize },

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("index {index} out of range for population of {len}")]
    Index { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    Argument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
