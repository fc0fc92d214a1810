use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix dimension {0} is not a power of two >= 2")]
    BadDimension(usize),

    #[error("repeated qubit index {0} in placement")]
    RepeatedQubit(usize),

    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("gate `{gate}` expects {expected} qubits, got {got}")]
    ArityMismatch {
        gate: String,
        expected: usize,
        got: usize,
    },

    #[error("gate `{0}` is not in the library")]
    UnknownGate(String),

    #[error("duplicate gate name `{0}`")]
    DuplicateGate(String),

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("gate `{gate}` has no valid qubit assignment on {n_qubits} qubits under {constraint}")]
    NoValidAssignment {
        gate: String,
        n_qubits: usize,
        constraint: String,
    },

    #[error("parse error at `{token}`: {message}")]
    Parse { token: String, message: String },

    #[error("solution set for task `{task}` holds a circuit that does not implement the task unitary (distance {distance:e})")]
    CorruptSolution { task: String, distance: f64 },

    #[error("invalid library: {0}")]
    InvalidLibrary(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed data: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn parse(token: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            token: token.into(),
            message: message.into(),
        }
    }
}
