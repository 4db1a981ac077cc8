use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} is outside the valid range for {what}: {range}")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("invalid platform: {0}")]
    InvalidPlatform(String),

    #[error("design space size overflows u64 ({0})")]
    Overflow(&'static str),

    #[error("invalid latency profile: {0}")]
    InvalidProfile(String),

    #[error("sequence length {seq_len} is outside the measured range [{min}, {max}]; extrapolation refused")]
    Extrapolation { seq_len: u32, min: u32, max: u32 },

    #[error("missing latency profile for role={role} unit={unit} allocation={allocation} quantization={quantization}")]
    MissingProfile {
        role: String,
        unit: String,
        allocation: u32,
        quantization: String,
    },

    #[error("ambiguous quantization for {role} on unit {unit}: {options}; select one explicitly")]
    AmbiguousQuantization {
        role: String,
        unit: String,
        options: String,
    },

    #[error("invalid acceptance trace: {0}")]
    InvalidTrace(String),

    #[error("no traces match config {config}{}", task.as_ref().map(|t| format!(" and task {t}")).unwrap_or_default())]
    EmptySelection {
        config: String,
        task: Option<String>,
    },

    #[error("unknown config tag {tag}; known tags: {known}")]
    UnknownConfig { tag: String, known: String },

    #[error("invalid Markov model: {0}")]
    InvalidModel(String),

    #[error("vocabulary mismatch: draft has {draft} tokens, target has {target}")]
    VocabMismatch { draft: usize, target: usize },

    #[error("state distribution did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("cost curves do not cover variant {variant:?} mapping {mapping:?} at seq_len {seq_len}")]
    Coverage {
        variant: Vec<u32>,
        mapping: Vec<usize>,
        seq_len: u32,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status for the CLI: 1 for bad input, 2 for coverage or
    /// feasibility problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Extrapolation { .. } | Error::MissingProfile { .. } | Error::Coverage { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
