use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vocabulary is empty after document-frequency filtering")]
    VocabularyEmpty,

    #[error("invalid timestamp: {0}")]
    InvalidTimestamp(f64),

    #[error("split would leave an empty partition (D = {docs}, test fraction = {test_frac})")]
    SplitTooSmall { docs: usize, test_frac: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    /// Log-timestamp statistics outside the region where a Beta fit exists.
    #[error("infeasible log-timestamp statistics{}: exp(l1) + exp(l2) = {exp_sum}", topic_suffix(.topic))]
    InfeasibleStats { topic: Option<usize>, exp_sum: f64 },

    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("topic {0} has no mass")]
    EmptyTopic(usize),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn topic_suffix(topic: &Option<usize>) -> String {
    match topic {
        Some(k) => format!(" for topic {k}"),
        None => String::new(),
    }
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Whether the error comes from a numerical failure rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::InfeasibleStats { .. } | Error::QuadratureFailure(_) | Error::EmptyTopic(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
