use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unbound variable `{name}` at {line}:{column}")]
    UnboundVariable {
        name: String,
        line: usize,
        column: usize,
    },

    #[error("task is not matrix-multiplication-like: condition {condition} does not hold")]
    NotMmlt { condition: u8 },

    #[error("unsupported expression: {0}")]
    UnsupportedExpression(String),

    #[error("missing binding for `{0}`")]
    MissingBinding(String),

    #[error("invalid machine model: {0}")]
    InvalidMachine(String),

    #[error("no kernel shape fits in {registers} vector registers (smallest needs {needed})")]
    NoFeasibleKernel { registers: usize, needed: usize },

    #[error("operand `{name}`: {message}")]
    Operand { name: String, message: String },

    #[error("execution time must be positive, got {0}")]
    NonPositiveTime(f64),

    #[error("matrix file: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short failure class for command-line reporting.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::UnboundVariable { .. } => "unbound-variable",
            Error::NotMmlt { .. } => "not-mmlt",
            Error::UnsupportedExpression(_) => "unsupported-expression",
            Error::MissingBinding(_) => "missing-binding",
            Error::InvalidMachine(_) => "invalid-machine",
            Error::NoFeasibleKernel { .. } => "no-feasible-kernel",
            Error::Operand { .. } => "operand",
            Error::NonPositiveTime(_) => "non-positive-time",
            Error::Format(_) => "format",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn operand(name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Operand {
            name: name.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
