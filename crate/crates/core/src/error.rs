use std::fmt;

/// Crate-wide error type. Variants map onto the CLI exit-code
/// taxonomy via [`Error::category`].
#[derive(Debug)]
pub enum Error {
    /// Incompatible matrix/tensor shapes; the message names both shapes.
    Shape(String),
    /// An argument violated an operation's preconditions.
    InvalidArg(String),
    /// A configuration cannot be realized (bad ranges, infeasible packing,
    /// empty splits, ...).
    Config(String),
    /// Malformed or inconsistent input data (CSV rows, manifests, checkpoints).
    Data(String),
    /// Training failed (divergence, contract violations between passes).
    Training(String),
    /// Evaluation is undefined for the given inputs.
    Eval(String),
    Io { path: String, source: std::io::Error },
}

/// Coarse grouping used for process exit codes: 2 config, 3 data, 4 training/eval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Training,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::InvalidArg(_) => ErrorCategory::Config,
            Error::Data(_) | Error::Io { .. } => ErrorCategory::Data,
            Error::Shape(_) | Error::Training(_) | Error::Eval(_) => ErrorCategory::Training,
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::InvalidArg(m) => write!(f, "invalid argument: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
            Error::Training(m) => write!(f, "training error: {m}"),
            Error::Eval(m) => write!(f, "evaluation error: {m}"),
            Error::Io { path, source } => write!(f, "io error on {path}: {source}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
