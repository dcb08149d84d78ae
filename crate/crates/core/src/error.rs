use std::path::PathBuf;

use thiserror::Error;

use crate::dsl::TypeError;
use crate::graph::OpId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{line}:{column}: syntax error: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{line}: variable `{name}` is assigned more than once")]
    DuplicateAssignment { name: String, line: usize },

    #[error("{line}: undefined variable {name}")]
    UndefinedVariable { name: String, line: usize },

    #[error("{}", format_type_errors(.0))]
    Type(Vec<TypeError>),

    #[error("no purity information for function `{0}`")]
    UnknownPurity(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("unknown inspection action `{0}`")]
    UnknownAction(String),

    #[error("action `{action}` is not applicable to `{variable}`")]
    ActionNotApplicable { action: String, variable: String },

    #[error("invalid action argument `{name}`: {message}")]
    ActionArgument { name: String, message: String },

    #[error("operation `{op}` failed: {source}")]
    Runtime {
        op: OpId,
        #[source]
        source: StdlibError,
    },

    #[error("dependency cycle through `{0}`")]
    Cycle(OpId),

    #[error("invalid {what} file: {message}")]
    Config { what: &'static str, message: String },

    #[error("corrupt value in cache: {0}")]
    Decode(String),

    #[error("missing cached value for `{0}`")]
    MissingValue(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the user's program or request, as opposed
    /// to failures while executing operations.
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self,
            Error::Runtime { .. } | Error::Io { .. } | Error::Decode(_) | Error::MissingValue(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "syntax",
            Error::DuplicateAssignment { .. } => "duplicate_assignment",
            Error::UndefinedVariable { .. } => "undefined_variable",
            Error::Type(_) => "type",
            Error::UnknownPurity(_) => "unknown_purity",
            Error::UnknownVariable(_) => "unknown_variable",
            Error::UnknownAction(_) => "unknown_action",
            Error::ActionNotApplicable { .. } => "action_not_applicable",
            Error::ActionArgument { .. } => "action_argument",
            Error::Runtime { .. } => "runtime",
            Error::Cycle(_) => "cycle",
            Error::Config { .. } => "config",
            Error::Decode(_) => "decode",
            Error::MissingValue(_) => "missing_value",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    /// Machine-readable form with the location or operation involved.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "kind": self.kind(),
            "message": self.to_string(),
        });
        match self {
            Error::Syntax { line, column, .. } => {
                v["line"] = (*line).into();
                v["column"] = (*column).into();
            }
            Error::DuplicateAssignment { line, .. } | Error::UndefinedVariable { line, .. } => {
                v["line"] = (*line).into();
            }
            Error::Type(errors) => {
                v["errors"] = serde_json::to_value(errors).unwrap_or_default();
            }
            Error::Runtime { op, .. } | Error::Cycle(op) => {
                v["op"] = op.as_str().into();
            }
            _ => {}
        }
        v
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_type_errors(errors: &[TypeError]) -> String {
    errors
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Failure raised by a standard-library operation while it runs.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum StdlibError {
    #[error("cannot read {path}: {message}")]
    File { path: String, message: String },

    #[error("no column named `{0}`")]
    BadColumn(String),

    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),

    #[error("invalid argument `{param}`: {message}")]
    BadArgument {
        param: &'static str,
        message: String,
    },

    #[error("length mismatch: {0} rows vs {1} labels")]
    LengthMismatch(usize, usize),

    #[error("model is not fitted")]
    NotFitted,

    #[error("unknown function `{0}`")]
    UnknownFunction(String),
}
