use std::fmt;

use thiserror::Error;

/// Errors produced anywhere in the engine.
///
/// The error is boxed so `Result<(), Error>` stays pointer-sized; getters return it on
/// every call.
pub struct Error(Box<ErrorKind>);

#[derive(Debug, Error)]
pub enum ErrorKind {
    #[error("invalid column index {index} (schema has {len} columns)")]
    InvalidColumn { index: usize, len: usize },
    #[error("column {0} is not active on this cursor")]
    InactiveColumn(usize),
    #[error("type mismatch for column {column}: schema type is {actual}, requested {requested}")]
    TypeMismatch {
        column: String,
        actual: String,
        requested: String,
    },
    #[error("cursor contract violation: {0}")]
    ContractViolation(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation failed at stage {stage} ({op}): {message}")]
    Validation {
        stage: usize,
        op: String,
        message: String,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt data: {0}")]
    Corruption(String),
    #[error("unsupported format version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("unknown operator '{0}'")]
    UnknownOperator(String),
    #[error("operator registry: {0}")]
    Registry(String),
    #[error("invalid parameters for {target}: {message}")]
    Params { target: String, message: String },
    #[error("graph contains a cycle through nodes [{}]", .0.join(", "))]
    Cycle(Vec<String>),
    #[error("variable '{variable}' is written by more than one node: [{}]", .writers.join(", "))]
    SingleAssignment {
        variable: String,
        writers: Vec<String>,
    },
    #[error("dataflow error: {0}")]
    Dataflow(String),
    #[error("node '{node}' failed: {source}")]
    Node { node: String, source: Error },
    #[error("input error: {0}")]
    Input(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("archive error: {0}")]
    Zip(#[from] zip::result::ZipError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn kind(&self) -> &ErrorKind {
        &self.0
    }

    pub fn into_kind(self) -> ErrorKind {
        *self.0
    }

    /// True for errors caused by bad input definitions rather than by the data or the
    /// environment. The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        use ErrorKind::*;
        match self.kind() {
            Node { source, .. } => source.is_validation(),
            InvalidColumn { .. }
            | InactiveColumn(_)
            | TypeMismatch { .. }
            | InvalidArgument(_)
            | Schema(_)
            | Validation { .. }
            | Shape(_)
            | UnknownOperator(_)
            | Params { .. }
            | Cycle(_)
            | SingleAssignment { .. }
            | Dataflow(_)
            | Input(_)
            | Version { .. }
            | Json(_) => true,
            _ => false,
        }
    }

    /// Strips `Node` wrappers.
    pub fn root(&self) -> &ErrorKind {
        match self.kind() {
            ErrorKind::Node { source, .. } => source.root(),
            k => k,
        }
    }

    pub fn schema(msg: impl Into<String>) -> Self {
        ErrorKind::Schema(msg.into()).into()
    }
    pub fn shape(msg: impl Into<String>) -> Self {
        ErrorKind::Shape(msg.into()).into()
    }
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        ErrorKind::InvalidArgument(msg.into()).into()
    }
    pub fn contract(msg: impl Into<String>) -> Self {
        ErrorKind::ContractViolation(msg.into()).into()
    }
    pub fn format(msg: impl Into<String>) -> Self {
        ErrorKind::Format(msg.into()).into()
    }
    pub fn corruption(msg: impl Into<String>) -> Self {
        ErrorKind::Corruption(msg.into()).into()
    }
    pub fn training(msg: impl Into<String>) -> Self {
        ErrorKind::Training(msg.into()).into()
    }
    pub fn input(msg: impl Into<String>) -> Self {
        ErrorKind::Input(msg.into()).into()
    }
    pub fn dataflow(msg: impl Into<String>) -> Self {
        ErrorKind::Dataflow(msg.into()).into()
    }
    pub fn params(target: impl Into<String>, message: impl Into<String>) -> Self {
        ErrorKind::Params {
            target: target.into(),
            message: message.into(),
        }
        .into()
    }
    pub fn in_node(self, node: impl Into<String>) -> Self {
        ErrorKind::Node {
            node: node.into(),
            source: self,
        }
        .into()
    }
}

impl<E: Into<ErrorKind>> From<E> for Error {
    fn from(e: E) -> Self {
        Error(Box::new(e.into()))
    }
}

impl fmt::Debug for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.0, f)
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        self.0.source()
    }
}
