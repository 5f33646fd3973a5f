use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Input,
    Stage,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no categories")]
    EmptyTaxonomy,

    #[error("taxonomy invariant violated at ({category}, {attribute}, {value}): {reason}")]
    TaxonomyInvariant {
        category: String,
        attribute: String,
        value: String,
        reason: String,
    },

    #[error("empty identifier: {0}")]
    EmptyId(&'static str),

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("unknown attribute `{attribute}` for category `{category}`")]
    UnknownAttribute { category: String, attribute: String },

    #[error("product `{product_id}`: {message}")]
    Product { product_id: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("transport error talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },

    #[error("malformed response from {endpoint}: {message}")]
    MalformedResponse { endpoint: String, message: String },

    #[error("response from {endpoint} contained no choices")]
    EmptyChoices { endpoint: String },

    #[error("prompt has {actual} characters, limit is {limit}")]
    PromptTooLong { actual: usize, limit: usize },

    #[error("candidate attribute `{attribute}` is not in the schema of `{category}`")]
    SchemaMismatch { category: String, attribute: String },

    #[error("malformed prompt: missing section `{0}`")]
    MalformedSection(String),

    #[error("product `{0}` has no ground-truth labels")]
    NoLabels(String),

    #[error("product `{0}` has no attribute whose ground truth appears among its candidates")]
    NoEligibleAttribute(String),

    #[error("no evaluation instances")]
    EmptyInstances,

    #[error("no instances with non-empty ground truth")]
    NoNonEmptyGroundTruth,

    #[error("reports cover different instance universes: {0}")]
    UniverseMismatch(String),

    #[error("index snapshot mismatch: {0}")]
    Snapshot(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn product(product_id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Product {
            product_id: product_id.into(),
            message: message.into(),
        }
    }

    /// Wraps the error with a pipeline stage label.
    pub fn at_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Transport failures are the only retryable class.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport { .. })
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::EmptyTaxonomy
            | Error::TaxonomyInvariant { .. }
            | Error::EmptyId(_)
            | Error::UnknownCategory(_)
            | Error::UnknownAttribute { .. }
            | Error::Product { .. }
            | Error::Snapshot(_)
            | Error::MalformedSection(_) => ErrorClass::Input,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Stage,
        }
    }
}
