use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("corpus contains no documents")]
    EmptyCorpus,

    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),

    #[error("vocabulary is empty")]
    EmptyVocabulary,

    #[error("fraction {0} is out of range")]
    InvalidFraction(f64),

    #[error("concept hierarchy is empty")]
    EmptyHierarchy,

    #[error("cycle detected through concept `{0}`")]
    CycleDetected(String),

    #[error("multiple roots: `{0}` and `{1}`")]
    MultipleRoots(String, String),

    #[error("concept `{child}` references undefined parent `{parent}`")]
    MissingParent { child: String, parent: String },

    #[error("duplicate concept id `{0}`")]
    DuplicateConceptId(String),

    #[error("unknown concept `{0}`")]
    UnknownConcept(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("word `{0}` belongs to no concept and the model has no topics")]
    UncoveredWord(String),

    #[error("token has zero total weight (document {doc}, word {word})")]
    ZeroTotalWeight { doc: usize, word: u32 },

    #[error("digamma is undefined for x = {0}")]
    DomainError(f64),

    #[error("need at least {needed} concepts, hierarchy has {available}")]
    InsufficientConcepts { needed: usize, available: usize },

    #[error("{file}: schema mismatch: {reason}")]
    SchemaMismatch { file: String, reason: String },

    #[error("unsupported model format version `{found}` (expected `{expected}`)")]
    VersionMismatch { found: String, expected: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Variant name, used as a stable machine-readable error tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedLine { .. } => "MalformedLine",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::DuplicateDocId(_) => "DuplicateDocId",
            Error::EmptyVocabulary => "EmptyVocabulary",
            Error::InvalidFraction(_) => "InvalidFraction",
            Error::EmptyHierarchy => "EmptyHierarchy",
            Error::CycleDetected(_) => "CycleDetected",
            Error::MultipleRoots(..) => "MultipleRoots",
            Error::MissingParent { .. } => "MissingParent",
            Error::DuplicateConceptId(_) => "DuplicateConceptId",
            Error::UnknownConcept(_) => "UnknownConcept",
            Error::ConfigMismatch(_) => "ConfigMismatch",
            Error::UncoveredWord(_) => "UncoveredWord",
            Error::ZeroTotalWeight { .. } => "ZeroTotalWeight",
            Error::DomainError(_) => "DomainError",
            Error::InsufficientConcepts { .. } => "InsufficientConcepts",
            Error::SchemaMismatch { .. } => "SchemaMismatch",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::Io { .. } => "Io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(file: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::SchemaMismatch {
            file: file.into(),
            reason: reason.into(),
        }
    }
}
