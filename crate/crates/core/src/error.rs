//! Engine-wide error type.
//!
//! Every failure carries a stable [`ErrorKind`] used by the shell
//! (`ERROR <Kind>: <message>`) and by the differential harness, which
//! compares kinds (not messages) between engine and oracle.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("{msg}")]
    Parse {
        line: u32,
        col: u32,
        msg: String,
        /// 1-based statement index, set by script parsing.
        statement: Option<usize>,
    },
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown oid #{0}")]
    UnknownOid(u64),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("{0}")]
    TypeMismatch(String),
    #[error("{0}")]
    NameConflict(String),
    #[error("{0}")]
    SignatureMismatch(String),
    #[error("attribute `{0}` requires a default value")]
    MissingDefault(String),
    #[error("{0}")]
    MissingInitializer(String),
    #[error("{0}")]
    NameError(String),
    #[error("{0}")]
    ArityMismatch(String),
    #[error("{0}")]
    NotDirectSubclass(String),
    #[error("{0}")]
    RoleBaseNotSatisfied(String),
    #[error("object #{oid} already has role `{role}`")]
    AlreadyInRole { oid: u64, role: String },
    #[error("relation `{relation}` already has a row for #{oid}")]
    DuplicateRow { relation: String, oid: u64 },
    #[error("object #{oid} is referenced by {cells}")]
    ReferencedObject { oid: u64, cells: String },
    #[error("oid #{0} is not available for allocation")]
    OidConflict(u64),
    #[error("null reference: {0}")]
    NullReference(String),
    #[error("division by zero")]
    DivideByZero,
    #[error("integer overflow in `{0}`")]
    IntOverflow(String),
    #[error("float overflow in `{0}`")]
    FloatOverflow(String),
    #[error("journal record {record}: {msg}")]
    JournalCorrupt { record: usize, msg: String },
    #[error("snapshot corrupt: {0}")]
    SnapshotCorrupt(String),
    #[error("replay of journal record {record} failed: {cause}")]
    ReplayError {
        record: usize,
        #[source]
        cause: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(String),
}

/// Payload-free discriminant of [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    ParseError,
    DuplicateName,
    UnknownClass,
    UnknownType,
    UnknownRelation,
    UnknownOid,
    UnknownMethod,
    TypeMismatch,
    NameConflict,
    SignatureMismatch,
    MissingDefault,
    MissingInitializer,
    NameError,
    ArityMismatch,
    NotDirectSubclass,
    RoleBaseNotSatisfied,
    AlreadyInRole,
    DuplicateRow,
    ReferencedObject,
    OidConflict,
    NullReference,
    DivideByZero,
    IntOverflow,
    FloatOverflow,
    JournalCorrupt,
    SnapshotCorrupt,
    ReplayError,
    IoError,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. } => ErrorKind::ParseError,
            Error::DuplicateName(_) => ErrorKind::DuplicateName,
            Error::UnknownClass(_) => ErrorKind::UnknownClass,
            Error::UnknownType(_) => ErrorKind::UnknownType,
            Error::UnknownRelation(_) => ErrorKind::UnknownRelation,
            Error::UnknownOid(_) => ErrorKind::UnknownOid,
            Error::UnknownMethod(_) => ErrorKind::UnknownMethod,
            Error::TypeMismatch(_) => ErrorKind::TypeMismatch,
            Error::NameConflict(_) => ErrorKind::NameConflict,
            Error::SignatureMismatch(_) => ErrorKind::SignatureMismatch,
            Error::MissingDefault(_) => ErrorKind::MissingDefault,
            Error::MissingInitializer(_) => ErrorKind::MissingInitializer,
            Error::NameError(_) => ErrorKind::NameError,
            Error::ArityMismatch(_) => ErrorKind::ArityMismatch,
            Error::NotDirectSubclass(_) => ErrorKind::NotDirectSubclass,
            Error::RoleBaseNotSatisfied(_) => ErrorKind::RoleBaseNotSatisfied,
            Error::AlreadyInRole { .. } => ErrorKind::AlreadyInRole,
            Error::DuplicateRow { .. } => ErrorKind::DuplicateRow,
            Error::ReferencedObject { .. } => ErrorKind::ReferencedObject,
            Error::OidConflict(_) => ErrorKind::OidConflict,
            Error::NullReference(_) => ErrorKind::NullReference,
            Error::DivideByZero => ErrorKind::DivideByZero,
            Error::IntOverflow(_) => ErrorKind::IntOverflow,
            Error::FloatOverflow(_) => ErrorKind::FloatOverflow,
            Error::JournalCorrupt { .. } => ErrorKind::JournalCorrupt,
            Error::SnapshotCorrupt(_) => ErrorKind::SnapshotCorrupt,
            Error::ReplayError { .. } => ErrorKind::ReplayError,
            Error::Io(_) => ErrorKind::IoError,
        }
    }

    pub fn parse(line: u32, col: u32, msg: impl Into<String>) -> Error {
        Error::Parse {
            line,
            col,
            msg: msg.into(),
            statement: None,
        }
    }

    /// Attach a 1-based statement index to a parse error.
    pub fn at_statement(self, index: usize) -> Error {
        match self {
            Error::Parse {
                line, col, msg, ..
            } => Error::Parse {
                line,
                col,
                msg,
                statement: Some(index),
            },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ErrorKind::ParseError => "ParseError",
            ErrorKind::DuplicateName => "DuplicateName",
            ErrorKind::UnknownClass => "UnknownClass",
            ErrorKind::UnknownType => "UnknownType",
            ErrorKind::UnknownRelation => "UnknownRelation",
            ErrorKind::UnknownOid => "UnknownOid",
            ErrorKind::UnknownMethod => "UnknownMethod",
            ErrorKind::TypeMismatch => "TypeMismatch",
            ErrorKind::NameConflict => "NameConflict",
            ErrorKind::SignatureMismatch => "SignatureMismatch",
            ErrorKind::MissingDefault => "MissingDefault",
            ErrorKind::MissingInitializer => "MissingInitializer",
            ErrorKind::NameError => "NameError",
            ErrorKind::ArityMismatch => "ArityMismatch",
            ErrorKind::NotDirectSubclass => "NotDirectSubclass",
            ErrorKind::RoleBaseNotSatisfied => "RoleBaseNotSatisfied",
            ErrorKind::AlreadyInRole => "AlreadyInRole",
            ErrorKind::DuplicateRow => "DuplicateRow",
            ErrorKind::ReferencedObject => "ReferencedObject",
            ErrorKind::OidConflict => "OidConflict",
            ErrorKind::NullReference => "NullReference",
            ErrorKind::DivideByZero => "DivideByZero",
            ErrorKind::IntOverflow => "IntOverflow",
            ErrorKind::FloatOverflow => "FloatOverflow",
            ErrorKind::JournalCorrupt => "JournalCorrupt",
            ErrorKind::SnapshotCorrupt => "SnapshotCorrupt",
            ErrorKind::ReplayError => "ReplayError",
            ErrorKind::IoError => "IoError",
        };
        f.write_str(name)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
