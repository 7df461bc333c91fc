//! rxo-core: an embedded persistent-object engine over an internal
//! relational store.
//!
//! Objects live in vertically partitioned relations (one per class and per
//! role, holding only locally declared attributes, joined by OID). The
//! PROGRESS operation promotes an existing object to a direct subclass or
//! applies a role to it; either way the OID, all inbound references, and all
//! unrelated extents are preserved, because promotion is a pure row
//! insertion.

pub mod ast;
pub mod canon;
pub mod catalog;
pub mod difftest;
pub mod error;
pub mod evaluator;
pub mod executor;
pub mod oracle;
pub mod parser;
pub mod persistence;
pub mod relstore;
pub mod token;
pub mod value;

pub use executor::{Engine, QueryResult, StatementResult};

pub use error::{Error, ErrorKind, Result};
pub use value::{Oid, TypeTag, Value};
