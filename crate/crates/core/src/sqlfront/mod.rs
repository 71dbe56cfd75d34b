//! SQL dialect front end: lexer, parser, unparser and binder.

pub mod ast;
mod bind;
mod lexer;
mod parser;

use std::fmt;

pub use ast::{unparse, Statement, StatementKind};
pub use bind::{
    bind_query, bind_scalar, BindError, BindOptions, Bound, Catalog, DepEntry, DependencySet, ObjectInfo,
};
pub use parser::{parse, parse_duration, parse_query};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{span}: {message}")]
pub struct SyntaxError {
    pub span: Span,
    pub message: String,
}

impl SyntaxError {
    pub fn new(span: Span, message: impl Into<String>) -> Self {
        SyntaxError { span, message: message.into() }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}
