//! Exit codes.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O or other failure |
//! | 2 | usage error |
//! | 3 | parse error in an input file |
//! | 4 | scorer process or protocol failure |
//! | 5 | validation failure |
//! | 6 | empty input |

use std::fmt;

use inferbias::metrics::MetricsError;
use inferbias::{DebiasError, EmbeddingError, ScoreError, SubspaceError, TemplateError};

pub const IO: u8 = 1;
pub const USAGE: u8 = 2;
pub const PARSE: u8 = 3;
pub const PROTOCOL: u8 = 4;
pub const VALIDATION: u8 = 5;
pub const EMPTY: u8 = 6;

#[derive(Debug)]
pub struct EmptyInput(pub String);

impl fmt::Display for EmptyInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} holds no records", self.0)
    }
}

impl std::error::Error for EmptyInput {}

#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug)]
pub struct Validation(pub String);

impl fmt::Display for Validation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Validation {}

fn code_of(e: &(dyn std::error::Error + 'static)) -> Option<u8> {
    if e.is::<EmptyInput>() {
        return Some(EMPTY);
    }
    if e.is::<Usage>() {
        return Some(USAGE);
    }
    if e.is::<Validation>() {
        return Some(VALIDATION);
    }
    if e.is::<serde_json::Error>() {
        return Some(PARSE);
    }
    if let Some(e) = e.downcast_ref::<EmbeddingError>() {
        return Some(match e {
            EmbeddingError::Empty => EMPTY,
            EmbeddingError::Io(_) => IO,
            EmbeddingError::MissingWord(_) | EmbeddingError::ZeroDimension => VALIDATION,
            _ => PARSE,
        });
    }
    if let Some(e) = e.downcast_ref::<ScoreError>() {
        return Some(match e {
            ScoreError::Validation { .. } | ScoreError::InvalidTriple(_) => VALIDATION,
            ScoreError::Io(_) => IO,
            _ => PROTOCOL,
        });
    }
    if let Some(e) = e.downcast_ref::<MetricsError>() {
        return Some(match e {
            MetricsError::Empty => EMPTY,
            MetricsError::InvalidFilter(_) | MetricsError::TauOutOfRange(_) | MetricsError::ZeroK => USAGE,
            _ => VALIDATION,
        });
    }
    if let Some(e) = e.downcast_ref::<TemplateError>() {
        return Some(match e {
            TemplateError::UnknownProbe(_) | TemplateError::UnknownScope(_) => USAGE,
            TemplateError::Io { .. } => IO,
            TemplateError::InvalidLists(_) => VALIDATION,
        });
    }
    if e.is::<SubspaceError>() || e.is::<DebiasError>() {
        return Some(VALIDATION);
    }
    None
}

/// The exit code for the most specific recognised error in the chain.
pub fn classify(err: &anyhow::Error) -> u8 {
    err.chain().find_map(code_of).unwrap_or(IO)
}
