use thiserror::Error;

use crate::trace::EventId;

/// A malformed line in a trace file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("malformed thread id `{0}`")]
    BadThread(String),
    #[error("malformed lock name `{0}`")]
    BadLock(String),
    #[error("malformed event id `{0}`")]
    BadEventId(String),
    #[error("duplicate event id {0}")]
    DuplicateId(u32),
    #[error("expected `<thread>, <op>`, found `{0}`")]
    BadLine(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("event {0} occurs more than once")]
    DuplicateEvent(EventId),
    #[error("event {0} is not in the trace")]
    UnknownEvent(EventId),
    #[error("event {0} is not a lock event")]
    NotALockEvent(EventId),
    #[error("more than {cap} correctly reordered prefixes; raise the cap to continue")]
    CapExceeded { cap: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
