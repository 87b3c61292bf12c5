//! Trace semantics for lock-based concurrency with fork/join threads.
//!
//! Traces record `fork`, `join`, `lock` and `unlock` events. This crate
//! checks traces for well-formedness, explores their correctly reordered
//! prefixes, and computes critical sections and lock sets two ways: the
//! classic per-thread construction, and a trace-based construction whose
//! critical sections may span several threads.

pub mod cli;
pub mod error;
pub mod locksets;
pub mod reorder;
pub mod trace;
pub mod tracegen;
pub mod wellformed;

pub use error::{Error, ParseError, Result};
pub use locksets::{
    critical_section, diff_report, entry_exit_pairs, exit_point, lockset, per_thread_cs,
    per_thread_lockset, protected_by_oracle, EntryExit, LockSetReport, ProtectionOracle,
};
pub use reorder::{count_crps, enumerate_crps, is_crp, must_precede, CrpCandidate, SchedState};
pub use trace::{parse_trace, serialize, Event, EventId, LockId, Operation, ThreadId, Trace};
pub use tracegen::{generate, GenParams};
pub use wellformed::{validate, WfCondition, WfViolation};
