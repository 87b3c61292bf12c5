//! Critical sections and lock sets.
//!
//! A lock event `l = (t, lock(m))` is the entry point of a critical section
//! whose exit point is the next `unlock(m)` of `t`, or the last event of `t`
//! when the lock is never released (an open section). Two constructions of
//! the events inside a section are provided:
//!
//! * per-thread: the events of `t` strictly between entry and exit;
//! * trace-based: the events `e` such that the entry must precede `e` and `e`
//!   must precede the exit under every correctly reordered prefix. These may
//!   belong to other threads, through fork/join ordering.
//!
//! In both, the exit of an open section is itself a member.
//! [`ProtectionOracle`] decides lock protection by enumerating all
//! reorderings and serves as the reference both constructions are tested
//! against.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::reorder::{crps, must_follow, must_precede, Precedence};
use crate::trace::{EventId, LockId, Operation, ThreadId, Trace};

/// A critical section's delimiters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntryExit {
    pub entry: EventId,
    pub exit: EventId,
    pub lock: LockId,
    pub thread: ThreadId,
    /// The exit is not the matching unlock.
    pub open: bool,
}

fn entry_lock(trace: &Trace, l: EventId) -> Result<(ThreadId, &LockId)> {
    let ev = trace.event(l)?;
    match &ev.op {
        Operation::Lock(m) => Ok((ev.thread, m)),
        _ => Err(Error::NotALockEvent(l)),
    }
}

/// Exit point of the section entered at lock event `l`.
pub fn exit_point(trace: &Trace, l: EventId) -> Result<EventId> {
    Ok(entry_exit(trace, l)?.exit)
}

pub fn entry_exit(trace: &Trace, l: EventId) -> Result<EntryExit> {
    let (thread, m) = entry_lock(trace, l)?;
    let start = trace.index_of(l)? + 1;
    let rest = trace.events()[start..].iter().filter(|e| e.thread == thread);
    let mut exit = l;
    let mut open = true;
    for e in rest {
        exit = e.id;
        if e.op.is_unlock_of(m) {
            open = false;
            break;
        }
    }
    Ok(EntryExit {
        entry: l,
        exit,
        lock: m.clone(),
        thread,
        open,
    })
}

/// One entry per lock event, in trace order.
pub fn entry_exit_pairs(trace: &Trace) -> Vec<EntryExit> {
    trace
        .events()
        .iter()
        .filter(|e| matches!(e.op, Operation::Lock(_)))
        .map(|e| entry_exit(trace, e.id).expect("lock event of the trace"))
        .collect()
}

/// Events of the entry's own thread inside the section entered at `l`.
pub fn per_thread_cs(trace: &Trace, l: EventId) -> Result<BTreeSet<EventId>> {
    let section = entry_exit(trace, l)?;
    let mut members: BTreeSet<EventId> = trace
        .project_thread(section.thread)
        .ids()
        .skip_while(|&id| id != l)
        .skip(1)
        .take_while(|&id| id != section.exit)
        .collect();
    if section.open {
        members.insert(section.exit);
    }
    Ok(members)
}

pub fn per_thread_lockset(trace: &Trace, e: EventId) -> Result<BTreeSet<LockId>> {
    let thread = trace.event(e)?.thread;
    let mut locks = BTreeSet::new();
    for l in trace.events().iter().filter(|l| l.thread == thread) {
        if let Operation::Lock(m) = &l.op {
            if per_thread_cs(trace, l.id)?.contains(&e) {
                locks.insert(m.clone());
            }
        }
    }
    Ok(locks)
}

/// Trace-based critical section entered at `l`.
pub fn critical_section(trace: &Trace, l: EventId) -> Result<BTreeSet<EventId>> {
    let section = entry_exit(trace, l)?;
    let mut members = BTreeSet::new();
    for e in must_follow(trace, l)? {
        if must_precede(trace, e, section.exit)? {
            members.insert(e);
        }
    }
    if section.open {
        members.insert(section.exit);
    }
    Ok(members)
}

/// Locks whose trace-based critical sections, entered in any thread,
/// contain `e`.
pub fn lockset(trace: &Trace, e: EventId) -> Result<BTreeSet<LockId>> {
    trace.index_of(e)?;
    let mut locks = BTreeSet::new();
    for section in entry_exit_pairs(trace) {
        if locks.contains(&section.lock) {
            continue;
        }
        let inside = if section.open && section.exit == e {
            true
        } else {
            must_precede(trace, section.entry, e)? && must_precede(trace, e, section.exit)?
        };
        if inside {
            locks.insert(section.lock);
        }
    }
    Ok(locks)
}

/// Lock-protection decided over the full set of correctly reordered
/// prefixes. Exponential; bounded by `cap`.
pub struct ProtectionOracle<'a> {
    trace: &'a Trace,
    /// Position of each trace event (by trace index) in each prefix.
    positions: Vec<Vec<Option<u32>>>,
}

impl<'a> ProtectionOracle<'a> {
    pub fn new(trace: &'a Trace, cap: usize) -> Result<Self> {
        let index: HashMap<EventId, usize> = trace.ids().enumerate().map(|(i, id)| (id, i)).collect();
        let mut positions = Vec::new();
        for candidate in crps(trace, cap) {
            let mut pos = vec![None; trace.len()];
            for (k, id) in candidate?.ids().iter().enumerate() {
                pos[index[id]] = Some(k as u32);
            }
            positions.push(pos);
        }
        Ok(ProtectionOracle { trace, positions })
    }

    /// Whether some section on `m` protects `e`: either `e` lies strictly
    /// between entry and exit in every prefix that contains the exit, or `e`
    /// is the exit of an open section.
    pub fn protected_by(&self, e: EventId, m: &LockId) -> Result<bool> {
        let ei = self.trace.index_of(e)?;
        for section in entry_exit_pairs(self.trace) {
            if &section.lock != m {
                continue;
            }
            if section.exit == e && section.open {
                return Ok(true);
            }
            let li = self.trace.index_of(section.entry)?;
            let xi = self.trace.index_of(section.exit)?;
            let enclosed = self.positions.iter().all(|pos| match pos[xi] {
                None => true,
                Some(x) => matches!((pos[li], pos[ei]), (Some(l), Some(p)) if l < p && p < x),
            });
            if enclosed {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn protecting_locks(&self, e: EventId) -> Result<BTreeSet<LockId>> {
        let mut out = BTreeSet::new();
        for m in self.trace.locks() {
            if self.protected_by(e, &m)? {
                out.insert(m);
            }
        }
        Ok(out)
    }

    pub fn prefix_count(&self) -> usize {
        self.positions.len()
    }
}

pub fn protected_by_oracle(trace: &Trace, e: EventId, m: &LockId, cap: usize) -> Result<bool> {
    ProtectionOracle::new(trace, cap)?.protected_by(e, m)
}

/// Shared per-trace analysis: exit points and the must-precede relation are
/// computed once and then only read.
pub struct Analysis<'a> {
    trace: &'a Trace,
    sections: Vec<EntryExit>,
    precedence: Precedence,
}

impl<'a> Analysis<'a> {
    pub fn new(trace: &'a Trace) -> Self {
        Analysis {
            trace,
            sections: entry_exit_pairs(trace),
            precedence: Precedence::compute(trace),
        }
    }

    pub fn sections(&self) -> &[EntryExit] {
        &self.sections
    }

    pub fn precedence(&self) -> &Precedence {
        &self.precedence
    }

    fn section(&self, l: EventId) -> Result<&EntryExit> {
        entry_lock(self.trace, l)?;
        Ok(self
            .sections
            .iter()
            .find(|s| s.entry == l)
            .expect("every lock event has a section"))
    }

    fn contains(&self, section: &EntryExit, e: EventId) -> bool {
        (section.open && section.exit == e)
            || (self.precedence.holds(section.entry, e).unwrap_or(false)
                && self.precedence.holds(e, section.exit).unwrap_or(false))
    }

    pub fn critical_section(&self, l: EventId) -> Result<BTreeSet<EventId>> {
        let section = self.section(l)?;
        Ok(self
            .trace
            .ids()
            .filter(|&e| self.contains(section, e))
            .collect())
    }

    pub fn lockset(&self, e: EventId) -> Result<BTreeSet<LockId>> {
        self.trace.index_of(e)?;
        Ok(self
            .sections
            .iter()
            .filter(|s| self.contains(s, e))
            .map(|s| s.lock.clone())
            .collect())
    }

    pub fn report(&self) -> LockSetReport {
        let rows = self
            .trace
            .events()
            .iter()
            .map(|ev| {
                let per_thread = per_thread_lockset(self.trace, ev.id).expect("event of the trace");
                let trace_based = self.lockset(ev.id).expect("event of the trace");
                LockSetRow::new(ev.id, ev.thread, ev.op.clone(), per_thread, trace_based)
            })
            .collect();
        LockSetReport { rows }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LockSetRow {
    pub event_id: EventId,
    pub thread: ThreadId,
    pub op: Operation,
    pub per_thread: BTreeSet<LockId>,
    pub trace_based: BTreeSet<LockId>,
    /// Locks in the trace-based set but not the per-thread one.
    pub gained: BTreeSet<LockId>,
}

impl LockSetRow {
    fn new(
        event_id: EventId,
        thread: ThreadId,
        op: Operation,
        per_thread: BTreeSet<LockId>,
        trace_based: BTreeSet<LockId>,
    ) -> Self {
        let gained = trace_based.difference(&per_thread).cloned().collect();
        LockSetRow {
            event_id,
            thread,
            op,
            per_thread,
            trace_based,
            gained,
        }
    }
}

/// Per-event comparison of the two lock-set constructions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct LockSetReport {
    pub rows: Vec<LockSetRow>,
}

impl LockSetReport {
    pub fn row(&self, e: EventId) -> Option<&LockSetRow> {
        self.rows.iter().find(|r| r.event_id == e)
    }

    /// Events whose trace-based lock set is strictly larger.
    pub fn gaining(&self) -> impl Iterator<Item = &LockSetRow> {
        self.rows.iter().filter(|r| !r.gained.is_empty())
    }
}

pub fn diff_report(trace: &Trace) -> LockSetReport {
    Analysis::new(trace).report()
}

/// Like [`diff_report`], with the trace-based column taken from the
/// enumeration oracle.
pub fn diff_report_with_oracle(trace: &Trace, cap: usize) -> Result<LockSetReport> {
    let oracle = ProtectionOracle::new(trace, cap)?;
    let rows = trace
        .events()
        .iter()
        .map(|ev| {
            Ok(LockSetRow::new(
                ev.id,
                ev.thread,
                ev.op.clone(),
                per_thread_lockset(trace, ev.id)?,
                oracle.protecting_locks(ev.id)?,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(LockSetReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reorder::DEFAULT_CAP;
    use crate::trace::parse_trace;

    fn set(v: &[u32]) -> BTreeSet<EventId> {
        v.iter().map(|&i| EventId(i)).collect()
    }

    fn locks(v: &[&str]) -> BTreeSet<LockId> {
        v.iter().map(|m| LockId::new(*m).unwrap()).collect()
    }

    #[test]
    fn exit_of_non_lock_is_an_error() {
        let t = parse_trace("1, lock(m)\n1, unlock(m)").unwrap();
        assert_eq!(exit_point(&t, EventId(2)), Err(Error::NotALockEvent(EventId(2))));
        assert_eq!(exit_point(&t, EventId(3)), Err(Error::UnknownEvent(EventId(3))));
        assert_eq!(exit_point(&t, EventId(1)), Ok(EventId(2)));
    }

    #[test]
    fn open_section_ends_at_last_event_of_thread() {
        let t = parse_trace("1, lock(m)\n1, fork(2)\n2, lock(n)\n1, lock(k)").unwrap();
        let s = entry_exit(&t, EventId(1)).unwrap();
        assert_eq!((s.exit, s.open), (EventId(4), true));
        assert_eq!(per_thread_cs(&t, EventId(1)).unwrap(), set(&[2, 4]));
        let s = entry_exit(&t, EventId(4)).unwrap();
        assert_eq!((s.exit, s.open), (EventId(4), true));
        assert_eq!(per_thread_cs(&t, EventId(4)).unwrap(), set(&[4]));
        assert_eq!(per_thread_lockset(&t, EventId(4)).unwrap(), locks(&["k", "m"]));
    }

    #[test]
    fn closed_section_excludes_its_delimiters() {
        let t = parse_trace("1, lock(m)\n1, lock(n)\n1, unlock(n)\n1, unlock(m)").unwrap();
        assert_eq!(per_thread_cs(&t, EventId(1)).unwrap(), set(&[2, 3]));
        assert_eq!(critical_section(&t, EventId(1)).unwrap(), set(&[2, 3]));
        assert_eq!(critical_section(&t, EventId(2)).unwrap(), set(&[]));
        assert!(lockset(&t, EventId(1)).unwrap().is_empty());
        assert_eq!(lockset(&t, EventId(2)).unwrap(), locks(&["m"]));
    }

    #[test]
    fn forked_child_inside_parent_section() {
        let t = parse_trace(
            "1, lock(m)\n1, fork(2)\n2, lock(n)\n2, unlock(n)\n1, join(2)\n1, unlock(m)",
        )
        .unwrap();
        // the join needs only one event of thread 2, so e4 is not forced
        // before the unlock of m
        assert_eq!(critical_section(&t, EventId(1)).unwrap(), set(&[2, 3, 5]));
        let report = diff_report(&t);
        assert_eq!(report.row(EventId(3)).unwrap().gained, locks(&["m"]));
        assert!(report.row(EventId(4)).unwrap().gained.is_empty());
        let oracle = ProtectionOracle::new(&t, DEFAULT_CAP).unwrap();
        let m = LockId::new("m").unwrap();
        assert!(oracle.protected_by(EventId(3), &m).unwrap());
        assert!(!oracle.protected_by(EventId(4), &m).unwrap());
    }

    #[test]
    fn analysis_agrees_with_single_queries() {
        let t = parse_trace(
            "1, fork(2)\n1, lock(a)\n2, lock(b)\n1, fork(3)\n3, lock(c)\n2, unlock(b)\n1, join(3)\n1, unlock(a)",
        )
        .unwrap();
        let a = Analysis::new(&t);
        for s in a.sections() {
            assert_eq!(a.critical_section(s.entry).unwrap(), critical_section(&t, s.entry).unwrap());
        }
        for e in t.ids() {
            assert_eq!(a.lockset(e).unwrap(), lockset(&t, e).unwrap());
        }
    }

    // Thread 2 may take m before thread 1 ever enters its section on a, and
    // then thread 1 can never reach the end of that section. Every prefix
    // that reaches unlock(a) still encloses e5, so the oracle counts e5 as
    // protected by a, but a must-precede argument cannot place lock(a)
    // before e5.
    #[test]
    fn deadlocking_schedule_separates_oracle_from_lockset() {
        let t = parse_trace(
            "1, fork(2)\n1, lock(a)\n1, lock(m)\n1, unlock(m)\n2, lock(m)\n1, join(2)\n1, unlock(a)",
        )
        .unwrap();
        assert!(crate::wellformed::is_well_formed(&t));
        let a = LockId::new("a").unwrap();
        assert!(protected_by_oracle(&t, EventId(5), &a, DEFAULT_CAP).unwrap());
        assert!(!lockset(&t, EventId(5)).unwrap().contains(&a));
        assert!(!must_precede(&t, EventId(2), EventId(5)).unwrap());
    }
}
