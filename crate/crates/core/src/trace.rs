//! Events, traces and the trace file format.
//!
//! A trace file holds one event per line, `<thread>, <op>`, where `<op>` is
//! one of `fork(<thread>)`, `join(<thread>)`, `lock(<name>)` or
//! `unlock(<name>)`. `#` starts a comment. Event ids are the 1-based ordinals
//! of the non-comment lines. A line may carry an explicit id as a leading
//! column (`<id>, <thread>, <op>`), which is how reorderings of a recorded
//! trace keep the ids of the original.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::Serialize;

use crate::error::{Error, ParseError, ParseErrorKind, Result};

/// Thread identifier. The main thread is always `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ThreadId(u32);

impl ThreadId {
    pub const MAIN: ThreadId = ThreadId(1);

    pub fn new(value: u32) -> Option<Self> {
        (value >= 1).then_some(ThreadId(value))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn is_main(self) -> bool {
        self == Self::MAIN
    }
}

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Name of a lock (mutex). Compared by exact equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct LockId(String);

impl LockId {
    /// Returns `None` for names that cannot round-trip through the file format.
    pub fn new(name: impl Into<String>) -> Option<Self> {
        let name = name.into();
        let valid = !name.is_empty()
            && !name
                .chars()
                .any(|c| c.is_whitespace() || matches!(c, ',' | '(' | ')' | '#'));
        valid.then_some(LockId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operation {
    Fork(ThreadId),
    Join(ThreadId),
    Lock(LockId),
    Unlock(LockId),
}

impl Operation {
    pub fn lock(&self) -> Option<&LockId> {
        match self {
            Operation::Lock(m) | Operation::Unlock(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_lock_of(&self, lock: &LockId) -> bool {
        matches!(self, Operation::Lock(m) if m == lock)
    }

    pub fn is_unlock_of(&self, lock: &LockId) -> bool {
        matches!(self, Operation::Unlock(m) if m == lock)
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::Fork(t) => write!(f, "fork({t})"),
            Operation::Join(t) => write!(f, "join({t})"),
            Operation::Lock(m) => write!(f, "lock({m})"),
            Operation::Unlock(m) => write!(f, "unlock({m})"),
        }
    }
}

impl Serialize for Operation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Unique event identifier; the 1-based position in the recorded trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct EventId(pub u32);

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An event `(id, thread, op)`. Two events are the same event iff their ids
/// are equal.
#[derive(Debug, Clone)]
pub struct Event {
    pub id: EventId,
    pub thread: ThreadId,
    pub op: Operation,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for Event {}

impl Hash for Event {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.id.hash(state);
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{} = ({}, {})", self.id, self.thread, self.op)
    }
}

/// An ordered sequence of events with pairwise distinct ids.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    events: Vec<Event>,
    index: HashMap<EventId, usize>,
}

impl Trace {
    pub fn new(events: Vec<Event>) -> Result<Self> {
        let mut index = HashMap::with_capacity(events.len());
        for (i, e) in events.iter().enumerate() {
            if index.insert(e.id, i).is_some() {
                return Err(Error::DuplicateEvent(e.id));
            }
        }
        Ok(Trace { events, index })
    }

    /// Builds a trace numbering events 1, 2, ... in iteration order.
    pub fn from_ops(ops: impl IntoIterator<Item = (ThreadId, Operation)>) -> Self {
        let events = ops
            .into_iter()
            .enumerate()
            .map(|(i, (thread, op))| Event {
                id: EventId(i as u32 + 1),
                thread,
                op,
            })
            .collect();
        Trace::new(events).expect("positional ids are distinct")
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn ids(&self) -> impl Iterator<Item = EventId> + '_ {
        self.events.iter().map(|e| e.id)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn contains(&self, id: EventId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn get(&self, id: EventId) -> Option<&Event> {
        self.index.get(&id).map(|&i| &self.events[i])
    }

    pub fn event(&self, id: EventId) -> Result<&Event> {
        self.get(id).ok_or(Error::UnknownEvent(id))
    }

    /// 0-based index of `id`, for internal bookkeeping.
    pub(crate) fn index_of(&self, id: EventId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownEvent(id))
    }

    /// The 1-based position `k` such that `id` is the k-th event.
    pub fn position(&self, id: EventId) -> Result<usize> {
        self.index_of(id).map(|i| i + 1)
    }

    /// Trace order: `e` occurs strictly before `f`.
    pub fn trace_order(&self, e: EventId, f: EventId) -> Result<bool> {
        Ok(self.index_of(e)? < self.index_of(f)?)
    }

    /// The subsequence of events executed by `thread`.
    pub fn project_thread(&self, thread: ThreadId) -> Trace {
        let events = self
            .events
            .iter()
            .filter(|e| e.thread == thread)
            .cloned()
            .collect();
        Trace::new(events).expect("subsequence keeps ids distinct")
    }

    pub fn threads(&self) -> BTreeSet<ThreadId> {
        self.events.iter().map(|e| e.thread).collect()
    }

    pub fn locks(&self) -> BTreeSet<LockId> {
        self.events
            .iter()
            .filter_map(|e| e.op.lock().cloned())
            .collect()
    }

    /// Whether `self` is an initial segment of `other`, by event identity.
    pub fn is_prefix_of(&self, other: &Trace) -> bool {
        self.len() <= other.len()
            && self
                .events
                .iter()
                .zip(&other.events)
                .all(|(a, b)| a.id == b.id)
    }

    /// The events of `self` named by `ids`, in the given order.
    pub fn select(&self, ids: &[EventId]) -> Result<Trace> {
        let events = ids
            .iter()
            .map(|&id| self.event(id).cloned())
            .collect::<Result<Vec<_>>>()?;
        Trace::new(events)
    }

    /// The first `n` events.
    pub fn prefix(&self, n: usize) -> Trace {
        Trace::new(self.events[..n.min(self.len())].to_vec()).expect("prefix keeps ids distinct")
    }
}

impl PartialEq for Trace {
    fn eq(&self, other: &Self) -> bool {
        self.events.len() == other.events.len()
            && self
                .events
                .iter()
                .zip(&other.events)
                .all(|(a, b)| a.id == b.id && a.thread == b.thread && a.op == b.op)
    }
}

impl Eq for Trace {}

impl std::str::FromStr for Trace {
    type Err = ParseError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        parse_trace(s)
    }
}

pub fn parse_trace(text: &str) -> std::result::Result<Trace, ParseError> {
    let mut events = Vec::new();
    let mut seen = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |kind| ParseError {
            line: lineno + 1,
            kind,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let (id, thread, op) = match fields.as_slice() {
            [thread, op] => (events.len() as u32 + 1, *thread, *op),
            [id, thread, op] => {
                let id = id
                    .parse::<u32>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| err(ParseErrorKind::BadEventId(id.to_string())))?;
                (id, *thread, *op)
            }
            _ => return Err(err(ParseErrorKind::BadLine(line.to_string()))),
        };
        let thread = parse_thread(thread).ok_or_else(|| err(ParseErrorKind::BadThread(thread.to_string())))?;
        let op = parse_op(op).map_err(err)?;
        if seen.insert(id, ()).is_some() {
            return Err(err(ParseErrorKind::DuplicateId(id)));
        }
        events.push(Event {
            id: EventId(id),
            thread,
            op,
        });
    }
    Ok(Trace::new(events).expect("ids checked while parsing"))
}

fn parse_thread(s: &str) -> Option<ThreadId> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok().and_then(ThreadId::new)
}

fn parse_op(s: &str) -> std::result::Result<Operation, ParseErrorKind> {
    let (keyword, arg) = s
        .strip_suffix(')')
        .and_then(|s| s.split_once('('))
        .map(|(k, a)| (k.trim(), a.trim()))
        .ok_or_else(|| ParseErrorKind::UnknownOperation(s.to_string()))?;
    let thread = || parse_thread(arg).ok_or_else(|| ParseErrorKind::BadThread(arg.to_string()));
    let lock = || LockId::new(arg).ok_or_else(|| ParseErrorKind::BadLock(arg.to_string()));
    match keyword {
        "fork" => Ok(Operation::Fork(thread()?)),
        "join" => Ok(Operation::Join(thread()?)),
        "lock" => Ok(Operation::Lock(lock()?)),
        "unlock" => Ok(Operation::Unlock(lock()?)),
        _ => Err(ParseErrorKind::UnknownOperation(keyword.to_string())),
    }
}

/// Renders `trace` in the file format. Ids are implicit, so they are
/// renumbered by position when read back.
pub fn serialize(trace: &Trace) -> String {
    let mut out = String::new();
    for e in trace.events() {
        out.push_str(&format!("{}, {}\n", e.thread, e.op));
    }
    out
}
