//! Correctly reordered prefixes and the must-precede relation.
//!
//! A correctly reordered prefix (CRP) of a well-formed trace `T` is a
//! well-formed trace whose per-thread projections are prefixes of those of
//! `T`. [`is_crp`] checks that definition directly. Everything else here runs
//! on a [`Scheduler`], which explores states given by per-thread progress
//! counters. A thread's next event may run iff
//!
//! * its fork has run (threads other than the main thread),
//! * no join of the thread has run,
//! * for `lock(m)`, no thread currently holds `m`,
//! * for `join(u)`, `u` is another thread and has run at least one event.
//!
//! The sequences of events produced by walking the scheduler from the empty
//! state are exactly the CRPs of `T`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trace::{EventId, LockId, Operation, ThreadId, Trace};
use crate::wellformed::validate;

/// Default bound on the number of prefixes an enumeration may produce.
pub const DEFAULT_CAP: usize = 1_000_000;

/// A candidate reordering, as a sequence of event ids of a subject trace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct CrpCandidate(pub Vec<EventId>);

impl CrpCandidate {
    pub fn ids(&self) -> &[EventId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: EventId) -> bool {
        self.0.contains(&id)
    }

    pub fn position(&self, id: EventId) -> Option<usize> {
        self.0.iter().position(|&x| x == id)
    }
}

impl fmt::Display for CrpCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.0.iter().map(|id| id.to_string()).collect();
        f.write_str(&ids.join(","))
    }
}

/// Checks both conditions of a correctly reordered prefix: the candidate is
/// well formed, and each of its thread projections prefixes the
/// corresponding projection of `trace`.
pub fn is_crp(candidate: &CrpCandidate, trace: &Trace) -> Result<bool> {
    let sub = trace.select(candidate.ids())?;
    if !validate(&sub).is_empty() {
        return Ok(false);
    }
    Ok(sub
        .threads()
        .into_iter()
        .all(|t| sub.project_thread(t).is_prefix_of(&trace.project_thread(t))))
}

/// Scheduler position: how many events of each thread have run.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SchedState {
    progress: Vec<u32>,
}

impl SchedState {
    pub fn scheduled(&self) -> usize {
        self.progress.iter().map(|&p| p as usize).sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Loc {
    slot: usize,
    step: u32,
}

/// Precomputed thread layout of a trace for schedule exploration.
#[derive(Debug)]
pub struct Scheduler<'a> {
    trace: &'a Trace,
    threads: Vec<ThreadId>,
    /// Trace indices of each thread's events, in program order.
    per_thread: Vec<Vec<usize>>,
    loc: Vec<Loc>,
    /// Lock number of each event's lock, if any.
    lock_of: Vec<Option<usize>>,
    lock_count: usize,
    fork_of: Vec<Option<Loc>>,
    joins_of: Vec<Vec<Loc>>,
}

impl<'a> Scheduler<'a> {
    pub fn new(trace: &'a Trace) -> Self {
        let threads: Vec<ThreadId> = trace.threads().into_iter().collect();
        let slot_of: HashMap<ThreadId, usize> =
            threads.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let mut per_thread = vec![Vec::new(); threads.len()];
        let mut loc = Vec::with_capacity(trace.len());
        for (i, e) in trace.events().iter().enumerate() {
            let slot = slot_of[&e.thread];
            loc.push(Loc {
                slot,
                step: per_thread[slot].len() as u32,
            });
            per_thread[slot].push(i);
        }

        let mut lock_ids: HashMap<&LockId, usize> = HashMap::new();
        let lock_of = trace
            .events()
            .iter()
            .map(|e| {
                e.op.lock().map(|m| {
                    let n = lock_ids.len();
                    *lock_ids.entry(m).or_insert(n)
                })
            })
            .collect();

        let mut fork_of = vec![None; threads.len()];
        let mut joins_of = vec![Vec::new(); threads.len()];
        for (i, e) in trace.events().iter().enumerate() {
            match e.op {
                Operation::Fork(t) => {
                    if let Some(&s) = slot_of.get(&t) {
                        fork_of[s].get_or_insert(loc[i]);
                    }
                }
                Operation::Join(t) => {
                    if let Some(&s) = slot_of.get(&t) {
                        joins_of[s].push(loc[i]);
                    }
                }
                _ => {}
            }
        }

        Scheduler {
            trace,
            threads,
            per_thread,
            loc,
            lock_of,
            lock_count: lock_ids.len(),
            fork_of,
            joins_of,
        }
    }

    pub fn trace(&self) -> &Trace {
        self.trace
    }

    pub fn initial(&self) -> SchedState {
        SchedState {
            progress: vec![0; self.threads.len()],
        }
    }

    pub fn progress(&self, state: &SchedState, thread: ThreadId) -> usize {
        self.threads
            .binary_search(&thread)
            .map(|s| state.progress[s] as usize)
            .unwrap_or(0)
    }

    fn ran(&self, state: &SchedState, at: Loc) -> bool {
        state.progress[at.slot] > at.step
    }

    pub fn is_scheduled(&self, state: &SchedState, id: EventId) -> bool {
        self.trace
            .index_of(id)
            .map(|i| self.ran(state, self.loc[i]))
            .unwrap_or(false)
    }

    /// Per lock number, whether some thread currently holds it.
    fn held(&self, state: &SchedState) -> Vec<bool> {
        let mut held = vec![false; self.lock_count];
        let mut mine = vec![false; self.lock_count];
        for (slot, events) in self.per_thread.iter().enumerate() {
            mine.fill(false);
            for &i in &events[..state.progress[slot] as usize] {
                if let Some(l) = self.lock_of[i] {
                    mine[l] = matches!(self.trace.events()[i].op, Operation::Lock(_));
                }
            }
            for (h, &m) in held.iter_mut().zip(&mine) {
                *h |= m;
            }
        }
        held
    }

    fn next_index(&self, state: &SchedState, slot: usize) -> Option<usize> {
        self.per_thread[slot].get(state.progress[slot] as usize).copied()
    }

    fn is_enabled(&self, state: &SchedState, slot: usize, held: &[bool]) -> bool {
        let Some(i) = self.next_index(state, slot) else {
            return false;
        };
        let thread = self.threads[slot];
        if !thread.is_main() && !self.fork_of[slot].is_some_and(|f| self.ran(state, f)) {
            return false;
        }
        if self.joins_of[slot].iter().any(|&j| self.ran(state, j)) {
            return false;
        }
        match &self.trace.events()[i].op {
            Operation::Lock(_) => !held[self.lock_of[i].expect("lock event has a lock")],
            Operation::Join(target) => {
                *target != thread
                    && self
                        .threads
                        .binary_search(target)
                        .is_ok_and(|s| state.progress[s] > 0)
            }
            Operation::Fork(_) | Operation::Unlock(_) => true,
        }
    }

    /// Threads (as slots, ascending thread id) whose next event may run.
    fn enabled_slots(&self, state: &SchedState) -> Vec<usize> {
        let held = self.held(state);
        (0..self.threads.len())
            .filter(|&s| self.is_enabled(state, s, &held))
            .collect()
    }

    /// Events that may run next, in ascending thread order.
    pub fn enabled(&self, state: &SchedState) -> Vec<EventId> {
        self.enabled_slots(state)
            .into_iter()
            .map(|s| self.event_at(state, s))
            .collect()
    }

    fn event_at(&self, state: &SchedState, slot: usize) -> EventId {
        self.trace.events()[self.next_index(state, slot).expect("enabled slot has a next event")].id
    }

    fn advance(&self, state: &SchedState, slot: usize) -> SchedState {
        let mut next = state.clone();
        next.progress[slot] += 1;
        next
    }

    /// Runs `id` from `state`, if it is enabled there.
    pub fn step(&self, state: &SchedState, id: EventId) -> Option<SchedState> {
        let i = self.trace.index_of(id).ok()?;
        let at = self.loc[i];
        if at.step != state.progress[at.slot] || !self.is_enabled(state, at.slot, &self.held(state)) {
            return None;
        }
        Some(self.advance(state, at.slot))
    }

    /// Runs `ids` from the empty state; `None` if some event is not enabled
    /// when its turn comes.
    pub fn replay(&self, ids: &[EventId]) -> Option<SchedState> {
        ids.iter()
            .try_fold(self.initial(), |state, &id| self.step(&state, id))
    }
}

/// Depth-first walk over all CRPs; each item is one distinct prefix.
pub struct CrpIter<'a> {
    scheduler: Scheduler<'a>,
    stack: Vec<Frame>,
    path: Vec<EventId>,
    emitted: usize,
    cap: usize,
    started: bool,
    done: bool,
}

struct Frame {
    state: SchedState,
    enabled: Vec<usize>,
    next: usize,
}

impl CrpIter<'_> {
    fn emit(&mut self) -> Option<Result<CrpCandidate>> {
        self.emitted += 1;
        if self.emitted > self.cap {
            self.done = true;
            return Some(Err(Error::CapExceeded { cap: self.cap }));
        }
        Some(Ok(CrpCandidate(self.path.clone())))
    }

    fn frame(&self, state: SchedState) -> Frame {
        let enabled = self.scheduler.enabled_slots(&state);
        Frame {
            state,
            enabled,
            next: 0,
        }
    }
}

impl Iterator for CrpIter<'_> {
    type Item = Result<CrpCandidate>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            let root = self.frame(self.scheduler.initial());
            self.stack.push(root);
            return self.emit();
        }
        loop {
            let Some(top) = self.stack.last_mut() else {
                self.done = true;
                return None;
            };
            if top.next < top.enabled.len() {
                let slot = top.enabled[top.next];
                top.next += 1;
                let id = self.scheduler.event_at(&top.state, slot);
                let state = self.scheduler.advance(&top.state, slot);
                self.path.push(id);
                let frame = self.frame(state);
                self.stack.push(frame);
                return self.emit();
            }
            self.stack.pop();
            self.path.pop();
        }
    }
}

/// Streams every CRP of `trace` exactly once, starting with the empty one.
/// Yields `CapExceeded` (and stops) once more than `cap` have been produced.
pub fn crps(trace: &Trace, cap: usize) -> CrpIter<'_> {
    CrpIter {
        scheduler: Scheduler::new(trace),
        stack: Vec::new(),
        path: Vec::new(),
        emitted: 0,
        cap,
        started: false,
        done: false,
    }
}

pub fn enumerate_crps(trace: &Trace, cap: usize) -> Result<Vec<CrpCandidate>> {
    crps(trace, cap).collect()
}

/// Number of CRPs, counted over distinct scheduler states.
pub fn count_crps(trace: &Trace, cap: usize) -> Result<u64> {
    fn go(
        sched: &Scheduler<'_>,
        state: SchedState,
        memo: &mut HashMap<SchedState, u64>,
        cap: u64,
    ) -> Result<u64> {
        if let Some(&n) = memo.get(&state) {
            return Ok(n);
        }
        let mut total: u64 = 1;
        for slot in sched.enabled_slots(&state) {
            total = total.saturating_add(go(sched, sched.advance(&state, slot), memo, cap)?);
            if total > cap {
                return Err(Error::CapExceeded { cap: cap as usize });
            }
        }
        memo.insert(state, total);
        Ok(total)
    }

    let sched = Scheduler::new(trace);
    let mut memo = HashMap::new();
    go(&sched, sched.initial(), &mut memo, cap as u64)
}

/// Whether every CRP of `trace` containing `f` also contains `e` before `f`.
///
/// `trace` is assumed well formed.
pub fn must_precede(trace: &Trace, e: EventId, f: EventId) -> Result<bool> {
    Ok(must_precede_witness(trace, e, f)?.is_none())
}

/// `None` if `e` must precede `f`; otherwise a CRP ending in `f` that does
/// not contain `e` before it.
pub fn must_precede_witness(trace: &Trace, e: EventId, f: EventId) -> Result<Option<CrpCandidate>> {
    trace.index_of(e)?;
    let f_pos = trace.index_of(f)?;
    if e == f {
        return Ok(Some(CrpCandidate(trace.prefix(f_pos + 1).ids().collect())));
    }

    let sched = Scheduler::new(trace);
    let mut visited = HashSet::new();
    let mut path = Vec::new();
    let mut stack = vec![(sched.initial(), 0usize, sched.enabled(&sched.initial()))];
    visited.insert(sched.initial());

    while let Some(top) = stack.last_mut() {
        let Some(&id) = top.2.get(top.1) else {
            stack.pop();
            path.pop();
            continue;
        };
        top.1 += 1;
        if id == e {
            continue;
        }
        if id == f {
            path.push(f);
            return Ok(Some(CrpCandidate(path)));
        }
        let succ = sched.step(&top.0, id).expect("enabled event steps");
        if visited.insert(succ.clone()) {
            let enabled = sched.enabled(&succ);
            path.push(id);
            stack.push((succ, 0, enabled));
        }
    }
    Ok(None)
}

/// All `f` with `e` must-preceding `f`, from one search.
pub fn must_follow(trace: &Trace, e: EventId) -> Result<BTreeSet<EventId>> {
    trace.index_of(e)?;
    let reachable = reachable_without(trace, e);
    Ok(trace
        .ids()
        .filter(|&f| f != e && !reachable.contains(&f))
        .collect())
}

/// Events that occur in some CRP not containing `e`.
fn reachable_without(trace: &Trace, e: EventId) -> HashSet<EventId> {
    let sched = Scheduler::new(trace);
    let mut seen_events = HashSet::new();
    let mut visited = HashSet::from([sched.initial()]);
    let mut work = vec![sched.initial()];
    while let Some(state) = work.pop() {
        for id in sched.enabled(&state) {
            if id == e {
                continue;
            }
            seen_events.insert(id);
            let succ = sched.step(&state, id).expect("enabled event steps");
            if visited.insert(succ.clone()) {
                work.push(succ);
            }
        }
    }
    seen_events
}

/// The full must-precede relation of a trace.
#[derive(Debug, Clone)]
pub struct Precedence {
    ids: Vec<EventId>,
    index: HashMap<EventId, usize>,
    /// `after[i]` holds the indices of events that event `i` must precede.
    after: Vec<HashSet<usize>>,
}

impl Precedence {
    pub fn compute(trace: &Trace) -> Self {
        let ids: Vec<EventId> = trace.ids().collect();
        let index: HashMap<EventId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let after = ids
            .iter()
            .map(|&e| {
                must_follow(trace, e)
                    .expect("id taken from the trace")
                    .into_iter()
                    .map(|f| index[&f])
                    .collect()
            })
            .collect();
        Precedence { ids, index, after }
    }

    pub fn holds(&self, e: EventId, f: EventId) -> Result<bool> {
        let i = *self.index.get(&e).ok_or(Error::UnknownEvent(e))?;
        let j = *self.index.get(&f).ok_or(Error::UnknownEvent(f))?;
        Ok(self.after[i].contains(&j))
    }

    pub fn successors(&self, e: EventId) -> Result<BTreeSet<EventId>> {
        let i = *self.index.get(&e).ok_or(Error::UnknownEvent(e))?;
        Ok(self.after[i].iter().map(|&j| self.ids[j]).collect())
    }
}
