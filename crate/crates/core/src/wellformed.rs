//! Well-formedness of traces.
//!
//! Every condition is checked and every breach reported; an empty result
//! means the trace is well formed.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use crate::trace::{EventId, LockId, Operation, ThreadId, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum WfCondition {
    #[serde(rename = "WF-Acq")]
    Acq,
    #[serde(rename = "WF-Rel")]
    Rel,
    #[serde(rename = "WF-Fork1")]
    Fork1,
    #[serde(rename = "WF-Fork2")]
    Fork2,
    #[serde(rename = "WF-Join1")]
    Join1,
    #[serde(rename = "WF-Join2")]
    Join2,
}

impl WfCondition {
    pub fn name(self) -> &'static str {
        match self {
            WfCondition::Acq => "WF-Acq",
            WfCondition::Rel => "WF-Rel",
            WfCondition::Fork1 => "WF-Fork1",
            WfCondition::Fork2 => "WF-Fork2",
            WfCondition::Join1 => "WF-Join1",
            WfCondition::Join2 => "WF-Join2",
        }
    }
}

impl fmt::Display for WfCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A breach of one condition. `witnesses` are in trace order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WfViolation {
    pub condition: WfCondition,
    pub witnesses: Vec<EventId>,
    pub message: String,
}

impl fmt::Display for WfViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.witnesses.iter().map(|w| format!("e{w}")).collect();
        write!(f, "{} [{}]: {}", self.condition, ids.join(", "), self.message)
    }
}

pub fn is_well_formed(trace: &Trace) -> bool {
    validate(trace).is_empty()
}

/// Checks all six conditions. Violations are ordered by the position of
/// their first witness, then by condition.
pub fn validate(trace: &Trace) -> Vec<WfViolation> {
    let mut out = Vec::new();
    check_locks(trace, &mut out);
    check_forks(trace, &mut out);
    check_joins(trace, &mut out);

    let pos: HashMap<EventId, usize> = trace.ids().enumerate().map(|(i, id)| (id, i)).collect();
    out.sort_by_key(|v| (v.witnesses.first().map(|w| pos[w]), v.condition));
    out
}

fn check_locks(trace: &Trace, out: &mut Vec<WfViolation>) {
    // Most recent acquisition of each lock, and whether its acquirer has
    // released it since.
    let mut last_lock: HashMap<&LockId, (EventId, ThreadId, bool)> = HashMap::new();
    // Latest lock(m) per (thread, m), and whether any unlock(m) followed it.
    let mut own_lock: HashMap<(ThreadId, &LockId), (EventId, Option<EventId>)> = HashMap::new();

    for e in trace.events() {
        match &e.op {
            Operation::Lock(m) => {
                if let Some(&(prev, holder, false)) = last_lock.get(m) {
                    out.push(WfViolation {
                        condition: WfCondition::Acq,
                        witnesses: vec![prev, e.id],
                        message: format!(
                            "lock {m} acquired by thread {} while still held by thread {holder}",
                            e.thread
                        ),
                    });
                }
                last_lock.insert(m, (e.id, e.thread, false));
                own_lock.insert((e.thread, m), (e.id, None));
            }
            Operation::Unlock(m) => {
                match own_lock.get(&(e.thread, m)) {
                    None => out.push(WfViolation {
                        condition: WfCondition::Rel,
                        witnesses: vec![e.id],
                        message: format!("thread {} releases {m} without acquiring it", e.thread),
                    }),
                    Some(&(_, Some(between))) => out.push(WfViolation {
                        condition: WfCondition::Rel,
                        witnesses: vec![between, e.id],
                        message: format!(
                            "thread {} releases {m} which was already released since its acquisition",
                            e.thread
                        ),
                    }),
                    Some(&(_, None)) => {}
                }
                if let Some(entry) = last_lock.get_mut(m) {
                    if entry.1 == e.thread {
                        entry.2 = true;
                    }
                }
                for ((_, lock), (_, released)) in own_lock.iter_mut() {
                    if *lock == m && released.is_none() {
                        *released = Some(e.id);
                    }
                }
            }
            _ => {}
        }
    }
}

fn check_forks(trace: &Trace, out: &mut Vec<WfViolation>) {
    let mut forks: BTreeMap<ThreadId, Vec<EventId>> = BTreeMap::new();
    for e in trace.events() {
        if let Operation::Fork(target) = e.op {
            if target.is_main() {
                out.push(WfViolation {
                    condition: WfCondition::Fork1,
                    witnesses: vec![e.id],
                    message: "fork targets the main thread".into(),
                });
            }
            forks.entry(target).or_default().push(e.id);
        }
    }
    for (target, ids) in &forks {
        if ids.len() > 1 {
            out.push(WfViolation {
                condition: WfCondition::Fork1,
                witnesses: ids.clone(),
                message: format!("thread {target} is forked {} times", ids.len()),
            });
        }
    }

    let mut forked: BTreeMap<ThreadId, bool> = BTreeMap::new();
    let mut orphans: BTreeMap<ThreadId, Vec<EventId>> = BTreeMap::new();
    for e in trace.events() {
        if !e.thread.is_main() && !forked.get(&e.thread).copied().unwrap_or(false) {
            orphans.entry(e.thread).or_default().push(e.id);
        }
        if let Operation::Fork(target) = e.op {
            forked.insert(target, true);
        }
    }
    for (thread, ids) in orphans {
        out.push(WfViolation {
            condition: WfCondition::Fork2,
            witnesses: ids,
            message: format!("thread {thread} has events not preceded by fork({thread})"),
        });
    }
}

fn check_joins(trace: &Trace, out: &mut Vec<WfViolation>) {
    for (i, e) in trace.events().iter().enumerate() {
        let Operation::Join(target) = e.op else {
            continue;
        };
        if e.thread == target {
            out.push(WfViolation {
                condition: WfCondition::Join1,
                witnesses: vec![e.id],
                message: format!("thread {target} joins itself"),
            });
        }
        if !trace.events().iter().any(|f| f.thread == target) {
            out.push(WfViolation {
                condition: WfCondition::Join1,
                witnesses: vec![e.id],
                message: format!("joined thread {target} has no events"),
            });
        }
        let late: Vec<EventId> = trace.events()[i + 1..]
            .iter()
            .filter(|f| f.thread == target)
            .map(|f| f.id)
            .collect();
        if !late.is_empty() {
            let mut witnesses = vec![e.id];
            witnesses.extend(late);
            out.push(WfViolation {
                condition: WfCondition::Join2,
                witnesses,
                message: format!("thread {target} has events after join({target})"),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::parse_trace;

    fn conds(text: &str) -> Vec<(WfCondition, Vec<u32>)> {
        validate(&parse_trace(text).unwrap())
            .into_iter()
            .map(|v| (v.condition, v.witnesses.iter().map(|w| w.0).collect()))
            .collect()
    }

    #[test]
    fn empty_trace_is_well_formed() {
        assert!(conds("").is_empty());
    }

    #[test]
    fn double_acquire() {
        assert_eq!(conds("1, lock(m)\n1, lock(m)"), vec![(WfCondition::Acq, vec![1, 2])]);
    }

    #[test]
    fn release_by_other_thread_does_not_satisfy_acq() {
        let text = "1, fork(2)\n1, lock(m)\n2, unlock(m)\n2, lock(m)";
        let got = conds(text);
        assert!(got.contains(&(WfCondition::Acq, vec![2, 4])));
        assert!(got.contains(&(WfCondition::Rel, vec![3])));
    }

    #[test]
    fn unlock_without_lock() {
        assert_eq!(conds("1, unlock(m)"), vec![(WfCondition::Rel, vec![1])]);
        assert_eq!(
            conds("1, lock(m)\n1, unlock(m)\n1, unlock(m)"),
            vec![(WfCondition::Rel, vec![2, 3])]
        );
    }

    #[test]
    fn fork_conditions() {
        assert_eq!(conds("1, fork(1)"), vec![(WfCondition::Fork1, vec![1])]);
        assert_eq!(
            conds("1, fork(2)\n1, fork(2)"),
            vec![(WfCondition::Fork1, vec![1, 2])]
        );
        assert_eq!(
            conds("2, lock(m)\n1, fork(2)\n2, unlock(m)"),
            vec![(WfCondition::Fork2, vec![1])]
        );
    }

    #[test]
    fn self_fork() {
        assert_eq!(conds("2, fork(2)"), vec![(WfCondition::Fork2, vec![1])]);
        assert_eq!(conds("1, fork(1)"), vec![(WfCondition::Fork1, vec![1])]);
        assert!(conds("1, fork(2)\n2, fork(3)").is_empty());
    }

    #[test]
    fn join_conditions() {
        assert_eq!(conds("1, join(2)"), vec![(WfCondition::Join1, vec![1])]);
        assert_eq!(conds("1, join(1)"), vec![(WfCondition::Join1, vec![1])]);
        assert_eq!(
            conds("1, fork(2)\n2, lock(m)\n1, join(2)\n2, unlock(m)"),
            vec![(WfCondition::Join2, vec![3, 4])]
        );
        // joining the same thread twice is allowed
        assert!(conds("1, fork(2)\n2, lock(m)\n1, join(2)\n1, join(2)").is_empty());
    }

    #[test]
    fn violations_sorted_by_first_witness() {
        let text = "2, lock(m)\n1, lock(m)\n1, join(3)";
        let got: Vec<WfCondition> = conds(text).into_iter().map(|(c, _)| c).collect();
        assert_eq!(got, vec![WfCondition::Acq, WfCondition::Fork2, WfCondition::Join1]);
    }

    #[test]
    fn json_shape() {
        let v = validate(&parse_trace("1, unlock(m)").unwrap());
        let json = serde_json::to_value(&v).unwrap();
        assert_eq!(json[0]["condition"], "WF-Rel");
        assert_eq!(json[0]["witnesses"], serde_json::json!([1]));
    }
}
