#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};
use std::path::PathBuf;

use locksem::{is_crp, parse_trace, CrpCandidate, EventId, GenParams, Trace};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture(name: &str) -> Trace {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture exists");
    parse_trace(&text).expect("fixture parses")
}

pub fn t1() -> Trace {
    fixture("t1.trace")
}

pub fn ids(v: &[u32]) -> Vec<EventId> {
    v.iter().map(|&i| EventId(i)).collect()
}

pub fn cand(v: &[u32]) -> CrpCandidate {
    CrpCandidate(ids(v))
}

/// The other traces of the well-formedness example, built from T1's events.
pub fn t1_variant(name: &str) -> Trace {
    let order: &[u32] = match name {
        "T2" => &[1, 6, 7, 8, 9, 10, 11, 2, 3, 4, 5],
        "T3" => &[1, 6, 7, 8, 9, 10, 11, 2],
        "T4" => &[1, 7, 8, 10, 6, 11],
        "T5" => &[1, 2, 6],
        "T6" => &[2, 3, 4, 5],
        _ => panic!("unknown variant {name}"),
    };
    t1().select(&ids(order)).unwrap()
}

/// Generator settings for the seed sweeps: up to 4 threads, 3 locks and
/// 12 events, cycling through the combinations.
pub fn sweep_params(seed: u64) -> GenParams {
    GenParams {
        seed,
        max_threads: 1 + (seed % 4) as usize,
        max_locks: 1 + ((seed / 4) % 3) as usize,
        max_events: 4 + ((seed / 12) % 9) as usize,
    }
}

/// All correctly reordered prefixes, found by extending known members one
/// event at a time and keeping the extensions the definitional check
/// accepts. Complete because the set is prefix-closed.
pub fn crps_by_definition(trace: &Trace) -> BTreeSet<Vec<EventId>> {
    let all: Vec<EventId> = trace.ids().collect();
    let mut found = BTreeSet::new();
    let mut frontier = vec![Vec::new()];
    found.insert(Vec::new());
    while let Some(seq) = frontier.pop() {
        let used: HashSet<EventId> = seq.iter().copied().collect();
        for &id in &all {
            if used.contains(&id) {
                continue;
            }
            let mut next = seq.clone();
            next.push(id);
            if is_crp(&CrpCandidate(next.clone()), trace).unwrap() && found.insert(next.clone()) {
                frontier.push(next);
            }
        }
    }
    found
}

/// Every ordering of every subset of the trace's events, filtered by the
/// definitional check.
pub fn crps_by_brute_force(trace: &Trace) -> BTreeSet<Vec<EventId>> {
    fn extend(
        trace: &Trace,
        all: &[EventId],
        seq: &mut Vec<EventId>,
        out: &mut BTreeSet<Vec<EventId>>,
    ) {
        if is_crp(&CrpCandidate(seq.clone()), trace).unwrap() {
            out.insert(seq.clone());
        }
        for &id in all {
            if !seq.contains(&id) {
                seq.push(id);
                extend(trace, all, seq, out);
                seq.pop();
            }
        }
    }
    let all: Vec<EventId> = trace.ids().collect();
    let mut out = BTreeSet::new();
    extend(trace, &all, &mut Vec::new(), &mut out);
    out
}

/// `e` must precede `f`, checked against an explicit list of prefixes.
pub fn must_precede_by_definition(crps: &[Vec<EventId>], e: EventId, f: EventId) -> bool {
    crps.iter().all(|c| match c.iter().position(|&x| x == f) {
        None => true,
        Some(pf) => c[..pf].contains(&e),
    })
}
