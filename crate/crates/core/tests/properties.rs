mod common;

use std::collections::{BTreeSet, HashMap, HashSet};

use common::*;
use locksem::locksets::{diff_report, entry_exit_pairs};
use locksem::reorder::{Scheduler, DEFAULT_CAP};
use locksem::*;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = GenParams> {
    (any::<u64>(), 1usize..=4, 1usize..=3, 0usize..=12).prop_map(|(seed, t, l, e)| GenParams {
        seed,
        max_threads: t,
        max_locks: l,
        max_events: e,
    })
}

fn small_params() -> impl Strategy<Value = GenParams> {
    (any::<u64>(), 1usize..=3, 1usize..=2, 0usize..=7).prop_map(|(seed, t, l, e)| GenParams {
        seed,
        max_threads: t,
        max_locks: l,
        max_events: e,
    })
}

/// Renames every lock and every thread except the main one.
fn relabel(trace: &Trace, shift: u32) -> Trace {
    let thread = |t: ThreadId| {
        if t.is_main() {
            t
        } else {
            ThreadId::new(t.get() + shift).unwrap()
        }
    };
    let events = trace
        .events()
        .iter()
        .map(|e| {
            let op = match &e.op {
                Operation::Fork(t) => Operation::Fork(thread(*t)),
                Operation::Join(t) => Operation::Join(thread(*t)),
                Operation::Lock(m) => Operation::Lock(LockId::new(format!("x_{m}")).unwrap()),
                Operation::Unlock(m) => Operation::Unlock(LockId::new(format!("x_{m}")).unwrap()),
            };
            Event {
                id: e.id,
                thread: thread(e.thread),
                op,
            }
        })
        .collect();
    Trace::new(events).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn generated_traces_are_well_formed(p in params()) {
        let t = generate(p);
        prop_assert!(validate(&t).is_empty());
        prop_assert!(t.len() <= p.max_events);
        prop_assert!(t.threads().len() <= p.max_threads);
    }

    #[test]
    fn serialize_then_parse_is_identity(p in params()) {
        let t = generate(p);
        prop_assert_eq!(parse_trace(&serialize(&t)).unwrap(), t);
    }

    #[test]
    fn well_formedness_is_prefix_closed(p in params()) {
        let t = generate(p);
        for n in 0..=t.len() {
            prop_assert!(validate(&t.prefix(n)).is_empty());
        }
    }

    #[test]
    fn validation_ignores_relabeling(p in params(), shift in 1u32..5) {
        let t = generate(p);
        prop_assert!(validate(&relabel(&t, shift)).is_empty());
    }

    #[test]
    fn projection_keeps_order(p in params()) {
        let t = generate(p);
        for thread in t.threads() {
            let proj = t.project_thread(thread);
            prop_assert!(proj.threads().iter().all(|&u| u == thread));
            let ids: Vec<EventId> = proj.ids().collect();
            for w in ids.windows(2) {
                prop_assert!(t.trace_order(w[0], w[1]).unwrap());
            }
        }
        for (k, id) in t.ids().enumerate() {
            prop_assert_eq!(t.position(id).unwrap(), k + 1);
        }
    }

    #[test]
    fn enumeration_is_prefix_closed_and_definitional(p in params()) {
        let t = generate(p);
        let all = enumerate_crps(&t, DEFAULT_CAP).unwrap();
        let set: HashSet<Vec<EventId>> = all.iter().map(|c| c.0.clone()).collect();
        prop_assert_eq!(set.len(), all.len());
        prop_assert!(set.contains(&Vec::new()));
        prop_assert!(set.contains(&t.ids().collect::<Vec<_>>()));
        for c in &all {
            prop_assert!(is_crp(c, &t).unwrap());
            for k in 0..c.len() {
                prop_assert!(set.contains(&c.ids()[..k]));
            }
        }
        prop_assert_eq!(count_crps(&t, DEFAULT_CAP).unwrap(), all.len() as u64);
    }

    #[test]
    fn enumeration_matches_brute_force(p in small_params()) {
        let t = generate(p);
        let enumerated: BTreeSet<Vec<EventId>> =
            enumerate_crps(&t, DEFAULT_CAP).unwrap().into_iter().map(|c| c.0).collect();
        prop_assert_eq!(enumerated, crps_by_brute_force(&t));
    }

    #[test]
    fn recorded_order_is_always_schedulable(p in params()) {
        let t = generate(p);
        let sched = Scheduler::new(&t);
        let ids: Vec<EventId> = t.ids().collect();
        prop_assert!(sched.replay(&ids).is_some());
    }

    #[test]
    fn must_precede_is_a_strict_order_containing_program_order(p in params()) {
        let t = generate(p);
        let ids: Vec<EventId> = t.ids().collect();
        let mut rel = HashMap::new();
        for &e in &ids {
            for &f in &ids {
                rel.insert((e, f), must_precede(&t, e, f).unwrap());
            }
        }
        for &a in &ids {
            prop_assert!(!rel[&(a, a)]);
            for &b in &ids {
                for &c in &ids {
                    if rel[&(a, b)] && rel[&(b, c)] {
                        prop_assert!(rel[&(a, c)]);
                    }
                }
            }
        }
        for e in t.events() {
            for f in t.events() {
                if e.thread == f.thread && t.trace_order(e.id, f.id).unwrap() {
                    prop_assert!(rel[&(e.id, f.id)]);
                }
            }
            if let Operation::Fork(child) = e.op {
                if let Some(first) = t.project_thread(child).ids().next() {
                    prop_assert!(rel[&(e.id, first)]);
                }
            }
        }
    }

    #[test]
    fn exit_points_are_stable(p in params()) {
        let t = generate(p);
        let all = enumerate_crps(&t, DEFAULT_CAP).unwrap();
        for s in entry_exit_pairs(&t) {
            for c in all.iter().filter(|c| c.contains(s.exit)) {
                let reordered = t.select(c.ids()).unwrap();
                prop_assert_eq!(exit_point(&reordered, s.entry).unwrap(), s.exit);
            }
        }
    }

    #[test]
    fn per_thread_within_trace_based(p in params()) {
        let t = generate(p);
        for row in diff_report(&t).rows {
            prop_assert!(row.per_thread.is_subset(&row.trace_based));
            prop_assert_eq!(
                row.gained,
                row.trace_based.difference(&row.per_thread).cloned().collect::<BTreeSet<_>>()
            );
        }
    }

    #[test]
    fn trace_based_lockset_is_protected(p in params()) {
        let t = generate(p);
        let oracle = ProtectionOracle::new(&t, DEFAULT_CAP).unwrap();
        for e in t.ids() {
            for m in lockset(&t, e).unwrap() {
                prop_assert!(oracle.protected_by(e, &m).unwrap());
            }
            for m in per_thread_lockset(&t, e).unwrap() {
                prop_assert!(oracle.protected_by(e, &m).unwrap());
            }
        }
    }

    #[test]
    fn section_delimiters(p in params()) {
        let t = generate(p);
        for s in entry_exit_pairs(&t) {
            let cs = critical_section(&t, s.entry).unwrap();
            let pcs = per_thread_cs(&t, s.entry).unwrap();
            if s.open {
                prop_assert!(cs.contains(&s.exit));
                prop_assert!(pcs.contains(&s.exit));
                if s.exit == s.entry {
                    prop_assert!(lockset(&t, s.entry).unwrap().contains(&s.lock));
                }
            } else {
                for id in [s.entry, s.exit] {
                    prop_assert!(!cs.contains(&id));
                    prop_assert!(!pcs.contains(&id));
                }
            }
        }
    }
}
