//! Seeded random generation of well-formed traces.
//!
//! The generator simulates a program: it keeps track of live threads, lock
//! holders and joins, and only emits events the simulated program could
//! perform next, so every output is well formed by construction. About one
//! thread in five is allowed to finish while still holding a lock, and
//! threads are not necessarily joined, so open critical sections occur.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::trace::{LockId, Operation, ThreadId, Trace};

const MAX_THREADS: usize = 64;
const MAX_LOCKS: usize = 64;
const MAX_EVENTS: usize = 100_000;
const OPEN_SECTION_PROBABILITY: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    pub seed: u64,
    pub max_threads: usize,
    pub max_locks: usize,
    pub max_events: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            seed: 0,
            max_threads: 3,
            max_locks: 2,
            max_events: 12,
        }
    }
}

struct SimThread {
    id: ThreadId,
    events: usize,
    joined: bool,
    may_leave_open: bool,
}

pub fn generate(params: GenParams) -> Trace {
    let max_threads = params.max_threads.clamp(1, MAX_THREADS);
    let lock_count = params.max_locks.min(MAX_LOCKS);
    let max_events = params.max_events.min(MAX_EVENTS);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let locks: Vec<LockId> = (1..=lock_count)
        .map(|i| LockId::new(format!("m{i}")).expect("valid lock name"))
        .collect();
    let mut holder: Vec<Option<ThreadId>> = vec![None; lock_count];
    let mut threads = vec![SimThread {
        id: ThreadId::MAIN,
        events: 0,
        joined: false,
        may_leave_open: rng.gen_bool(OPEN_SECTION_PROBABILITY),
    }];
    let mut ops = Vec::with_capacity(max_events);

    while ops.len() < max_events {
        let remaining = max_events - ops.len();
        let must_release: usize = holder
            .iter()
            .flatten()
            .filter(|&&t| threads.iter().any(|s| s.id == t && !s.joined && !s.may_leave_open))
            .count();

        let mut candidates: Vec<(usize, Operation, u32)> = Vec::new();
        for (slot, t) in threads.iter().enumerate().filter(|(_, t)| !t.joined) {
            for (i, m) in locks.iter().enumerate() {
                match holder[i] {
                    None => candidates.push((slot, Operation::Lock(m.clone()), 3)),
                    Some(h) if h == t.id => candidates.push((slot, Operation::Unlock(m.clone()), 3)),
                    Some(_) => {}
                }
            }
            if threads.len() < max_threads {
                let child = ThreadId::new(threads.len() as u32 + 1).expect("positive");
                candidates.push((slot, Operation::Fork(child), 2));
            }
            for u in &threads {
                if u.id != t.id && !u.id.is_main() && !u.joined && u.events > 0 {
                    candidates.push((slot, Operation::Join(u.id), 2));
                }
            }
        }
        if remaining <= must_release {
            candidates.retain(|(slot, op, _)| {
                matches!(op, Operation::Unlock(_)) && !threads[*slot].may_leave_open
            });
        }
        let Ok(&(slot, ref op, _)) = candidates.choose_weighted(&mut rng, |c| c.2) else {
            break;
        };
        let op = op.clone();
        let actor = threads[slot].id;
        threads[slot].events += 1;
        match &op {
            Operation::Lock(m) | Operation::Unlock(m) => {
                let i = locks.iter().position(|l| l == m).expect("generated lock");
                holder[i] = matches!(op, Operation::Lock(_)).then_some(actor);
            }
            Operation::Fork(child) => threads.push(SimThread {
                id: *child,
                events: 0,
                joined: false,
                may_leave_open: rng.gen_bool(OPEN_SECTION_PROBABILITY),
            }),
            Operation::Join(u) => {
                if let Some(s) = threads.iter_mut().find(|s| s.id == *u) {
                    s.joined = true;
                }
            }
        }
        ops.push((actor, op));
    }
    Trace::from_ops(ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wellformed::validate;

    #[test]
    fn zero_events_gives_empty_trace() {
        let t = generate(GenParams {
            seed: 1,
            max_events: 0,
            ..GenParams::default()
        });
        assert!(t.is_empty());
    }

    #[test]
    fn single_thread_has_no_fork_or_join() {
        for seed in 0..50 {
            let t = generate(GenParams {
                seed,
                max_threads: 1,
                ..GenParams::default()
            });
            assert!(t
                .events()
                .iter()
                .all(|e| !matches!(e.op, Operation::Fork(_) | Operation::Join(_))));
        }
    }

    #[test]
    fn seed_42_is_well_formed_and_deterministic() {
        let p = GenParams {
            seed: 42,
            max_threads: 3,
            max_locks: 2,
            max_events: 12,
        };
        let t = generate(p);
        assert!(validate(&t).is_empty());
        assert_eq!(t, generate(p));
    }

    #[test]
    fn no_locks_means_no_lock_events() {
        let t = generate(GenParams {
            seed: 3,
            max_locks: 0,
            ..GenParams::default()
        });
        assert!(t.locks().is_empty());
        assert!(validate(&t).is_empty());
    }
}
