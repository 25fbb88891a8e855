//! Heuristic schedulers and the scheduler kinds used across experiments.
//!
//! Heuristics only consider slots whose job fits on some VM; with no such
//! slot they return the no-op. Ties go to the lowest slot index.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{Action, SlotView};
use crate::error::{Error, Result};
use crate::reward::RewardWeights;
use crate::workload::Resources;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchedulerKind {
    #[serde(rename = "rr")]
    RoundRobin,
    #[serde(rename = "sjf")]
    Sjf,
    #[serde(rename = "ljf")]
    Ljf,
    #[serde(rename = "tetris")]
    Tetris,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "plain-a3c")]
    PlainA3c,
    #[serde(rename = "wa3c")]
    Wa3c,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 7] = [
        SchedulerKind::RoundRobin,
        SchedulerKind::Sjf,
        SchedulerKind::Ljf,
        SchedulerKind::Tetris,
        SchedulerKind::Random,
        SchedulerKind::PlainA3c,
        SchedulerKind::Wa3c,
    ];

    pub const HEURISTICS: [SchedulerKind; 5] = [
        SchedulerKind::RoundRobin,
        SchedulerKind::Sjf,
        SchedulerKind::Ljf,
        SchedulerKind::Tetris,
        SchedulerKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::RoundRobin => "rr",
            SchedulerKind::Sjf => "sjf",
            SchedulerKind::Ljf => "ljf",
            SchedulerKind::Tetris => "tetris",
            SchedulerKind::Random => "random",
            SchedulerKind::PlainA3c => "plain-a3c",
            SchedulerKind::Wa3c => "wa3c",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, SchedulerKind::PlainA3c | SchedulerKind::Wa3c)
    }

    /// Softmax priority weight for the learned kinds.
    pub fn beta(self, wa3c_beta: f64) -> f64 {
        match self {
            SchedulerKind::PlainA3c => 0.0,
            _ => wa3c_beta,
        }
    }

    /// Reward weights the learner optimizes; only the ablation overrides them.
    pub fn learning_weights(self) -> Option<RewardWeights> {
        match self {
            SchedulerKind::PlainA3c => Some(RewardWeights::qos_energy_only()),
            _ => None,
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase().replace('_', "-");
        let name = match lower.as_str() {
            "round-robin" => "rr",
            "plaina3c" | "a3c" => "plain-a3c",
            other => other,
        };
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::config("scheduler", format!("unknown scheduler {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// A stateful heuristic scheduler: owns the round-robin cursor and the random stream.
#[derive(Debug, Clone)]
pub struct Heuristic {
    kind: SchedulerKind,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl Heuristic {
    pub fn new(kind: SchedulerKind, seed: u64) -> Result<Self> {
        if kind.is_learned() {
            return Err(Error::config("scheduler", format!("{kind} is a learned scheduler, not a heuristic")));
        }
        Ok(Heuristic {
            kind,
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn kind(&self) -> SchedulerKind {
        self.kind
    }

    pub fn schedule(&mut self, queue: &[Option<SlotView>], availability: Resources) -> Action {
        let live: Vec<(usize, &SlotView)> = queue
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().filter(|v| v.fits).map(|v| (i, v)))
            .collect();
        if live.is_empty() {
            return Action::NoOp;
        }
        let slot = match self.kind {
            SchedulerKind::RoundRobin => {
                let k = queue.len();
                let pick = live
                    .iter()
                    .map(|(i, _)| *i)
                    .find(|i| *i >= self.cursor)
                    .unwrap_or(live[0].0);
                self.cursor = (pick + 1) % k;
                pick
            }
            SchedulerKind::Sjf => argmax(&live, |v| -v.exec_estimate),
            SchedulerKind::Ljf => argmax(&live, |v| v.exec_estimate),
            SchedulerKind::Tetris => argmax(&live, |v| {
                v.demand.iter().zip(&availability).map(|(d, a)| d * a).sum()
            }),
            SchedulerKind::Random => live[self.rng.random_range(0..live.len())].0,
            SchedulerKind::PlainA3c | SchedulerKind::Wa3c => unreachable!("rejected in Heuristic::new"),
        };
        Action::Slot(slot)
    }
}

/// Slot with the largest score; the first (lowest) slot wins ties.
fn argmax(live: &[(usize, &SlotView)], score: impl Fn(&SlotView) -> f64) -> usize {
    let mut best = live[0].0;
    let mut best_score = score(live[0].1);
    for (i, v) in &live[1..] {
        let s = score(v);
        if s > best_score {
            best = *i;
            best_score = s;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn slot(exec: f64, demand: [f64; 2]) -> Option<SlotView> {
        Some(SlotView {
            exec_estimate: exec,
            demand,
            priority: 0.5,
            enqueue_time: 0,
            fits: true,
        })
    }

    fn run(kind: SchedulerKind, queue: &[Option<SlotView>], avail: Resources) -> Action {
        Heuristic::new(kind, 0).unwrap().schedule(queue, avail)
    }

    #[test]
    fn sjf_and_ljf_examples() {
        let q = [slot(5.0, [0.2; 2]), slot(2.0, [0.2; 2]), slot(9.0, [0.2; 2])];
        assert_eq!(run(SchedulerKind::Sjf, &q, [1.0; 2]), Action::Slot(1));
        assert_eq!(run(SchedulerKind::Ljf, &q, [1.0; 2]), Action::Slot(2));
    }

    #[test]
    fn tetris_alignment_example() {
        let q = [slot(1.0, [0.1, 0.9]), slot(1.0, [0.9, 0.1])];
        assert_eq!(run(SchedulerKind::Tetris, &q, [1.0, 0.0]), Action::Slot(1));
    }

    #[test]
    fn empty_queue_is_noop() {
        for kind in SchedulerKind::HEURISTICS {
            assert_eq!(run(kind, &[None, None, None], [1.0; 2]), Action::NoOp);
            assert_eq!(run(kind, &[], [1.0; 2]), Action::NoOp);
        }
    }

    #[test]
    fn infeasible_slots_are_skipped() {
        let mut blocked = slot(1.0, [0.9; 2]);
        blocked.as_mut().unwrap().fits = false;
        let q = [blocked, None, slot(8.0, [0.1; 2])];
        for kind in SchedulerKind::HEURISTICS {
            assert_eq!(run(kind, &q, [0.5; 2]), Action::Slot(2));
        }
        assert_eq!(run(SchedulerKind::Sjf, &q[..2], [0.5; 2]), Action::NoOp);
    }

    #[test]
    fn ties_pick_lowest_slot() {
        let q = [None, slot(3.0, [0.2; 2]), slot(3.0, [0.2; 2])];
        for kind in [SchedulerKind::Sjf, SchedulerKind::Ljf, SchedulerKind::Tetris, SchedulerKind::RoundRobin] {
            assert_eq!(run(kind, &q, [1.0; 2]), Action::Slot(1));
        }
    }

    #[test]
    fn round_robin_cycles_evenly() {
        let q = [slot(1.0, [0.1; 2]), None, slot(2.0, [0.1; 2]), slot(3.0, [0.1; 2])];
        let mut h = Heuristic::new(SchedulerKind::RoundRobin, 0).unwrap();
        let mut counts = [0; 4];
        for _ in 0..3 * 5 {
            match h.schedule(&q, [1.0; 2]) {
                Action::Slot(i) => counts[i] += 1,
                Action::NoOp => panic!("no-op on a non-empty queue"),
            }
        }
        assert_eq!(counts, [5, 0, 5, 5]);
    }

    #[test]
    fn random_is_reproducible() {
        let q: Vec<_> = (0..6).map(|i| slot(i as f64, [0.1; 2])).collect();
        let mut a = Heuristic::new(SchedulerKind::Random, 7).unwrap();
        let mut b = Heuristic::new(SchedulerKind::Random, 7).unwrap();
        for _ in 0..50 {
            assert_eq!(a.schedule(&q, [1.0; 2]), b.schedule(&q, [1.0; 2]));
        }
    }

    #[test]
    fn kind_parsing() {
        for kind in SchedulerKind::ALL {
            assert_eq!(kind.name().parse::<SchedulerKind>().unwrap(), kind);
        }
        assert_eq!("RR".parse::<SchedulerKind>().unwrap(), SchedulerKind::RoundRobin);
        assert_eq!("plain_a3c".parse::<SchedulerKind>().unwrap(), SchedulerKind::PlainA3c);
        assert!("fifo".parse::<SchedulerKind>().unwrap_err().is_config());
        assert!(Heuristic::new(SchedulerKind::Wa3c, 0).is_err());
    }

    proptest! {
        #[test]
        fn sjf_never_longer_than_ljf(execs in prop::collection::vec(prop::option::of(0.5f64..500.0), 1..12)) {
            let q: Vec<_> = execs.iter().map(|e| e.and_then(|x| slot(x, [0.2; 2]))).collect();
            let s = run(SchedulerKind::Sjf, &q, [1.0; 2]);
            let l = run(SchedulerKind::Ljf, &q, [1.0; 2]);
            match (s, l) {
                (Action::Slot(a), Action::Slot(b)) => {
                    prop_assert!(q[a].unwrap().exec_estimate <= q[b].unwrap().exec_estimate);
                }
                (Action::NoOp, Action::NoOp) => prop_assert!(q.iter().all(Option::is_none)),
                _ => prop_assert!(false, "one picked a slot, the other did not"),
            }
        }

        #[test]
        fn never_selects_empty_slot(occ in prop::collection::vec(any::<bool>(), 1..12), seed in 0u64..50) {
            let q: Vec<_> = occ.iter().enumerate().map(|(i, o)| if *o { slot(i as f64 + 1.0, [0.3, 0.2]) } else { None }).collect();
            for kind in SchedulerKind::HEURISTICS {
                let mut h = Heuristic::new(kind, seed).unwrap();
                for _ in 0..5 {
                    if let Action::Slot(i) = h.schedule(&q, [0.6, 0.4]) {
                        prop_assert!(q[i].is_some());
                    }
                }
            }
        }
    }
}
