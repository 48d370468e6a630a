use std::net::SocketAddrV4;
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::clock::SimClock;
use crate::dataplane::{FlowKeyTable, SessionKeyEntry, DEFAULT_REKEY_THRESHOLD};
use crate::make::SessionBinding;
use crate::Digest48;

fn entry(peer: u8, epoch: u64, key_id: u32) -> Arc<SessionKeyEntry> {
    let z = Digest48::ZERO;
    Arc::new(SessionKeyEntry::new(
        SocketAddrV4::new([10, 0, 0, peer].into(), 7000),
        epoch,
        key_id,
        [key_id as u8 | 0x40; 32],
        [0; 6],
        [0x80, 0, 0, 0, 0, 0],
        SessionBinding {
            initiator_measurement: z,
            responder_measurement: z,
            initiator_policy_digest: z,
            responder_policy_digest: z,
        },
        0,
        DEFAULT_REKEY_THRESHOLD,
    ))
}

struct Rig {
    clock: Arc<SimClock>,
    keys: Arc<FlowKeyTable>,
    tracker: Arc<QuiescenceTracker>,
    life: EpochLifecycle,
}

fn rig(lanes: u16, cfg: EpochConfig) -> Rig {
    let clock = SimClock::new(10_000);
    let keys = Arc::new(FlowKeyTable::new());
    let tracker = Arc::new(QuiescenceTracker::new(lanes));
    let life = EpochLifecycle::new(1, keys.clone(), tracker.clone(), clock.clone(), cfg);
    Rig {
        clock,
        keys,
        tracker,
        life,
    }
}

impl Rig {
    fn tick_all(&self) {
        for l in 0..self.tracker.lanes() {
            self.tracker.observe(l);
        }
    }
}

#[test]
fn empty_rollover_completes_at_first_quiescence() {
    let r = rig(2, EpochConfig::default());
    assert!(r.life.begin_rollover(2).unwrap().is_empty());
    assert_eq!(r.life.active_epoch(), 2);
    assert!(r.life.poll(None).is_none());
    r.tick_all();
    let rep = r.life.poll(None).unwrap();
    assert_eq!((rep.epoch, rep.destroyed, rep.cause), (Some(1), 0, FlushCause::Drained));
    assert_eq!(r.life.previous(), PreviousEpoch::Flushed { epoch: 1 });
    assert!(r.keys.is_flushed(1) && !r.keys.is_flushed(2));
}

#[test]
fn rollover_must_advance() {
    let r = rig(1, EpochConfig::default());
    assert_eq!(r.life.begin_rollover(1), Err(EpochError::NotNewer { active: 1, new: 1 }));
    assert_eq!(r.life.begin_rollover(0), Err(EpochError::NotNewer { active: 1, new: 0 }));
}

#[test]
fn grace_waits_for_drain_then_zeroizes() {
    let r = rig(2, EpochConfig::default());
    let old: Vec<_> = (1..=3).map(|p| entry(p, 1, p as u32)).collect();
    for e in &old {
        r.keys.install(e.clone());
    }
    r.life.begin_rollover(2).unwrap();
    assert_eq!(r.life.deferred_len(), 3);
    match r.life.previous() {
        PreviousEpoch::Grace {
            epoch,
            draining_flows,
            deadline_ms,
            ..
        } => assert_eq!((epoch, draining_flows, deadline_ms), (1, 3, Some(10_500))),
        other => panic!("{other:?}"),
    }
    let fresh = entry(1, 2, 9);
    r.keys.install(fresh.clone());
    r.tick_all();
    r.clock.advance(40);
    // a grace-epoch frame arrived just now
    assert!(r.life.poll(Some(10_040)).is_none());
    r.clock.advance(49);
    assert!(r.life.poll(Some(10_040)).is_none());
    assert_eq!(r.keys.len(), 4);
    r.clock.advance(1);
    let rep = r.life.poll(Some(10_040)).unwrap();
    assert_eq!((rep.destroyed, rep.cause), (3, FlushCause::Drained));
    for e in &old {
        assert!(e.is_destroyed());
        assert_eq!(e.inspect_key_bytes(), [0; 32]);
    }
    assert!(!fresh.is_destroyed());
    assert_eq!(r.keys.len(), 1);
    assert_eq!(r.life.flush_stale(), 0);
    assert_eq!(r.life.stats().grace_completions, 1);
}

#[test]
fn stalled_lane_holds_grace_until_deadline() {
    let r = rig(3, EpochConfig::default());
    r.keys.install(entry(1, 1, 1));
    r.life.begin_rollover(2).unwrap();
    for _ in 0..49 {
        r.tracker.observe(0);
        r.tracker.observe(1);
        r.clock.advance(10);
        assert!(r.life.poll(None).is_none());
    }
    r.clock.advance(10);
    let rep = r.life.poll(None).unwrap();
    assert_eq!((rep.destroyed, rep.cause), (1, FlushCause::Deadline));
    assert_eq!(r.life.stats().deadline_flushes, 1);
}

#[test]
fn stalled_lane_without_cap_hits_queue_bound() {
    let cfg = EpochConfig {
        grace_cap_ms: None,
        ..EpochConfig::default()
    };
    let r = rig(2, cfg);
    let stale = entry(1, 1, 1);
    r.keys.install(stale.clone());
    r.life.begin_rollover(2).unwrap();
    let active = entry(2, 2, 100);
    r.keys.install(active.clone());
    let mut forced = None;
    for i in 0..2000u32 {
        r.tracker.observe(0);
        r.clock.advance(1);
        assert!(r.life.poll(None).is_none());
        if let Some(rep) = r.life.retire(entry(3, 2, 1000 + i)) {
            forced = Some((i, rep));
            break;
        }
        assert!(r.life.deferred_len() < DEFAULT_QUEUE_CAPACITY);
    }
    let (i, rep) = forced.expect("queue bound reached");
    // one grace entry plus 1023 retired keys
    assert_eq!(i, 1022);
    assert_eq!((rep.cause, rep.destroyed, rep.epoch), (FlushCause::QueueBound, 1024, Some(1)));
    assert!(stale.is_destroyed());
    assert!(!active.is_destroyed());
    assert!(r.keys.current(&active.peer, 2).is_some());
    assert_eq!(r.life.deferred_len(), 0);
    let st = r.life.stats();
    assert_eq!(st.forced_resets, 1);
    assert_eq!((st.peak_deferred, st.last_forced_depth), (1024, Some(1024)));
}

#[test]
fn double_rollover_flushes_first() {
    let r = rig(1, EpochConfig::default());
    let n = entry(1, 1, 1);
    r.keys.install(n.clone());
    r.life.begin_rollover(2).unwrap();
    let n1 = entry(1, 2, 2);
    r.keys.install(n1.clone());
    let reps = r.life.begin_rollover(3).unwrap();
    assert_eq!(reps.len(), 1);
    assert_eq!((reps[0].epoch, reps[0].cause, reps[0].destroyed), (Some(1), FlushCause::DoubleRollover, 1));
    assert!(n.is_destroyed() && !n1.is_destroyed());
    assert!(r.keys.is_flushed(1) && !r.keys.is_flushed(2));
    match r.life.previous() {
        PreviousEpoch::Grace { epoch, .. } => assert_eq!(epoch, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn rekey_retirement_waits_for_every_lane() {
    let r = rig(2, EpochConfig::default());
    let a = entry(1, 1, 1);
    r.keys.install(a.clone());
    r.keys.install(entry(1, 1, 2));
    let (_, evicted) = r.keys.install(entry(1, 1, 3));
    assert!(Arc::ptr_eq(evicted.as_ref().unwrap(), &a));
    assert!(r.life.retire(a.clone()).is_none());
    r.tracker.observe(0);
    r.life.poll(None);
    assert!(!a.is_destroyed());
    r.tracker.observe(1);
    r.life.poll(None);
    assert!(a.is_destroyed());
    assert_eq!(r.life.stats().reclaimed_total, 1);
    assert_eq!(r.life.deferred_len(), 0);
}

#[test]
fn parked_lane_does_not_stall_grace() {
    let r = rig(2, EpochConfig::default());
    r.life.begin_rollover(2).unwrap();
    r.tracker.observe(0);
    r.tracker.park(1);
    assert_eq!(r.life.poll(None).unwrap().cause, FlushCause::Drained);
}

#[derive(Debug, Clone)]
enum Op {
    Install(u8),
    Rollover,
    Observe(u16),
    Park(u16),
    Advance(u64),
    Poll,
    Flush,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (1u8..6).prop_map(Op::Install),
        Just(Op::Rollover),
        (0u16..4).prop_map(Op::Observe),
        (0u16..4).prop_map(Op::Park),
        (1u64..200).prop_map(Op::Advance),
        Just(Op::Poll),
        Just(Op::Flush),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// No schedule leaves more than two epochs with live keys, lets a
    /// flushed epoch keep key material, or grows the queue past its bound.
    #[test]
    fn lifecycle_invariants(ops in proptest::collection::vec(op(), 1..200), cap in prop::option::of(100u64..600)) {
        let cfg = EpochConfig { grace_cap_ms: cap, drain_quiet_ms: 50, queue_capacity: 16 };
        let r = rig(3, cfg);
        let mut all = Vec::new();
        let mut next_id = 1u32;
        for op in ops {
            match op {
                Op::Install(p) => {
                    let e = entry(p, r.life.active_epoch(), next_id);
                    next_id += 1;
                    all.push(e.clone());
                    if let (_, Some(evicted)) = r.keys.install(e) {
                        r.life.retire(evicted);
                    }
                }
                Op::Rollover => {
                    let next = r.life.active_epoch() + 1;
                    r.life.begin_rollover(next).unwrap();
                }
                Op::Observe(l) => r.tracker.observe(l),
                Op::Park(l) => r.tracker.park(l),
                Op::Advance(ms) => { r.clock.advance(ms); }
                Op::Poll => { r.life.poll(None); }
                Op::Flush => { r.life.flush_stale(); }
            }
            prop_assert!(r.life.deferred_len() < 16);
            let active = r.life.active_epoch();
            let live: std::collections::BTreeSet<u64> = all.iter().filter(|e| !e.is_destroyed()).map(|e| e.epoch).collect();
            prop_assert!(live.iter().all(|&e| e + 1 >= active), "live epochs {live:?} at {active}");
            for e in &all {
                if r.keys.is_flushed(e.epoch) {
                    prop_assert!(e.is_destroyed());
                    prop_assert_eq!(e.inspect_key_bytes(), [0u8; 32]);
                }
            }
        }
    }
}
