use std::collections::{BTreeSet, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::tracker::{QuiescenceSnapshot, QuiescenceTracker};
use crate::clock::Clock;
use crate::dataplane::{FlowKeyTable, SessionKeyEntry};

pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;
pub const DEFAULT_GRACE_CAP_MS: u64 = 500;
pub const DEFAULT_DRAIN_QUIET_MS: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochConfig {
    /// Wall-clock bound on a grace period. `None` leaves only quiescence
    /// and the queue bound.
    pub grace_cap_ms: Option<u64>,
    /// A grace epoch is drained once no frame under it has arrived for
    /// this long.
    pub drain_quiet_ms: u64,
    pub queue_capacity: usize,
}

impl Default for EpochConfig {
    fn default() -> Self {
        Self {
            grace_cap_ms: Some(DEFAULT_GRACE_CAP_MS),
            drain_quiet_ms: DEFAULT_DRAIN_QUIET_MS,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PreviousEpoch {
    None,
    Grace {
        epoch: u64,
        started_ms: u64,
        deadline_ms: Option<u64>,
        draining_flows: usize,
    },
    Flushed {
        epoch: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum EpochError {
    #[error("epoch {new} does not advance past active epoch {active}")]
    NotNewer { active: u64, new: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlushCause {
    Drained,
    Deadline,
    DoubleRollover,
    QueueBound,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlushReport {
    /// The grace epoch that was closed, if one was pending.
    pub epoch: Option<u64>,
    pub destroyed: usize,
    pub cause: FlushCause,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochStats {
    pub active_epoch: u64,
    pub previous: PreviousEpoch,
    pub deferred: usize,
    pub destroyed_total: u64,
    pub reclaimed_total: u64,
    pub grace_completions: u64,
    pub deadline_flushes: u64,
    pub forced_resets: u64,
    /// Largest deferred-queue depth seen.
    pub peak_deferred: usize,
    /// Queue depth that triggered the latest forced reset.
    pub last_forced_depth: Option<usize>,
    pub unregistered_lane_observations: u64,
}

struct Retired {
    entry: Arc<SessionKeyEntry>,
    snapshot: QuiescenceSnapshot,
}

struct State {
    previous: PreviousEpoch,
    grace_snapshot: Option<QuiescenceSnapshot>,
    deferred: VecDeque<Retired>,
    destroyed_total: u64,
    reclaimed_total: u64,
    grace_completions: u64,
    deadline_flushes: u64,
    forced_resets: u64,
    peak_deferred: usize,
    last_forced_depth: Option<usize>,
}

/// Per-node key lifecycle: provisioned, grace, flushed.
///
/// The coordinator (control loop) calls `begin_rollover`, `retire` and
/// `poll`; data-plane lanes only touch the shared [`QuiescenceTracker`]
/// and the lock-free key table.
pub struct EpochLifecycle {
    keys: Arc<FlowKeyTable>,
    tracker: Arc<QuiescenceTracker>,
    clock: Arc<dyn Clock>,
    cfg: EpochConfig,
    active: AtomicU64,
    state: Mutex<State>,
}

impl EpochLifecycle {
    pub fn new(
        active_epoch: u64,
        keys: Arc<FlowKeyTable>,
        tracker: Arc<QuiescenceTracker>,
        clock: Arc<dyn Clock>,
        cfg: EpochConfig,
    ) -> Self {
        Self {
            keys,
            tracker,
            clock,
            cfg,
            active: AtomicU64::new(active_epoch),
            state: Mutex::new(State {
                previous: PreviousEpoch::None,
                grace_snapshot: None,
                deferred: VecDeque::new(),
                destroyed_total: 0,
                reclaimed_total: 0,
                grace_completions: 0,
                deadline_flushes: 0,
                forced_resets: 0,
                peak_deferred: 0,
                last_forced_depth: None,
            }),
        }
    }

    pub fn config(&self) -> &EpochConfig {
        &self.cfg
    }

    pub fn tracker(&self) -> &Arc<QuiescenceTracker> {
        &self.tracker
    }

    pub fn active_epoch(&self) -> u64 {
        self.active.load(Ordering::Acquire)
    }

    pub fn previous(&self) -> PreviousEpoch {
        self.state.lock().previous.clone()
    }

    pub fn deferred_len(&self) -> usize {
        self.state.lock().deferred.len()
    }

    pub fn stats(&self) -> EpochStats {
        let st = self.state.lock();
        EpochStats {
            active_epoch: self.active_epoch(),
            previous: st.previous.clone(),
            deferred: st.deferred.len(),
            destroyed_total: st.destroyed_total,
            reclaimed_total: st.reclaimed_total,
            grace_completions: st.grace_completions,
            deadline_flushes: st.deadline_flushes,
            forced_resets: st.forced_resets,
            peak_deferred: st.peak_deferred,
            last_forced_depth: st.last_forced_depth,
            unregistered_lane_observations: self.tracker.unregistered_observations(),
        }
    }

    /// Makes `new_epoch` active and moves the old epoch into grace. A
    /// grace period still pending is flushed first; its report is
    /// returned, along with any flush forced by the queue bound.
    pub fn begin_rollover(&self, new_epoch: u64) -> Result<Vec<FlushReport>, EpochError> {
        let mut st = self.state.lock();
        let old = self.active_epoch();
        if new_epoch <= old {
            return Err(EpochError::NotNewer { active: old, new: new_epoch });
        }
        let mut reports = Vec::new();
        if matches!(st.previous, PreviousEpoch::Grace { .. }) {
            reports.push(self.flush_locked(&mut st, FlushCause::DoubleRollover));
        }
        let now = self.clock.now_ms();
        let snapshot = self.tracker.snapshot();
        let old_entries: Vec<_> = self.keys.entries().into_iter().filter(|e| e.epoch == old).collect();
        let flows: BTreeSet<_> = old_entries.iter().map(|e| e.peer).collect();
        st.previous = PreviousEpoch::Grace {
            epoch: old,
            started_ms: now,
            deadline_ms: self.cfg.grace_cap_ms.map(|c| now + c),
            draining_flows: flows.len(),
        };
        st.grace_snapshot = Some(snapshot.clone());
        self.active.store(new_epoch, Ordering::Release);
        for entry in old_entries {
            if entry.is_destroyed() {
                continue;
            }
            st.deferred.push_back(Retired {
                entry,
                snapshot: snapshot.clone(),
            });
            if let Some(r) = self.check_bound(&mut st) {
                reports.push(r);
            }
        }
        log::info!("epoch {old} -> {new_epoch}: {} flows in grace", flows.len());
        Ok(reports)
    }

    /// Queues a key that has left the table (a rekey evicted it) for
    /// destruction once every lane has moved on.
    pub fn retire(&self, entry: Arc<SessionKeyEntry>) -> Option<FlushReport> {
        let mut st = self.state.lock();
        st.deferred.push_back(Retired {
            entry,
            snapshot: self.tracker.snapshot(),
        });
        self.check_bound(&mut st)
    }

    /// One coordinator tick. Reclaims retired keys that every lane has
    /// moved past, and closes the grace period once lanes are quiescent
    /// and the grace epoch has drained, or its deadline has passed.
    /// `last_grace_frame_ms` is the data plane's most recent accept under
    /// a non-active epoch.
    pub fn poll(&self, last_grace_frame_ms: Option<u64>) -> Option<FlushReport> {
        let mut st = self.state.lock();
        let grace_epoch = match st.previous {
            PreviousEpoch::Grace { epoch, .. } => Some(epoch),
            _ => None,
        };
        let mut reclaimed = 0;
        let keys = &self.keys;
        let tracker = &self.tracker;
        st.deferred.retain(|r| {
            if Some(r.entry.epoch) == grace_epoch || !tracker.passed(&r.snapshot) {
                return true;
            }
            keys.remove_entry(&r.entry);
            reclaimed += r.entry.destroy() as u64;
            false
        });
        st.reclaimed_total += reclaimed;
        st.destroyed_total += reclaimed;

        let PreviousEpoch::Grace {
            started_ms,
            deadline_ms,
            draining_flows,
            ..
        } = st.previous
        else {
            return None;
        };
        let now = self.clock.now_ms();
        let quiescent = st.grace_snapshot.as_ref().is_none_or(|s| self.tracker.passed(s));
        let last_frame = last_grace_frame_ms.unwrap_or(0).max(started_ms);
        let drained = draining_flows == 0 || now.saturating_sub(last_frame) >= self.cfg.drain_quiet_ms;
        if quiescent && drained {
            st.grace_completions += 1;
            return Some(self.flush_locked(&mut st, FlushCause::Drained));
        }
        if deadline_ms.is_some_and(|d| now >= d) {
            st.deadline_flushes += 1;
            log::warn!(
                "grace deadline reached (quiescent={quiescent}, drained={drained}, laggards={:?})",
                st.grace_snapshot.as_ref().map(|s| self.tracker.laggards(s))
            );
            return Some(self.flush_locked(&mut st, FlushCause::Deadline));
        }
        None
    }

    /// Destroys every retired key and every key from an epoch older than
    /// the active one. Returns how many keys were destroyed.
    pub fn flush_stale(&self) -> usize {
        let mut st = self.state.lock();
        self.flush_locked(&mut st, FlushCause::Manual).destroyed
    }

    fn check_bound(&self, st: &mut State) -> Option<FlushReport> {
        st.peak_deferred = st.peak_deferred.max(st.deferred.len());
        if st.deferred.len() < self.cfg.queue_capacity {
            return None;
        }
        st.forced_resets += 1;
        st.last_forced_depth = Some(st.deferred.len());
        log::warn!("deferred queue reached {}; resetting stale sessions", st.deferred.len());
        Some(self.flush_locked(st, FlushCause::QueueBound))
    }

    fn flush_locked(&self, st: &mut State, cause: FlushCause) -> FlushReport {
        let active = self.active_epoch();
        let mut destroyed = 0;
        for r in st.deferred.drain(..) {
            self.keys.remove_entry(&r.entry);
            destroyed += r.entry.destroy() as usize;
        }
        let stale: BTreeSet<u64> = self.keys.entries().iter().map(|e| e.epoch).filter(|&e| e < active).collect();
        for epoch in stale {
            for e in self.keys.remove_epoch(epoch) {
                destroyed += e.destroy() as usize;
            }
        }
        let epoch = match st.previous {
            PreviousEpoch::Grace { epoch, .. } => Some(epoch),
            _ => None,
        };
        if let Some(e) = epoch {
            self.keys.mark_flushed_through(e);
            st.previous = PreviousEpoch::Flushed { epoch: e };
        }
        st.grace_snapshot = None;
        st.destroyed_total += destroyed as u64;
        if destroyed > 0 || epoch.is_some() {
            log::info!("flushed epoch {epoch:?}: {destroyed} keys destroyed ({cause:?})");
        }
        FlushReport { epoch, destroyed, cause }
    }
}
