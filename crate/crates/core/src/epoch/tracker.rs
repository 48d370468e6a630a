use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

/// Per-lane sequence counters. Each data-plane worker bumps its lane at
/// every packet-processing boundary; a grace period is over once every
/// lane has moved past the value it had when the grace period began.
#[derive(Debug)]
pub struct QuiescenceTracker {
    counters: Box<[AtomicU64]>,
    parked: Box<[AtomicBool]>,
    unregistered: AtomicU64,
}

/// Lane counters at one instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuiescenceSnapshot(Vec<u64>);

impl QuiescenceSnapshot {
    pub fn counters(&self) -> &[u64] {
        &self.0
    }
}

impl QuiescenceTracker {
    pub fn new(lanes: u16) -> Self {
        Self {
            counters: (0..lanes).map(|_| AtomicU64::new(0)).collect(),
            parked: (0..lanes).map(|_| AtomicBool::new(false)).collect(),
            unregistered: AtomicU64::new(0),
        }
    }

    pub fn lanes(&self) -> u16 {
        self.counters.len() as u16
    }

    #[inline]
    pub fn observe(&self, lane: u16) {
        match self.counters.get(lane as usize) {
            Some(c) => {
                c.fetch_add(1, Ordering::Release);
            }
            None => {
                self.unregistered.fetch_add(1, Ordering::Relaxed);
            }
        }
    }

    /// An idle lane holds no references and does not block grace.
    pub fn park(&self, lane: u16) {
        if let Some(p) = self.parked.get(lane as usize) {
            p.store(true, Ordering::Release);
        }
    }

    pub fn unpark(&self, lane: u16) {
        if let Some(p) = self.parked.get(lane as usize) {
            p.store(false, Ordering::Release);
        }
    }

    pub fn is_parked(&self, lane: u16) -> bool {
        self.parked.get(lane as usize).is_some_and(|p| p.load(Ordering::Acquire))
    }

    pub fn counter(&self, lane: u16) -> Option<u64> {
        self.counters.get(lane as usize).map(|c| c.load(Ordering::Acquire))
    }

    pub fn unregistered_observations(&self) -> u64 {
        self.unregistered.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> QuiescenceSnapshot {
        QuiescenceSnapshot(self.counters.iter().map(|c| c.load(Ordering::Acquire)).collect())
    }

    /// True once every lane has advanced beyond `snap` or is parked.
    pub fn passed(&self, snap: &QuiescenceSnapshot) -> bool {
        self.counters
            .iter()
            .zip(&*self.parked)
            .zip(&snap.0)
            .all(|((c, p), &s)| p.load(Ordering::Acquire) || c.load(Ordering::Acquire) > s)
    }

    /// Lanes still holding up `snap`.
    pub fn laggards(&self, snap: &QuiescenceSnapshot) -> Vec<u16> {
        (0..self.lanes())
            .filter(|&l| !self.is_parked(l) && self.counters[l as usize].load(Ordering::Acquire) <= snap.0[l as usize])
            .collect()
    }
}
