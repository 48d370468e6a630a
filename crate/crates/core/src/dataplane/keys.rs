use std::collections::HashMap;
use std::net::SocketAddrV4;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use aes_gcm::{Aes256Gcm, KeyInit};
use arc_swap::{ArcSwap, ArcSwapOption};
use parking_lot::Mutex;
use zeroize::Zeroize;

use super::replay::{ReplayVerdict, ReplayWindow};
use crate::make::{SessionBinding, SessionSecret};

/// Receive lanes tracked per key. Frames naming a higher lane are refused.
pub const MAX_LANES: usize = 64;

/// Default point at which a key asks to be replaced: 2^32 - 2^20.
pub const DEFAULT_REKEY_THRESHOLD: u64 = (1 << 32) - (1 << 20);

/// Counter space per (key, lane).
pub const COUNTER_LIMIT: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterGrant {
    /// Use this counter.
    Ok(u32),
    /// Use this counter; the key has just reached its rekey threshold.
    OkRekey(u32),
    Exhausted,
}

/// A session key as installed in the data plane.
pub struct SessionKeyEntry {
    pub peer: SocketAddrV4,
    pub epoch: u64,
    pub key_id: u32,
    pub binding: SessionBinding,
    pub created_at_ms: u64,
    send_prefix: [u8; 6],
    recv_prefix: [u8; 6],
    cipher: ArcSwapOption<Aes256Gcm>,
    key_bytes: Mutex<[u8; 32]>,
    send_counters: Box<[AtomicU64]>,
    recv_windows: Box<[Mutex<ReplayWindow>]>,
    rekey_threshold: u64,
    rekey_requested: AtomicBool,
    destroyed: AtomicBool,
}

impl std::fmt::Debug for SessionKeyEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionKeyEntry")
            .field("peer", &self.peer)
            .field("epoch", &self.epoch)
            .field("key_id", &format_args!("{:08x}", self.key_id))
            .field("destroyed", &self.is_destroyed())
            .finish_non_exhaustive()
    }
}

impl SessionKeyEntry {
    pub fn from_session(s: &SessionSecret, rekey_threshold: u64) -> Self {
        Self::new(
            s.peer,
            s.epoch,
            s.key_id(),
            *s.key(),
            s.send_prefix(),
            s.recv_prefix(),
            s.binding,
            s.established_at_ms,
            rekey_threshold,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        peer: SocketAddrV4,
        epoch: u64,
        key_id: u32,
        key: [u8; 32],
        send_prefix: [u8; 6],
        recv_prefix: [u8; 6],
        binding: SessionBinding,
        created_at_ms: u64,
        rekey_threshold: u64,
    ) -> Self {
        let cipher = Aes256Gcm::new_from_slice(&key).expect("32-byte key");
        Self {
            peer,
            epoch,
            key_id,
            binding,
            created_at_ms,
            send_prefix,
            recv_prefix,
            cipher: ArcSwapOption::from_pointee(cipher),
            key_bytes: Mutex::new(key),
            send_counters: (0..MAX_LANES).map(|_| AtomicU64::new(0)).collect(),
            recv_windows: (0..MAX_LANES).map(|_| Mutex::new(ReplayWindow::new())).collect(),
            rekey_threshold: rekey_threshold.min(COUNTER_LIMIT),
            rekey_requested: AtomicBool::new(false),
            destroyed: AtomicBool::new(false),
        }
    }

    pub fn send_prefix(&self) -> &[u8; 6] {
        &self.send_prefix
    }

    pub fn recv_prefix(&self) -> &[u8; 6] {
        &self.recv_prefix
    }

    pub fn cipher(&self) -> Option<Arc<Aes256Gcm>> {
        self.cipher.load_full()
    }

    /// Reserves the next send counter on `lane`.
    #[inline]
    pub fn next_counter(&self, lane: u16) -> CounterGrant {
        let c = self.send_counters[lane as usize].fetch_add(1, Ordering::Relaxed);
        if c >= COUNTER_LIMIT {
            self.send_counters[lane as usize].store(COUNTER_LIMIT, Ordering::Relaxed);
            return CounterGrant::Exhausted;
        }
        if c + 1 >= self.rekey_threshold && !self.rekey_requested.swap(true, Ordering::AcqRel) {
            return CounterGrant::OkRekey(c as u32);
        }
        CounterGrant::Ok(c as u32)
    }

    /// Positions `lane`'s counter, for tests that start near a boundary.
    #[doc(hidden)]
    pub fn set_counter(&self, lane: u16, next: u64) {
        self.send_counters[lane as usize].store(next, Ordering::Relaxed);
    }

    pub fn rekey_requested(&self) -> bool {
        self.rekey_requested.load(Ordering::Acquire)
    }

    pub fn replay_check(&self, lane: u16, counter: u32) -> ReplayVerdict {
        self.recv_windows[lane as usize].lock().check(counter as u64)
    }

    pub fn replay_accept(&self, lane: u16, counter: u32) -> ReplayVerdict {
        self.recv_windows[lane as usize].lock().accept(counter as u64)
    }

    /// Drops the cipher and zeroes the key bytes. Returns true the first
    /// time only.
    pub fn destroy(&self) -> bool {
        if self.destroyed.swap(true, Ordering::AcqRel) {
            return false;
        }
        self.cipher.store(None);
        self.key_bytes.lock().zeroize();
        true
    }

    pub fn is_destroyed(&self) -> bool {
        self.destroyed.load(Ordering::Acquire)
    }

    #[doc(hidden)]
    pub fn inspect_key_bytes(&self) -> [u8; 32] {
        *self.key_bytes.lock()
    }
}

impl Drop for SessionKeyEntry {
    fn drop(&mut self) {
        self.key_bytes.get_mut().zeroize();
    }
}

/// The keys for one flow in one epoch: the active key and, after a
/// rekey, the one it replaced.
#[derive(Debug, Clone)]
pub struct FlowSlot {
    pub current: Arc<SessionKeyEntry>,
    pub previous: Option<Arc<SessionKeyEntry>>,
}

impl FlowSlot {
    pub fn by_key_id(&self, key_id: u32) -> Option<&Arc<SessionKeyEntry>> {
        if self.current.key_id == key_id {
            return Some(&self.current);
        }
        self.previous.as_ref().filter(|p| p.key_id == key_id)
    }
}

type FlowMap = HashMap<(SocketAddrV4, u64), FlowSlot>;

/// Session keys by `(peer, epoch)`. Readers load a snapshot without
/// locking; writers copy, modify and publish under a writer lock.
pub struct FlowKeyTable {
    map: ArcSwap<FlowMap>,
    write: Mutex<()>,
    flushed_through: AtomicU64,
    flushed_any: AtomicBool,
}

impl Default for FlowKeyTable {
    fn default() -> Self {
        Self::new()
    }
}

impl FlowKeyTable {
    pub fn new() -> Self {
        Self {
            map: ArcSwap::from_pointee(HashMap::new()),
            write: Mutex::new(()),
            flushed_through: AtomicU64::new(0),
            flushed_any: AtomicBool::new(false),
        }
    }

    #[inline]
    pub fn get(&self, peer: &SocketAddrV4, epoch: u64) -> Option<FlowSlot> {
        self.map.load().get(&(*peer, epoch)).cloned()
    }

    #[inline]
    pub fn current(&self, peer: &SocketAddrV4, epoch: u64) -> Option<Arc<SessionKeyEntry>> {
        self.map.load().get(&(*peer, epoch)).map(|s| s.current.clone())
    }

    pub fn len(&self) -> usize {
        self.map.load().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All installed entries, current and previous.
    pub fn entries(&self) -> Vec<Arc<SessionKeyEntry>> {
        self.map
            .load()
            .values()
            .flat_map(|s| std::iter::once(s.current.clone()).chain(s.previous.clone()))
            .collect()
    }

    /// Every live entry for `peer`, any epoch.
    pub fn entries_for_peer(&self, peer: &SocketAddrV4) -> Vec<Arc<SessionKeyEntry>> {
        self.map
            .load()
            .iter()
            .filter(|((p, _), _)| p == peer)
            .flat_map(|(_, s)| std::iter::once(s.current.clone()).chain(s.previous.clone()))
            .collect()
    }

    /// Installs `entry` as the active key for its flow. Returns the entry it
    /// superseded, if any; a key superseded earlier is evicted from the slot
    /// and returned as the second element.
    pub fn install(
        &self,
        entry: Arc<SessionKeyEntry>,
    ) -> (Option<Arc<SessionKeyEntry>>, Option<Arc<SessionKeyEntry>>) {
        let _w = self.write.lock();
        let mut next: FlowMap = (**self.map.load()).clone();
        let key = (entry.peer, entry.epoch);
        let (superseded, evicted) = match next.remove(&key) {
            Some(old) => (Some(old.current), old.previous),
            None => (None, None),
        };
        next.insert(
            key,
            FlowSlot {
                current: entry,
                previous: superseded.clone(),
            },
        );
        self.map.store(Arc::new(next));
        (superseded, evicted)
    }

    /// Unpublishes `entry` wherever it sits.
    pub fn remove_entry(&self, entry: &Arc<SessionKeyEntry>) -> bool {
        let _w = self.write.lock();
        let key = (entry.peer, entry.epoch);
        let Some(slot) = self.map.load().get(&key).cloned() else { return false };
        let mut next: FlowMap = (**self.map.load()).clone();
        if Arc::ptr_eq(&slot.current, entry) {
            next.remove(&key);
        } else if slot.previous.as_ref().is_some_and(|p| Arc::ptr_eq(p, entry)) {
            next.insert(
                key,
                FlowSlot {
                    current: slot.current,
                    previous: None,
                },
            );
        } else {
            return false;
        }
        self.map.store(Arc::new(next));
        true
    }

    /// Unpublishes every entry under `epoch` and returns them.
    pub fn remove_epoch(&self, epoch: u64) -> Vec<Arc<SessionKeyEntry>> {
        let _w = self.write.lock();
        let mut next: FlowMap = (**self.map.load()).clone();
        let mut out = Vec::new();
        next.retain(|(_, e), slot| {
            if *e == epoch {
                out.push(slot.current.clone());
                out.extend(slot.previous.clone());
                false
            } else {
                true
            }
        });
        self.map.store(Arc::new(next));
        out
    }

    /// Drops every flow towards `peer` in `epoch` (peer restart).
    pub fn remove_flow(&self, peer: &SocketAddrV4, epoch: u64) -> Vec<Arc<SessionKeyEntry>> {
        let _w = self.write.lock();
        let mut next: FlowMap = (**self.map.load()).clone();
        let out = match next.remove(&(*peer, epoch)) {
            Some(slot) => std::iter::once(slot.current).chain(slot.previous).collect(),
            None => Vec::new(),
        };
        self.map.store(Arc::new(next));
        out
    }

    /// Records that all epochs up to `epoch` have been flushed.
    pub fn mark_flushed_through(&self, epoch: u64) {
        self.flushed_through.fetch_max(epoch, Ordering::AcqRel);
        self.flushed_any.store(true, Ordering::Release);
    }

    pub fn is_flushed(&self, epoch: u64) -> bool {
        self.flushed_any.load(Ordering::Acquire) && epoch <= self.flushed_through.load(Ordering::Acquire)
    }
}
