use std::net::SocketAddrV4;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use aes_gcm::aead::AeadInPlace;
use aes_gcm::{Nonce, Tag};

use super::costs::{CostRecorder, CostSummary, PacketCost};
use super::frame::{compose_nonce, inner_budget, FrameHeader, DEFAULT_MTU, FRAME_MAGIC, HEADER_LEN, TAG_LEN};
use super::keys::{CounterGrant, FlowKeyTable, SessionKeyEntry, DEFAULT_REKEY_THRESHOLD, MAX_LANES};
use super::replay::ReplayVerdict;
use crate::clock::Clock;
use crate::policy::{FlowDecision, PolicyStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataPlaneConfig {
    pub mtu: usize,
    pub lanes: u16,
    pub rekey_threshold: u64,
}

impl Default for DataPlaneConfig {
    fn default() -> Self {
        Self {
            mtu: DEFAULT_MTU,
            lanes: 1,
            rekey_threshold: DEFAULT_REKEY_THRESHOLD,
        }
    }
}

impl DataPlaneConfig {
    pub fn inner_budget(&self) -> usize {
        inner_budget(self.mtu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SealError {
    #[error("destination not authorized")]
    Deny,
    #[error("no session key yet for {peer} in epoch {epoch}")]
    KeyPending { peer: SocketAddrV4, epoch: u64 },
    #[error("inner datagram of {len} bytes exceeds budget {budget}")]
    TooLarge { len: usize, budget: usize },
    #[error("empty inner datagram")]
    Empty,
    #[error("nonce counter exhausted")]
    CounterExhausted,
    #[error("lane out of range")]
    BadLane,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum OpenError {
    #[error("malformed frame")]
    Malformed,
    #[error("authentication failed")]
    AuthFailed,
    #[error("unknown key")]
    UnknownKey,
    #[error("epoch already flushed")]
    EpochTooOld,
    #[error("replayed frame")]
    ReplayDetected,
}

#[derive(Debug, Clone)]
pub struct Sealed {
    pub frame: Vec<u8>,
    /// The key reached its rekey threshold with this packet.
    pub rekey: bool,
    pub key_id: u32,
    pub nonce: [u8; 12],
}

/// Per-packet enforcement: policy lookup, key selection, AEAD.
pub struct DataPlane {
    policy: Arc<PolicyStore>,
    keys: Arc<FlowKeyTable>,
    cfg: DataPlaneConfig,
    clock: Arc<dyn Clock>,
    costs: CostRecorder,
    last_grace_frame_ms: AtomicU64,
    grace_frames: AtomicU64,
}

impl DataPlane {
    pub fn new(policy: Arc<PolicyStore>, keys: Arc<FlowKeyTable>, cfg: DataPlaneConfig, clock: Arc<dyn Clock>) -> Self {
        Self {
            policy,
            keys,
            cfg,
            clock,
            costs: CostRecorder::default(),
            last_grace_frame_ms: AtomicU64::new(0),
            grace_frames: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &DataPlaneConfig {
        &self.cfg
    }

    pub fn keys(&self) -> &Arc<FlowKeyTable> {
        &self.keys
    }

    pub fn policy(&self) -> &Arc<PolicyStore> {
        &self.policy
    }

    pub fn costs(&self) -> CostSummary {
        self.costs.summary()
    }

    /// Time of the latest frame accepted under a non-active epoch.
    pub fn last_grace_frame_ms(&self) -> Option<u64> {
        (self.grace_frames.load(Ordering::Acquire) > 0).then(|| self.last_grace_frame_ms.load(Ordering::Acquire))
    }

    pub fn grace_frames(&self) -> u64 {
        self.grace_frames.load(Ordering::Acquire)
    }

    pub fn seal(&self, dest: &SocketAddrV4, inner: &[u8], lane: u16) -> Result<Sealed, SealError> {
        let t0 = Instant::now();
        if lane as usize >= MAX_LANES {
            return Err(SealError::BadLane);
        }
        if inner.is_empty() {
            return Err(SealError::Empty);
        }
        let budget = self.cfg.inner_budget();
        if inner.len() > budget {
            return Err(SealError::TooLarge { len: inner.len(), budget });
        }
        let index = self.policy.load();
        if let FlowDecision::Deny = index.lookup(dest) {
            return Err(SealError::Deny);
        }
        let epoch = index.epoch();
        let entry = self
            .keys
            .current(dest, epoch)
            .ok_or(SealError::KeyPending { peer: *dest, epoch })?;
        let t1 = Instant::now();
        self.seal_with(&entry, inner, lane, t0, t1)
    }

    /// Seals under a specific key, bypassing policy and key lookup.
    pub fn seal_with_entry(&self, entry: &SessionKeyEntry, inner: &[u8], lane: u16) -> Result<Sealed, SealError> {
        let t = Instant::now();
        self.seal_with(entry, inner, lane, t, t)
    }

    fn seal_with(
        &self,
        entry: &SessionKeyEntry,
        inner: &[u8],
        lane: u16,
        t0: Instant,
        t1: Instant,
    ) -> Result<Sealed, SealError> {
        let cipher = entry.cipher().ok_or(SealError::KeyPending {
            peer: entry.peer,
            epoch: entry.epoch,
        })?;
        let (counter, rekey) = match entry.next_counter(lane) {
            CounterGrant::Ok(c) => (c, false),
            CounterGrant::OkRekey(c) => (c, true),
            CounterGrant::Exhausted => return Err(SealError::CounterExhausted),
        };
        let header = FrameHeader {
            epoch: entry.epoch,
            key_id: entry.key_id,
            lane,
            counter,
            inner_len: inner.len() as u16,
        }
        .encode();
        let nonce = compose_nonce(lane, entry.send_prefix(), counter);
        let mut frame = Vec::with_capacity(HEADER_LEN + inner.len() + TAG_LEN);
        frame.extend_from_slice(&header);
        frame.extend_from_slice(inner);
        let t2 = Instant::now();
        let tag = cipher
            .encrypt_in_place_detached(&Nonce::from(nonce), &header, &mut frame[HEADER_LEN..])
            .expect("payload within AES-GCM limits");
        let t3 = Instant::now();
        frame.extend_from_slice(&tag);
        let t4 = Instant::now();
        self.costs.record(PacketCost {
            lookup_ns: (t1 - t0).as_nanos() as u64,
            framing_ns: ((t2 - t1) + (t4 - t3)).as_nanos() as u64,
            crypto_ns: (t3 - t2).as_nanos() as u64,
            total_ns: (t4 - t0).as_nanos() as u64,
        });
        Ok(Sealed {
            frame,
            rekey,
            key_id: entry.key_id,
            nonce,
        })
    }

    /// Authenticates and decrypts a frame that arrived from `source`.
    ///
    /// The header is authenticated before any of its fields are trusted: a
    /// frame whose `(epoch, key_id)` names no key is tried against the keys
    /// held for `source`, so header tampering reports `AuthFailed` rather
    /// than leaking which field was touched.
    pub fn open(&self, frame: &[u8], source: &SocketAddrV4) -> Result<Vec<u8>, OpenError> {
        let h = FrameHeader::parse_fields(frame).ok_or(OpenError::Malformed)?;
        let exact = self.keys.get(source, h.epoch).and_then(|s| s.by_key_id(h.key_id).cloned());
        let inner = match exact {
            Some(entry) => {
                let inner = Self::decrypt(&entry, &h, frame)?;
                if &frame[..4] != FRAME_MAGIC
                    || h.inner_len as usize != inner.len()
                    || h.lane as usize >= MAX_LANES
                {
                    return Err(OpenError::Malformed);
                }
                if entry.replay_accept(h.lane, h.counter) != ReplayVerdict::Fresh {
                    return Err(OpenError::ReplayDetected);
                }
                inner
            }
            None if self.keys.is_flushed(h.epoch) => return Err(OpenError::EpochTooOld),
            None => {
                let candidates = self.keys.entries_for_peer(source);
                if candidates.is_empty() {
                    return Err(OpenError::UnknownKey);
                }
                for e in candidates {
                    if Self::decrypt(&e, &h, frame).is_ok() {
                        // Authentic under a key it does not name.
                        return Err(OpenError::Malformed);
                    }
                }
                return Err(OpenError::AuthFailed);
            }
        };
        if h.epoch < self.policy.epoch() {
            self.last_grace_frame_ms.store(self.clock.now_ms(), Ordering::Release);
            self.grace_frames.fetch_add(1, Ordering::AcqRel);
        }
        Ok(inner)
    }

    fn decrypt(entry: &SessionKeyEntry, h: &FrameHeader, frame: &[u8]) -> Result<Vec<u8>, OpenError> {
        let cipher = entry.cipher().ok_or(OpenError::EpochTooOld)?;
        let nonce = compose_nonce(h.lane, entry.recv_prefix(), h.counter);
        let body_end = frame.len() - TAG_LEN;
        let mut inner = frame[HEADER_LEN..body_end].to_vec();
        cipher
            .decrypt_in_place_detached(
                &Nonce::from(nonce),
                &frame[..HEADER_LEN],
                &mut inner,
                &Tag::from(<[u8; TAG_LEN]>::try_from(&frame[body_end..]).expect("tag length")),
            )
            .map_err(|_| OpenError::AuthFailed)?;
        Ok(inner)
    }
}
