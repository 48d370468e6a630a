use std::collections::HashMap;
use std::mem::size_of;
use std::net::SocketAddrV4;
use std::sync::Arc;

use arc_swap::ArcSwap;
use ed25519_dalek::VerifyingKey;
use parking_lot::Mutex;

use super::{verify_and_install, PeerEntry, PolicyBody, PolicyBundle, PolicyError};
use crate::{Digest48, ValidationError};

/// Result of a data-plane authorization lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDecision<'a> {
    Allow(&'a PeerEntry),
    Deny,
}

#[derive(Debug, Clone)]
struct IndexedRule {
    src_measurement: Digest48,
    peer: PeerEntry,
}

/// Installed policy, compiled into a hash table keyed by destination.
#[derive(Debug, Clone)]
pub struct PolicyIndex {
    epoch: u64,
    digest: Digest48,
    table: HashMap<SocketAddrV4, IndexedRule>,
    by_measurement: HashMap<Digest48, Vec<SocketAddrV4>>,
}

impl PolicyIndex {
    /// Compiles a validated body. Signature and epoch checks are the
    /// caller's job (see [`verify_and_install`]).
    pub fn build(body: &PolicyBody) -> Result<Self, ValidationError> {
        body.validate()?;
        let digest = body.digest()?;
        let mut table = HashMap::with_capacity(body.rules.len());
        let mut by_measurement: HashMap<Digest48, Vec<SocketAddrV4>> = HashMap::new();
        for r in &body.rules {
            table.insert(
                r.dst.address,
                IndexedRule {
                    src_measurement: r.src_measurement,
                    peer: r.dst,
                },
            );
            by_measurement
                .entry(r.dst.measurement)
                .or_default()
                .push(r.dst.address);
        }
        for v in by_measurement.values_mut() {
            v.sort_by_key(|a| (u32::from(*a.ip()), a.port()));
        }
        Ok(Self {
            epoch: body.epoch,
            digest,
            table,
            by_measurement,
        })
    }

    /// An index that authorizes nothing, at epoch 0.
    pub fn empty() -> Self {
        Self::build(&PolicyBody::new(0, vec![])).expect("empty policy is valid")
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Digest of the installed bundle.
    pub fn digest(&self) -> Digest48 {
        self.digest
    }

    pub fn entry_count(&self) -> usize {
        self.table.len()
    }

    #[inline]
    pub fn lookup(&self, dest: &SocketAddrV4) -> FlowDecision<'_> {
        match self.table.get(dest) {
            Some(r) => FlowDecision::Allow(&r.peer),
            None => FlowDecision::Deny,
        }
    }

    /// Measurement of the local source authorized for `dest`.
    pub fn source_measurement(&self, dest: &SocketAddrV4) -> Option<Digest48> {
        self.table.get(dest).map(|r| r.src_measurement)
    }

    /// Peers pinned with `measurement`, in ascending address order.
    pub fn peers_with_measurement(&self, measurement: &Digest48) -> impl Iterator<Item = &PeerEntry> {
        self.by_measurement
            .get(measurement)
            .into_iter()
            .flatten()
            .filter_map(|a| self.table.get(a).map(|r| &r.peer))
    }

    pub fn peers(&self) -> impl Iterator<Item = &PeerEntry> {
        self.table.values().map(|r| &r.peer)
    }

    /// Approximate heap footprint of the compiled tables.
    pub fn memory_bytes(&self) -> usize {
        let table = self.table.capacity()
            * (size_of::<SocketAddrV4>() + size_of::<IndexedRule>() + 1);
        let by_m = self.by_measurement.capacity()
            * (size_of::<Digest48>() + size_of::<Vec<SocketAddrV4>>() + 1)
            + self
                .by_measurement
                .values()
                .map(|v| v.capacity() * size_of::<SocketAddrV4>())
                .sum::<usize>();
        size_of::<Self>() + table + by_m
    }
}

/// The node's installed policy, swapped atomically on installation.
///
/// Readers get a snapshot `Arc` and never block; a reader that loaded the
/// old index before a swap finishes against the old index.
pub struct PolicyStore {
    current: ArcSwap<PolicyIndex>,
    install_lock: Mutex<()>,
    owner: Option<VerifyingKey>,
}

impl PolicyStore {
    pub fn new(initial: PolicyIndex) -> Self {
        Self {
            current: ArcSwap::from_pointee(initial),
            install_lock: Mutex::new(()),
            owner: None,
        }
    }

    /// A store that only accepts bundles signed by `owner`.
    pub fn with_owner(initial: PolicyIndex, owner: VerifyingKey) -> Self {
        Self {
            owner: Some(owner),
            ..Self::new(initial)
        }
    }

    pub fn owner(&self) -> Option<&VerifyingKey> {
        self.owner.as_ref()
    }

    pub fn load(&self) -> Arc<PolicyIndex> {
        self.current.load_full()
    }

    pub fn epoch(&self) -> u64 {
        self.current.load().epoch()
    }

    /// Verifies `bundle` against the installed epoch and publishes it.
    /// A rejected bundle leaves the store untouched.
    pub fn install(&self, bundle: &PolicyBundle) -> Result<Arc<PolicyIndex>, PolicyError> {
        let _guard = self.install_lock.lock();
        if let Some(owner) = &self.owner {
            bundle.verify_owner(owner)?;
        }
        let current = self.current.load().epoch();
        let index = Arc::new(verify_and_install(bundle, current)?);
        self.current.store(index.clone());
        Ok(index)
    }
}
