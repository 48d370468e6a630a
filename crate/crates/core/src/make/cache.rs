use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;

use super::{HandshakeError, SessionSecret};
use crate::Digest48;

/// Time a handshake may wait for the session cache before giving up.
pub const LOCK_BUDGET: Duration = Duration::from_micros(50);

/// `(μ_s, μ_d, π_s)`
pub type SessionCacheKey = (Digest48, Digest48, Digest48);

/// Completed sessions indexed by their attested binding.
#[derive(Default)]
pub struct SessionCache {
    inner: Mutex<HashMap<SessionCacheKey, Arc<SessionSecret>>>,
}

impl SessionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn key_of(s: &SessionSecret) -> SessionCacheKey {
        (
            s.binding.initiator_measurement,
            s.binding.responder_measurement,
            s.binding.initiator_policy_digest,
        )
    }

    /// Inserts within `budget`, or refuses the connection.
    pub fn insert(&self, s: SessionSecret, budget: Duration) -> Result<Arc<SessionSecret>, HandshakeError> {
        let mut map = self.inner.try_lock_for(budget).ok_or(HandshakeError::ConnectionRefused)?;
        let s = Arc::new(s);
        map.insert(Self::key_of(&s), s.clone());
        Ok(s)
    }

    pub fn get(&self, key: &SessionCacheKey) -> Option<Arc<SessionSecret>> {
        self.inner.lock().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Holds the cache lock for `hold`, to exercise the budget.
    #[doc(hidden)]
    pub fn hold_lock_for(&self, hold: Duration) {
        let _g = self.inner.lock();
        std::thread::sleep(hold);
    }
}
