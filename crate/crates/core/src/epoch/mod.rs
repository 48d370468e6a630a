//! Epoch rollover and key reclamation.
//!
//! A new policy epoch becomes active at once; keys of the previous epoch
//! keep decrypting until every data-plane lane has passed a quiescent
//! point and the old epoch's traffic has drained, then they are zeroized.
//! Retired keys wait in a bounded queue whose overflow resets stale
//! sessions instead of growing.

mod lifecycle;
mod tracker;

pub use lifecycle::{
    EpochConfig, EpochError, EpochLifecycle, EpochStats, FlushCause, FlushReport, PreviousEpoch,
    DEFAULT_DRAIN_QUIET_MS, DEFAULT_GRACE_CAP_MS, DEFAULT_QUEUE_CAPACITY,
};
pub use tracker::{QuiescenceSnapshot, QuiescenceTracker};

#[cfg(test)]
mod tests;
