//! Per-packet enforcement and the UDP tunnel.
//!
//! Outbound datagrams are looked up in the installed policy by destination,
//! matched to the flow's session key for the active epoch, and sealed with
//! AES-256-GCM under a structured nonce. Inbound frames are matched to a
//! key by `(source, epoch, key_id)`, opened, and checked against a per-lane
//! replay window. Nothing leaves for a destination the policy does not
//! name.

mod costs;
mod engine;
mod frame;
mod keys;
mod replay;
pub mod tunnel;

pub use costs::{CostRecorder, CostRow, CostSummary, PacketCost, COMPONENTS, DEFAULT_WARMUP};
pub use engine::{DataPlane, DataPlaneConfig, OpenError, SealError, Sealed};
pub use frame::{
    compose_nonce, inner_budget, FrameHeader, DEFAULT_MTU, FRAME_MAGIC, HEADER_LEN, JUMBO_MTU,
    OUTER_IP_UDP, TAG_LEN,
};
pub use keys::{
    CounterGrant, FlowKeyTable, FlowSlot, SessionKeyEntry, COUNTER_LIMIT, DEFAULT_REKEY_THRESHOLD, MAX_LANES,
};
pub use replay::{ReplayVerdict, ReplayWindow};
