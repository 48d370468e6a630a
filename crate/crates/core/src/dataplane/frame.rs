//! Tunnel frame: `"JNS1" | epoch u64 | key_id u32 | lane u16 |
//! nonce_counter u32 | inner_len u16 | ciphertext | tag[16]`, header fields
//! big-endian. The header is the AEAD associated data.

pub const FRAME_MAGIC: &[u8; 4] = b"JNS1";
pub const HEADER_LEN: usize = 24;
pub const TAG_LEN: usize = 16;
/// IPv4 + UDP headers of the outer datagram.
pub const OUTER_IP_UDP: usize = 20 + 8;
pub const DEFAULT_MTU: usize = 1500;
pub const JUMBO_MTU: usize = 9000;

/// Largest inner datagram that fits an outer packet of `mtu` bytes.
pub const fn inner_budget(mtu: usize) -> usize {
    mtu.saturating_sub(OUTER_IP_UDP + HEADER_LEN + TAG_LEN)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub epoch: u64,
    pub key_id: u32,
    pub lane: u16,
    pub counter: u32,
    pub inner_len: u16,
}

impl FrameHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[..4].copy_from_slice(FRAME_MAGIC);
        h[4..12].copy_from_slice(&self.epoch.to_be_bytes());
        h[12..16].copy_from_slice(&self.key_id.to_be_bytes());
        h[16..18].copy_from_slice(&self.lane.to_be_bytes());
        h[18..22].copy_from_slice(&self.counter.to_be_bytes());
        h[22..24].copy_from_slice(&self.inner_len.to_be_bytes());
        h
    }

    /// Parses the header and checks the magic and `inner_len`.
    pub fn parse(frame: &[u8]) -> Option<Self> {
        let h = Self::parse_fields(frame)?;
        (&frame[..4] == FRAME_MAGIC && frame.len() == HEADER_LEN + h.inner_len as usize + TAG_LEN).then_some(h)
    }

    /// Reads the header fields of anything long enough to be a frame,
    /// without checking them. The receive path authenticates first and
    /// validates after.
    pub fn parse_fields(frame: &[u8]) -> Option<Self> {
        if frame.len() < HEADER_LEN + TAG_LEN {
            return None;
        }
        Some(Self {
            epoch: u64::from_be_bytes(frame[4..12].try_into().ok()?),
            key_id: u32::from_be_bytes(frame[12..16].try_into().ok()?),
            lane: u16::from_be_bytes(frame[16..18].try_into().ok()?),
            counter: u32::from_be_bytes(frame[18..22].try_into().ok()?),
            inner_len: u16::from_be_bytes(frame[22..24].try_into().ok()?),
        })
    }
}

/// `lane (2) || prefix (6) || counter (4)`, big-endian.
#[inline]
pub fn compose_nonce(lane: u16, prefix: &[u8; 6], counter: u32) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[..2].copy_from_slice(&lane.to_be_bytes());
    n[2..8].copy_from_slice(prefix);
    n[8..].copy_from_slice(&counter.to_be_bytes());
    n
}
