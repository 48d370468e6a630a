use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use p384::ecdh::diffie_hellman;
use p384::{PublicKey, SecretKey};
use sha2::{Digest as _, Sha384};
use zeroize::{Zeroize, ZeroizeOnDrop};

use super::HandshakeError;

pub const INFO_DATA: &[u8] = b"make/v1/data";
pub const INFO_CONFIRM: &[u8] = b"make/v1/confirm";
pub const INFO_KEY_ID: &[u8] = b"make/v1/key-id";
pub const INFO_NONCE_PREFIX: &[u8] = b"make/v1/nonce-prefix";

pub const PUBLIC_KEY_LEN: usize = 97;

/// Keys agreed by both ends of a handshake.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct DerivedKeys {
    pub key: [u8; 32],
    pub confirm_key: [u8; 32],
    pub key_id: u32,
    /// Nonce prefix for frames sealed by the initiator (top bit clear).
    pub initiator_prefix: [u8; 6],
    /// Nonce prefix for frames sealed by the responder (top bit set).
    pub responder_prefix: [u8; 6],
}

impl std::fmt::Debug for DerivedKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DerivedKeys")
            .field("key_id", &format_args!("{:08x}", self.key_id))
            .finish_non_exhaustive()
    }
}

/// Parses an uncompressed SEC1 P-384 point, rejecting anything else.
pub fn parse_public(bytes: &[u8]) -> Result<PublicKey, HandshakeError> {
    if bytes.len() != PUBLIC_KEY_LEN || bytes[0] != 0x04 {
        return Err(HandshakeError::InvalidPoint);
    }
    PublicKey::from_sec1_bytes(bytes).map_err(|_| HandshakeError::InvalidPoint)
}

pub fn encode_public(pk: &PublicKey) -> [u8; PUBLIC_KEY_LEN] {
    use p384::elliptic_curve::sec1::ToEncodedPoint;
    let point = pk.to_encoded_point(false);
    point.as_bytes().try_into().expect("uncompressed P-384 point")
}

/// ECDH, then HKDF-SHA-384 with salt `SHA-384(Q_s || Q_d)`.
pub fn derive_session(
    local_secret: &SecretKey,
    peer_public: &[u8],
    initiator_quote: &[u8],
    responder_quote: &[u8],
) -> Result<DerivedKeys, HandshakeError> {
    let peer = parse_public(peer_public)?;
    let shared = diffie_hellman(local_secret.to_nonzero_scalar(), peer.as_affine());
    let salt = Sha384::new()
        .chain_update(initiator_quote)
        .chain_update(responder_quote)
        .finalize();
    let hk = Hkdf::<Sha384>::new(Some(&salt), shared.raw_secret_bytes());
    let mut out = DerivedKeys {
        key: [0; 32],
        confirm_key: [0; 32],
        key_id: 0,
        initiator_prefix: [0; 6],
        responder_prefix: [0; 6],
    };
    let mut id = [0u8; 4];
    let mut prefix = [0u8; 6];
    hk.expand(INFO_DATA, &mut out.key).expect("valid length");
    hk.expand(INFO_CONFIRM, &mut out.confirm_key).expect("valid length");
    hk.expand(INFO_KEY_ID, &mut id).expect("valid length");
    hk.expand(INFO_NONCE_PREFIX, &mut prefix).expect("valid length");
    out.key_id = u32::from_be_bytes(id);
    out.initiator_prefix = prefix;
    out.initiator_prefix[0] &= 0x7f;
    out.responder_prefix = prefix;
    out.responder_prefix[0] |= 0x80;
    prefix.zeroize();
    Ok(out)
}

/// Flight-3 MAC: HMAC-SHA-384 over `Q_d || Q_s`.
pub fn confirmation_mac(confirm_key: &[u8; 32], responder_quote: &[u8], initiator_quote: &[u8]) -> [u8; 48] {
    let mut mac = <Hmac<Sha384> as Mac>::new_from_slice(confirm_key).expect("any key length");
    mac.update(responder_quote);
    mac.update(initiator_quote);
    mac.finalize().into_bytes().into()
}

pub fn verify_confirmation_mac(
    confirm_key: &[u8; 32],
    responder_quote: &[u8],
    initiator_quote: &[u8],
    tag: &[u8],
) -> Result<(), HandshakeError> {
    let mut mac = <Hmac<Sha384> as Mac>::new_from_slice(confirm_key).expect("any key length");
    mac.update(responder_quote);
    mac.update(initiator_quote);
    mac.verify_slice(tag).map_err(|_| HandshakeError::ConfirmationFailed)
}
