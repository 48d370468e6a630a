use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha384};

use crate::ValidationError;

/// A 48-byte SHA-384 value: measurements, register contents, policy digests.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest48(pub [u8; 48]);

impl Digest48 {
    pub const LEN: usize = 48;
    pub const ZERO: Digest48 = Digest48([0u8; 48]);

    /// SHA-384 of `data`.
    pub fn hash(data: &[u8]) -> Self {
        Self(Sha384::digest(data).into())
    }

    /// SHA-384 over the concatenation of `parts`.
    pub fn hash_parts<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> Self {
        let mut h = Sha384::new();
        for p in parts {
            h.update(p);
        }
        Self(h.finalize().into())
    }

    pub fn from_slice(field: &str, bytes: &[u8]) -> Result<Self, ValidationError> {
        let arr: [u8; 48] = bytes.try_into().map_err(|_| {
            ValidationError::new(field, format!("expected 48 bytes, got {}", bytes.len()))
        })?;
        Ok(Self(arr))
    }

    pub fn from_hex(field: &str, s: &str) -> Result<Self, ValidationError> {
        let bytes = hex::decode(s).map_err(|e| ValidationError::new(field, e.to_string()))?;
        Self::from_slice(field, &bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0u8; 48]
    }

    pub fn as_bytes(&self) -> &[u8; 48] {
        &self.0
    }
}

impl AsRef<[u8]> for Digest48 {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Digest48 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest48({}…)", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest48 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest48 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest48 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest48::from_hex("digest", &s).map_err(serde::de::Error::custom)
    }
}
