//! Independent ECDH and HKDF: P-384 over num-bigint in Jacobian
//! coordinates, HMAC assembled by hand over SHA-384.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use sha2::{Digest, Sha384};

const P: &str = "fffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffeffffffff0000000000000000ffffffff";
const B: &str = "b3312fa7e23ee7e4988e056be3f82d19181d9c6efe8141120314088f5013875ac656398d8a2ed19d2a85c8edd3ec2aef";
const GX: &str = "aa87ca22be8b05378eb1c71ef320ad746e1d3b628ba79b9859f741e082542a385502f25dbf55296c3a545e3872760ab7";
const GY: &str = "3617de4a96262c6f5d9e98bf9292dc29f8f41dbd289a147ce9da3113b5f0b8c00a60b1ce1d7e819d7a431d7c90ea0e5f";
const N: &str = "ffffffffffffffffffffffffffffffffffffffffffffffffc7634d81f4372ddf581a0db248b0a77aecec196accc52973";

fn hexnum(s: &str) -> BigUint {
    BigUint::parse_bytes(s.as_bytes(), 16).expect("hex constant")
}

pub struct Curve {
    p: BigUint,
    b: BigUint,
    pub n: BigUint,
    g: (BigUint, BigUint),
}

struct Jacobian {
    x: BigUint,
    y: BigUint,
    z: BigUint,
}

impl Curve {
    pub fn p384() -> Self {
        Self { p: hexnum(P), b: hexnum(B), n: hexnum(N), g: (hexnum(GX), hexnum(GY)) }
    }

    fn add(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a + b) % &self.p
    }

    fn sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        ((a + &self.p) - b) % &self.p
    }

    fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.p
    }

    fn small(&self, k: u32, a: &BigUint) -> BigUint {
        (a * k) % &self.p
    }

    fn inv(&self, a: &BigUint) -> BigUint {
        a.modpow(&(&self.p - 2u32), &self.p)
    }

    pub fn on_curve(&self, x: &BigUint, y: &BigUint) -> bool {
        let rhs = self.add(&self.sub(&self.mul(&self.mul(x, x), x), &self.small(3, x)), &self.b);
        x < &self.p && y < &self.p && self.mul(y, y) == rhs
    }

    fn double(&self, q: &Jacobian) -> Jacobian {
        let delta = self.mul(&q.z, &q.z);
        let gamma = self.mul(&q.y, &q.y);
        let beta = self.mul(&q.x, &gamma);
        let alpha = self.small(3, &self.mul(&self.sub(&q.x, &delta), &self.add(&q.x, &delta)));
        let x3 = self.sub(&self.mul(&alpha, &alpha), &self.small(8, &beta));
        let yz = self.add(&q.y, &q.z);
        let z3 = self.sub(&self.sub(&self.mul(&yz, &yz), &gamma), &delta);
        let y3 = self.sub(
            &self.mul(&alpha, &self.sub(&self.small(4, &beta), &x3)),
            &self.small(8, &self.mul(&gamma, &gamma)),
        );
        Jacobian { x: x3, y: y3, z: z3 }
    }

    /// `q + (x2, y2)`; the operands must differ.
    fn add_affine(&self, q: &Jacobian, x2: &BigUint, y2: &BigUint) -> Jacobian {
        let z1z1 = self.mul(&q.z, &q.z);
        let u2 = self.mul(x2, &z1z1);
        let s2 = self.mul(&self.mul(y2, &q.z), &z1z1);
        let h = self.sub(&u2, &q.x);
        assert!(!h.is_zero(), "degenerate addition");
        let hh = self.mul(&h, &h);
        let i = self.small(4, &hh);
        let j = self.mul(&h, &i);
        let r = self.small(2, &self.sub(&s2, &q.y));
        let v = self.mul(&q.x, &i);
        let x3 = self.sub(&self.sub(&self.mul(&r, &r), &j), &self.small(2, &v));
        let y3 = self.sub(&self.mul(&r, &self.sub(&v, &x3)), &self.small(2, &self.mul(&q.y, &j)));
        let zh = self.add(&q.z, &h);
        let z3 = self.sub(&self.sub(&self.mul(&zh, &zh), &z1z1), &hh);
        Jacobian { x: x3, y: y3, z: z3 }
    }

    /// `k * (x, y)` for `0 < k < n`, left to right.
    pub fn mul_point(&self, k: &BigUint, x: &BigUint, y: &BigUint) -> (BigUint, BigUint) {
        assert!(!k.is_zero() && k < &self.n, "scalar out of range");
        let bits = k.bits();
        let mut acc = Jacobian { x: x.clone(), y: y.clone(), z: BigUint::one() };
        for i in (0..bits - 1).rev() {
            acc = self.double(&acc);
            if k.bit(i) {
                acc = self.add_affine(&acc, x, y);
            }
        }
        let zi = self.inv(&acc.z);
        let zi2 = self.mul(&zi, &zi);
        (self.mul(&acc.x, &zi2), self.mul(&acc.y, &self.mul(&zi2, &zi)))
    }

    pub fn mul_base(&self, k: &BigUint) -> (BigUint, BigUint) {
        self.mul_point(k, &self.g.0, &self.g.1)
    }
}

pub fn be48(v: &BigUint) -> [u8; 48] {
    let b = v.to_bytes_be();
    let mut out = [0u8; 48];
    out[48 - b.len()..].copy_from_slice(&b);
    out
}

/// Uncompressed SEC1 encoding.
pub fn encode_point(x: &BigUint, y: &BigUint) -> Vec<u8> {
    let mut out = vec![0x04];
    out.extend_from_slice(&be48(x));
    out.extend_from_slice(&be48(y));
    out
}

pub fn decode_point(curve: &Curve, bytes: &[u8]) -> Option<(BigUint, BigUint)> {
    if bytes.len() != 97 || bytes[0] != 0x04 {
        return None;
    }
    let x = BigUint::from_bytes_be(&bytes[1..49]);
    let y = BigUint::from_bytes_be(&bytes[49..]);
    curve.on_curve(&x, &y).then_some((x, y))
}

pub fn sha384(parts: &[&[u8]]) -> Vec<u8> {
    let mut h = Sha384::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().to_vec()
}

pub fn hmac_sha384(key: &[u8], msg: &[&[u8]]) -> Vec<u8> {
    const BLOCK: usize = 128;
    let mut k = if key.len() > BLOCK { sha384(&[key]) } else { key.to_vec() };
    k.resize(BLOCK, 0);
    let ipad: Vec<u8> = k.iter().map(|b| b ^ 0x36).collect();
    let opad: Vec<u8> = k.iter().map(|b| b ^ 0x5c).collect();
    let mut inner: Vec<&[u8]> = vec![&ipad];
    inner.extend_from_slice(msg);
    let ih = sha384(&inner);
    sha384(&[&opad, &ih])
}

/// HKDF with a single expansion block, enough for outputs up to 48 bytes.
pub fn hkdf_sha384(salt: &[u8], ikm: &[u8], info: &[u8], len: usize) -> Vec<u8> {
    assert!(len <= 48);
    let prk = hmac_sha384(salt, &[ikm]);
    let mut t = hmac_sha384(&prk, &[info, &[1u8]]);
    t.truncate(len);
    t
}

/// Session material as derived by the oracle.
#[derive(Debug, PartialEq, Eq)]
pub struct OracleKeys {
    pub key: Vec<u8>,
    pub confirm_key: Vec<u8>,
    pub key_id: u32,
    pub initiator_prefix: Vec<u8>,
    pub responder_prefix: Vec<u8>,
}

pub fn derive(shared_x: &[u8], initiator_quote: &[u8], responder_quote: &[u8]) -> OracleKeys {
    let salt = sha384(&[initiator_quote, responder_quote]);
    let prefix = hkdf_sha384(&salt, shared_x, b"make/v1/nonce-prefix", 6);
    let mut initiator_prefix = prefix.clone();
    initiator_prefix[0] &= 0x7f;
    let mut responder_prefix = prefix;
    responder_prefix[0] |= 0x80;
    OracleKeys {
        key: hkdf_sha384(&salt, shared_x, b"make/v1/data", 32),
        confirm_key: hkdf_sha384(&salt, shared_x, b"make/v1/confirm", 32),
        key_id: u32::from_be_bytes(hkdf_sha384(&salt, shared_x, b"make/v1/key-id", 4).try_into().unwrap()),
        initiator_prefix,
        responder_prefix,
    }
}

/// Known-answer checks on the oracle itself.
pub fn self_test() -> Result<(), String> {
    // RFC 4231 test case 2 (HMAC-SHA-384).
    let mac = hmac_sha384(b"Jefe", &[b"what do ya want for nothing?"]);
    let want = "af45d2e376484031617f78d2b58a6b1b9c7ef464f5a01b47e42ec3736322445e8e2240ca5e69e2c78b3239ecfab21649";
    if hex::encode(&mac) != want {
        return Err("HMAC-SHA-384 known answer".into());
    }
    let c = Curve::p384();
    if !c.on_curve(&c.g.0, &c.g.1) {
        return Err("generator not on curve".into());
    }
    // (n - 1) G = -G
    let (x, y) = c.mul_base(&(&c.n - 1u32));
    if x != c.g.0 || y != (&c.p - &c.g.1) {
        return Err("(n-1)G != -G".into());
    }
    // 2G via the ladder equals G + G via the curve equation check
    let (x2, y2) = c.mul_base(&BigUint::from(2u32));
    if !c.on_curve(&x2, &y2) {
        return Err("2G not on curve".into());
    }
    Ok(())
}
