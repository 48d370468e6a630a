"""Independent reference values for the janus-core test suite.

Built only on hashlib/hmac and the `cryptography` package so the frozen
constants in the Rust tests do not share code paths with the crate.
"""
import hashlib
import hmac
import ipaddress
import struct

from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives import serialization


def sha384(b):
    return hashlib.sha384(b).digest()


def d48(label):
    return sha384(label.encode())


def policy_rule(src, ip, port, meas, pin, with_pin):
    body = src + struct.pack("<I", int(ipaddress.IPv4Address(ip))) + struct.pack("<H", port) + meas
    if with_pin:
        body += pin
    return struct.pack("<I", len(body)) + body


def policy_bytes(epoch, rules, with_pin):
    tag = b"janus/policy/v1" if with_pin else b"janus/policy-digest/v1"
    out = struct.pack("<I", len(tag)) + tag + struct.pack("<Q", epoch) + struct.pack("<I", len(rules))
    rules = sorted(rules, key=lambda r: (int(ipaddress.IPv4Address(r[1])), r[2]))
    for r in rules:
        out += policy_rule(*r, with_pin)
    return out


def hkdf_extract(salt, ikm):
    return hmac.new(salt, ikm, hashlib.sha384).digest()


def hkdf_expand(prk, info, n):
    out, t, i = b"", b"", 1
    while len(out) < n:
        t = hmac.new(prk, t + info + bytes([i]), hashlib.sha384).digest()
        out += t
        i += 1
    return out[:n]


print("== policy ==")
print("empty canonical", policy_bytes(0, [], True).hex())
print("empty digest", sha384(policy_bytes(0, [], False)).hex())
rules = [
    (d48("src-a"), "10.0.0.9", 7000, d48("node-b"), d48("pin-b")),
    (d48("src-a"), "10.0.0.2", 9000, d48("node-c"), b"\x00" * 48),
]
print("two-rule canonical sha384", sha384(policy_bytes(7, rules, True)).hex())
print("two-rule digest", sha384(policy_bytes(7, rules, False)).hex())

print("== rtmr ==")
d = d48("proxy")
print("extend zero", sha384(b"\x00" * 48 + d).hex())

print("== report data ==")
items = [b"\x04" + bytes(range(96)), d48("pi"), bytes(range(32))]
bound = sha384(b"".join(struct.pack("<I", len(x)) + x for x in items)) + b"\x00" * 16
print("bind", bound.hex())

print("== ecdh/hkdf ==")
sk_s = ec.derive_private_key(0x1F2E3D4C5B6A79880123456789ABCDEF0F1E2D3C4B5A69788796A5B4C3D2E1F00112233445566778899AABBCCDDEEFF, ec.SECP384R1())
sk_d = ec.derive_private_key(0x0A1B2C3D4E5F60718293A4B5C6D7E8F9000102030405060708090A0B0C0D0E0F101112131415161718191A1B1C1D1E1F, ec.SECP384R1())
pk = lambda k: k.public_key().public_bytes(serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint)
print("sk_s", sk_s.private_numbers().private_value.to_bytes(48, "big").hex())
print("sk_d", sk_d.private_numbers().private_value.to_bytes(48, "big").hex())
print("pk_s", pk(sk_s).hex())
print("pk_d", pk(sk_d).hex())
shared = sk_s.exchange(ec.ECDH(), sk_d.public_key())
assert shared == sk_d.exchange(ec.ECDH(), sk_s.public_key())
print("shared", shared.hex())
q_s = b"quote-from-initiator" * 4
q_d = b"quote-from-responder" * 5
prk = hkdf_extract(sha384(q_s + q_d), shared)
print("key", hkdf_expand(prk, b"make/v1/data", 32).hex())
print("confirm", hkdf_expand(prk, b"make/v1/confirm", 32).hex())
print("key_id", hkdf_expand(prk, b"make/v1/key-id", 4).hex())
print("prefix", hkdf_expand(prk, b"make/v1/nonce-prefix", 6).hex())
prk_sw = hkdf_extract(sha384(q_d + q_s), shared)
print("key swapped", hkdf_expand(prk_sw, b"make/v1/data", 32).hex())
mac = hmac.new(hkdf_expand(prk, b"make/v1/confirm", 32), q_d + q_s, hashlib.sha384).digest()
print("mac", mac.hex())
