"""Self-contained SHA-256 / HMAC-SHA256, truncated wire MACs, capability tokens.

SHA-256 is implemented inline (FIPS 180-4) rather than via ``hashlib`` so
the host side mirrors the dependency-free device implementation and the two
can be conformance-tested against the same known-answer vectors.

A capability token is::

    base64url(P) "." base64url(HMAC-SHA256(secret, P))

with no padding, where P is the deterministic CBOR encoding of
``{"v": 1, "caps": [...sorted...], "iat": t, "exp": t + ttl}``. Tokens are
bearer credentials: tamper-evident and time-limited, but replayable within
their TTL. ``now`` is always an explicit parameter; nothing in this module
reads the system clock.
"""

from __future__ import annotations

import base64
import binascii
import re
import struct
from dataclasses import dataclass

from .errors import CryptoError, TokenError

SHA256_BLOCK = 64

_K = [
    0x428A2F98, 0x71374491, 0xB5C0FBCF, 0xE9B5DBA5, 0x3956C25B, 0x59F111F1,
    0x923F82A4, 0xAB1C5ED5, 0xD807AA98, 0x12835B01, 0x243185BE, 0x550C7DC3,
    0x72BE5D74, 0x80DEB1FE, 0x9BDC06A7, 0xC19BF174, 0xE49B69C1, 0xEFBE4786,
    0x0FC19DC6, 0x240CA1CC, 0x2DE92C6F, 0x4A7484AA, 0x5CB0A9DC, 0x76F988DA,
    0x983E5152, 0xA831C66D, 0xB00327C8, 0xBF597FC7, 0xC6E00BF3, 0xD5A79147,
    0x06CA6351, 0x14292967, 0x27B70A85, 0x2E1B2138, 0x4D2C6DFC, 0x53380D13,
    0x650A7354, 0x766A0ABB, 0x81C2C92E, 0x92722C85, 0xA2BFE8A1, 0xA81A664B,
    0xC24B8B70, 0xC76C51A3, 0xD192E819, 0xD6990624, 0xF40E3585, 0x106AA070,
    0x19A4C116, 0x1E376C08, 0x2748774C, 0x34B0BCB5, 0x391C0CB3, 0x4ED8AA4A,
    0x5B9CCA4F, 0x682E6FF3, 0x748F82EE, 0x78A5636F, 0x84C87814, 0x8CC70208,
    0x90BEFFFA, 0xA4506CEB, 0xBEF9A3F7, 0xC67178F2,
]

_H0 = (0x6A09E667, 0xBB67AE85, 0x3C6EF372, 0xA54FF53A,
       0x510E527F, 0x9B05688C, 0x1F83D9AB, 0x5BE0CD19)

_MASK = 0xFFFFFFFF


def _compress(state: tuple, block: bytes) -> tuple:
    w = list(struct.unpack(">16I", block))
    for t in range(16, 64):
        w15, w2 = w[t - 15], w[t - 2]
        s0 = ((w15 >> 7 | w15 << 25) ^ (w15 >> 18 | w15 << 14) ^ (w15 >> 3)) & _MASK
        s1 = ((w2 >> 17 | w2 << 15) ^ (w2 >> 19 | w2 << 13) ^ (w2 >> 10)) & _MASK
        w.append((w[t - 16] + s0 + w[t - 7] + s1) & _MASK)

    a, b, c, d, e, f, g, h = state
    k = _K
    for t in range(64):
        s1 = ((e >> 6 | e << 26) ^ (e >> 11 | e << 21) ^ (e >> 25 | e << 7)) & _MASK
        ch = (e & f) ^ (~e & g)
        t1 = (h + s1 + ch + k[t] + w[t]) & _MASK
        s0 = ((a >> 2 | a << 30) ^ (a >> 13 | a << 19) ^ (a >> 22 | a << 10)) & _MASK
        maj = (a & b) ^ (a & c) ^ (b & c)
        t2 = (s0 + maj) & _MASK
        h, g, f, e, d, c, b, a = g, f, e, (d + t1) & _MASK, c, b, a, (t1 + t2) & _MASK

    return ((state[0] + a) & _MASK, (state[1] + b) & _MASK,
            (state[2] + c) & _MASK, (state[3] + d) & _MASK,
            (state[4] + e) & _MASK, (state[5] + f) & _MASK,
            (state[6] + g) & _MASK, (state[7] + h) & _MASK)


def sha256(msg: bytes) -> bytes:
    """FIPS 180-4 SHA-256 digest of ``msg``."""
    state = _H0
    n = len(msg)
    full = n - (n % SHA256_BLOCK)
    for off in range(0, full, SHA256_BLOCK):
        state = _compress(state, msg[off:off + SHA256_BLOCK])
    tail = msg[full:] + b"\x80"
    if len(tail) > SHA256_BLOCK - 8:
        tail += b"\x00" * (2 * SHA256_BLOCK - 8 - len(tail))
    else:
        tail += b"\x00" * (SHA256_BLOCK - 8 - len(tail))
    tail += struct.pack(">Q", n * 8)
    for off in range(0, len(tail), SHA256_BLOCK):
        state = _compress(state, tail[off:off + SHA256_BLOCK])
    return struct.pack(">8I", *state)


def hmac_sha256(key: bytes, msg: bytes) -> bytes:
    """RFC 2104 HMAC over :func:`sha256`. Long keys are hashed first."""
    if len(key) > SHA256_BLOCK:
        key = sha256(key)
    key = key.ljust(SHA256_BLOCK, b"\x00")
    ipad = bytes(b ^ 0x36 for b in key)
    opad = bytes(b ^ 0x5C for b in key)
    return sha256(opad + sha256(ipad + msg))


def constant_time_eq(a: bytes, b: bytes) -> bool:
    """Compare two byte strings without early exit on the first difference."""
    if len(a) != len(b):
        return False
    acc = 0
    for x, y in zip(a, b):
        acc |= x ^ y
    return acc == 0


def wire_mac(secret: bytes, frame_bytes: bytes) -> bytes:
    """Truncated per-frame MAC: the first 16 bytes of HMAC-SHA256."""
    if not secret:
        raise CryptoError("invalid_argument", "wire secret must be non-empty")
    return hmac_sha256(secret, frame_bytes)[:16]


# ---------------------------------------------------------------------------
# Capability tokens

CAPABILITY_RE = re.compile(r"[a-z0-9_]+(\.[a-z0-9_]+)*")


def is_valid_capability(cap: str) -> bool:
    return isinstance(cap, str) and CAPABILITY_RE.fullmatch(cap) is not None


@dataclass(frozen=True)
class CapabilityToken:
    """A verified token: the capability set plus its validity window."""
    caps: frozenset[str]
    iat: int
    exp: int
    raw: str


def _b64url_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def _b64url_decode(part: str) -> bytes:
    # Strict: re-encoding must reproduce the input exactly, so flipping
    # unused trailing bits cannot yield a second spelling of the same bytes.
    pad = -len(part) % 4
    if pad == 3 or not part:
        raise TokenError("token_malformed", "bad base64url section")
    try:
        raw = base64.urlsafe_b64decode((part + "=" * pad).encode("ascii"))
    except (binascii.Error, ValueError):
        raise TokenError("token_malformed", "bad base64url section") from None
    if _b64url_encode(raw) != part:
        raise TokenError("token_malformed", "non-canonical base64url section")
    return raw


def issue_token(secret: bytes, caps, ttl_seconds: int, now: int) -> str:
    """Sign a capability set valid for ``[now, now + ttl_seconds)``.

    Deterministic: identical inputs produce identical tokens (there is no
    nonce in v0.x; tokens are bearer credentials, replayable within TTL).
    """
    from .codec import cbor_encode

    if not secret:
        raise CryptoError("invalid_argument", "bridge secret must be non-empty")
    caps = sorted(set(caps))
    if not caps:
        raise CryptoError("invalid_argument", "capability set must be non-empty")
    for cap in caps:
        if not is_valid_capability(cap):
            raise CryptoError("invalid_argument", f"bad capability string {cap!r}")
    if ttl_seconds <= 0:
        raise CryptoError("invalid_argument", "ttl must be positive")
    payload = {"v": 1, "caps": caps, "iat": int(now), "exp": int(now) + int(ttl_seconds)}
    body = cbor_encode(payload, allow_arrays=True)
    tag = hmac_sha256(secret, body)
    return _b64url_encode(body) + "." + _b64url_encode(tag)


def _decode_claims(body: bytes) -> dict:
    from .codec import cbor_decode
    from .errors import CodecError

    try:
        claims = cbor_decode(body, allow_arrays=True)
    except CodecError:
        raise TokenError("token_malformed", "token payload is not valid CBOR") from None
    if (not isinstance(claims, dict)
            or set(claims) != {"v", "caps", "iat", "exp"}
            or claims["v"] != 1
            or not isinstance(claims["iat"], int) or isinstance(claims["iat"], bool)
            or not isinstance(claims["exp"], int) or isinstance(claims["exp"], bool)
            or not isinstance(claims["caps"], list)
            or not claims["caps"]
            or not all(is_valid_capability(c) for c in claims["caps"])
            or claims["exp"] <= claims["iat"]):
        raise TokenError("token_malformed", "token payload has the wrong shape")
    return claims


def verify_token(secret: bytes, token: str, now: int) -> CapabilityToken:
    """Verify signature and validity window; returns the capability set.

    The signature is checked (constant time) before the payload is parsed.
    """
    if not isinstance(token, str) or token.count(".") != 1:
        raise TokenError("token_malformed", "token must be two dot-separated sections")
    body_part, tag_part = token.split(".")
    body = _b64url_decode(body_part)
    tag = _b64url_decode(tag_part)
    if not constant_time_eq(hmac_sha256(secret, body), tag):
        raise TokenError("token_invalid", "token signature does not verify")
    claims = _decode_claims(body)
    if not claims["iat"] <= now < claims["exp"]:
        raise TokenError("token_expired", "token is outside its validity window")
    return CapabilityToken(caps=frozenset(claims["caps"]), iat=claims["iat"],
                           exp=claims["exp"], raw=token)


def inspect_token(token: str) -> dict:
    """Decode a token's claims WITHOUT verifying its signature.

    Debug/CLI aid only; never use the result to authorize anything.
    """
    if not isinstance(token, str) or token.count(".") != 1:
        raise TokenError("token_malformed", "token must be two dot-separated sections")
    body_part, _ = token.split(".")
    return _decode_claims(_b64url_decode(body_part))
