"""DCP frame codec: fixed header, restricted deterministic CBOR, wire MAC.

Frame layout (all multi-byte fields big-endian):

    ┌─────────┬────────┬─────────┬──────────────┬──────────────┬───────────────┐
    │ version │  kind  │  seq    │  intent_id   │ CBOR payload │ optional MAC  │
    │  1 B    │  1 B   │  2 B    │  2 B         │  >= 1 B      │  16 B         │
    └─────────┴────────┴─────────┴──────────────┴──────────────┴───────────────┘

``kind`` is 0x01 call, 0x02 reply, 0x03 event, 0x04 error; bit 7 set on a
call marks it dry-run (0x81). ``intent_id`` is the CRC-16/CCITT-FALSE of the
intent name, so manifest and firmware derive the same identifier from the
same source string with no coordination.

The payload is a restricted CBOR subset: a definite-length map of short text
keys to integers, floats, booleans, text, or nested maps. Encoding is
deterministic (shortest integer/float forms, map keys sorted bytewise over
their encoded form); decoding accepts any valid-subset encoding so devices
with non-canonical encoders interoperate. Arrays are accepted only when the
caller opts in (capability-token payloads use them); byte strings, tags,
nulls, and indefinite lengths are never accepted.

When a wire secret is configured, the first 16 bytes of
HMAC-SHA256(secret, header‖payload) are appended. There is deliberately no
in-band marker for whether a frame is signed; both sides agree out of band.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import IntEnum

from .errors import CodecError

PROTOCOL_VERSION = 0x01
HEADER_SIZE = 6
MAC_SIZE = 16

_DRY_RUN_BIT = 0x80


# ---------------------------------------------------------------------------
# CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection, xorout 0x0000).
# Check value: crc16_ccitt(b"123456789") == 0x29B1.

def _build_crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if (crc & 0x8000) else (crc << 1)
        table.append(crc & 0xFFFF)
    return table


_CRC_TABLE = _build_crc_table()


def crc16_ccitt(data: bytes, crc: int = 0xFFFF) -> int:
    """CRC-16/CCITT-FALSE over ``data``, optionally continuing from ``crc``."""
    table = _CRC_TABLE
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ table[((crc >> 8) ^ b) & 0xFF]
    return crc


def intent_id(name: str) -> int:
    """16-bit wire identifier of an intent or event name.

    Defined as CRC-16/CCITT-FALSE over the UTF-8 bytes of the name. The
    empty name is rejected (its register value would be the 0xFFFF init).
    """
    if not name:
        raise CodecError("invalid_argument", "intent name must be non-empty")
    return crc16_ccitt(name.encode("utf-8"))


# ---------------------------------------------------------------------------
# Header

class Kind(IntEnum):
    CALL = 0x01
    REPLY = 0x02
    EVENT = 0x03
    ERROR = 0x04


@dataclass(frozen=True)
class FrameHeader:
    kind: Kind
    seq: int
    intent_id: int
    dry_run: bool = False
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class Frame:
    header: FrameHeader
    payload: dict
    mac: bytes | None = None


def encode_header(h: FrameHeader) -> bytes:
    """Pack a header into its fixed 6-byte wire form."""
    if h.version != PROTOCOL_VERSION:
        raise CodecError("invalid_argument", f"unsupported version {h.version:#04x}")
    if h.kind not in (Kind.CALL, Kind.REPLY, Kind.EVENT, Kind.ERROR):
        raise CodecError("invalid_argument", f"unknown kind {h.kind!r}")
    if h.dry_run and h.kind is not Kind.CALL:
        raise CodecError("invalid_argument", "dry_run is only valid on calls")
    if not 0 <= h.seq <= 0xFFFF:
        raise CodecError("invalid_argument", f"seq {h.seq} out of 16-bit range")
    if not 0 <= h.intent_id <= 0xFFFF:
        raise CodecError("invalid_argument", f"intent_id {h.intent_id} out of 16-bit range")
    kind_byte = int(h.kind) | (_DRY_RUN_BIT if h.dry_run else 0)
    return struct.pack(">BBHH", h.version, kind_byte, h.seq, h.intent_id)


def decode_header(b: bytes) -> FrameHeader:
    """Inverse of :func:`encode_header`."""
    if len(b) != HEADER_SIZE:
        raise CodecError("bad_frame", f"header must be {HEADER_SIZE} bytes, got {len(b)}")
    version, kind_byte, seq, iid = struct.unpack(">BBHH", b)
    if version != PROTOCOL_VERSION:
        raise CodecError("unsupported_version", f"protocol version {version:#04x}")
    dry_run = bool(kind_byte & _DRY_RUN_BIT)
    code = kind_byte & ~_DRY_RUN_BIT
    if code not in (0x01, 0x02, 0x03, 0x04) or (dry_run and code != 0x01):
        raise CodecError("unknown_kind", f"kind byte {kind_byte:#04x}")
    return FrameHeader(kind=Kind(code), seq=seq, intent_id=iid, dry_run=dry_run)


# ---------------------------------------------------------------------------
# CBOR subset

@dataclass(frozen=True)
class CodecLimits:
    """Host-side caps on payload values; the protocol only says "short"."""
    max_depth: int = 4          # nesting depth, counting the top-level map
    max_key_bytes: int = 23     # single-byte CBOR text header
    max_text_bytes: int = 1024

    def __post_init__(self):
        if self.max_key_bytes > 23:
            raise ValueError("map keys must fit a single-byte CBOR string header")


DEFAULT_LIMITS = CodecLimits()

_INT_MIN = -(2 ** 63)
_INT_MAX = 2 ** 63 - 1


def _uint_head(major: int, n: int) -> bytes:
    """Shortest-form CBOR head for major type ``major`` and argument ``n``."""
    base = major << 5
    if n < 24:
        return bytes([base | n])
    if n < 0x100:
        return bytes([base | 24, n])
    if n < 0x10000:
        return struct.pack(">BH", base | 25, n)
    if n < 0x100000000:
        return struct.pack(">BI", base | 26, n)
    return struct.pack(">BQ", base | 27, n)


def _encode_float(x: float) -> bytes:
    # Shortest IEEE-754 width that preserves the exact value (RFC 8949
    # preferred serialization): half, then single, then double.
    if math.isnan(x):
        return b"\xf9\x7e\x00"
    try:
        half = struct.pack(">e", x)
        if struct.unpack(">e", half)[0] == x:
            return b"\xf9" + half
    except (OverflowError, struct.error):
        pass
    single = struct.pack(">f", x)
    if struct.unpack(">f", single)[0] == x:
        return b"\xfa" + single
    return b"\xfb" + struct.pack(">d", x)


def _encode_value(v, out: bytearray, limits: CodecLimits, allow_arrays: bool,
                  depth: int, path: str) -> None:
    if isinstance(v, bool):  # bool before int: bool is an int subclass
        out.append(0xF5 if v else 0xF4)
    elif isinstance(v, int):
        if not _INT_MIN <= v <= _INT_MAX:
            raise CodecError("encode_error", f"integer {v} outside signed 64-bit range", path=path)
        if v >= 0:
            out += _uint_head(0, v)
        else:
            out += _uint_head(1, -1 - v)
    elif isinstance(v, float):
        out += _encode_float(v)
    elif isinstance(v, str):
        data = v.encode("utf-8")
        if len(data) > limits.max_text_bytes:
            raise CodecError("encode_error",
                             f"text of {len(data)} bytes exceeds cap {limits.max_text_bytes}",
                             path=path)
        out += _uint_head(3, len(data))
        out += data
    elif isinstance(v, dict):
        if depth + 1 > limits.max_depth:
            raise CodecError("encode_error", f"nesting deeper than {limits.max_depth}", path=path)
        items = []
        for k, item in v.items():
            if not isinstance(k, str):
                raise CodecError("encode_error", f"map key {k!r} is not text", path=path)
            kb = k.encode("utf-8")
            if len(kb) > limits.max_key_bytes:
                raise CodecError("encode_error",
                                 f"map key longer than {limits.max_key_bytes} bytes",
                                 path=f"{path}.{k}")
            ib = bytearray()
            _encode_value(item, ib, limits, allow_arrays, depth + 1, f"{path}.{k}")
            items.append((_uint_head(3, len(kb)) + kb, bytes(ib)))
        items.sort(key=lambda kv: kv[0])  # bytewise order over encoded keys
        out += _uint_head(5, len(items))
        for kb, vb in items:
            out += kb
            out += vb
    elif isinstance(v, (list, tuple)):
        if not allow_arrays:
            raise CodecError("encode_error", "arrays are not allowed in this payload", path=path)
        if depth + 1 > limits.max_depth:
            raise CodecError("encode_error", f"nesting deeper than {limits.max_depth}", path=path)
        out += _uint_head(4, len(v))
        for i, item in enumerate(v):
            _encode_value(item, out, limits, allow_arrays, depth + 1, f"{path}[{i}]")
    else:
        raise CodecError("encode_error", f"unsupported payload type {type(v).__name__}", path=path)


def cbor_encode(v, *, limits: CodecLimits = DEFAULT_LIMITS, allow_arrays: bool = False) -> bytes:
    """Deterministically encode a payload value.

    Pure function: structurally equal inputs always produce identical bytes.
    """
    out = bytearray()
    _encode_value(v, out, limits, allow_arrays, 0, "$")
    return bytes(out)


class _Decoder:
    def __init__(self, data: bytes, limits: CodecLimits, allow_arrays: bool):
        self.data = data
        self.pos = 0
        self.limits = limits
        self.allow_arrays = allow_arrays

    def fail(self, message: str) -> CodecError:
        return CodecError("decode_error", message, offset=self.pos)

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise self.fail("truncated input")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def head(self) -> tuple[int, int]:
        ib = self.take(1)[0]
        major, info = ib >> 5, ib & 0x1F
        if info < 24:
            return major, info
        if info == 24:
            return major, self.take(1)[0]
        if info == 25:
            return major, struct.unpack(">H", self.take(2))[0]
        if info == 26:
            return major, struct.unpack(">I", self.take(4))[0]
        if info == 27:
            return major, struct.unpack(">Q", self.take(8))[0]
        if info == 31:
            raise self.fail("indefinite lengths are not in the subset")
        raise self.fail(f"reserved additional info {info}")

    def value(self, depth: int):
        start = self.pos
        major, arg = self.head()
        if major == 0:
            if arg > _INT_MAX:
                raise self.fail(f"integer {arg} outside signed 64-bit range")
            return arg
        if major == 1:
            if arg > _INT_MAX:
                raise self.fail(f"integer -{arg + 1} outside signed 64-bit range")
            return -1 - arg
        if major == 2:
            raise self.fail("byte strings are not in the subset")
        if major == 3:
            if arg > self.limits.max_text_bytes:
                raise self.fail(f"text of {arg} bytes exceeds cap {self.limits.max_text_bytes}")
            raw = self.take(arg)
            try:
                return raw.decode("utf-8")
            except UnicodeDecodeError:
                self.pos = start
                raise self.fail("invalid UTF-8 in text string") from None
        if major == 4:
            if not self.allow_arrays:
                self.pos = start
                raise self.fail("arrays are not accepted in this payload")
            if depth + 1 > self.limits.max_depth:
                raise self.fail(f"nesting deeper than {self.limits.max_depth}")
            return [self.value(depth + 1) for _ in range(arg)]
        if major == 5:
            if depth + 1 > self.limits.max_depth:
                raise self.fail(f"nesting deeper than {self.limits.max_depth}")
            result = {}
            for _ in range(arg):
                key_start = self.pos
                key = self.value(depth + 1)
                if not isinstance(key, str):
                    self.pos = key_start
                    raise self.fail("map keys must be text")
                if len(key.encode("utf-8")) > self.limits.max_key_bytes:
                    self.pos = key_start
                    raise self.fail(f"map key longer than {self.limits.max_key_bytes} bytes")
                if key in result:
                    self.pos = key_start
                    raise self.fail(f"duplicate map key {key!r}")
                result[key] = self.value(depth + 1)
            return result
        if major == 6:
            raise self.fail("tags are not in the subset")
        # major 7: simple values and floats
        info = self.data[start] & 0x1F
        if info == 20:
            return False
        if info == 21:
            return True
        if info == 25:
            return float(struct.unpack(">e", struct.pack(">H", arg))[0])
        if info == 26:
            return float(struct.unpack(">f", struct.pack(">I", arg))[0])
        if info == 27:
            return float(struct.unpack(">d", struct.pack(">Q", arg))[0])
        self.pos = start
        raise self.fail(f"unsupported simple value {info}")


def cbor_decode(b: bytes, *, limits: CodecLimits = DEFAULT_LIMITS, allow_arrays: bool = False):
    """Decode one CBOR subset value; the input must contain exactly one item.

    Accepts any valid-subset encoding, not only the deterministic form, so
    devices with non-canonical encoders interoperate.
    """
    dec = _Decoder(b, limits, allow_arrays)
    v = dec.value(0)
    if dec.pos != len(b):
        raise CodecError("decode_error", "trailing bytes after value", offset=dec.pos)
    return v


# ---------------------------------------------------------------------------
# Whole frames

def assemble_frame(h: FrameHeader, payload: dict, wire_secret: bytes | None = None,
                   *, limits: CodecLimits = DEFAULT_LIMITS) -> bytes:
    """Serialize header + payload, appending a truncated MAC when a wire
    secret is configured. The MAC covers header‖payload only, so it is
    independent of any transport framing."""
    if not isinstance(payload, dict):
        raise CodecError("encode_error", "frame payload must be a map at the top level", path="$")
    body = encode_header(h) + cbor_encode(payload, limits=limits)
    if wire_secret is None:
        return body
    from .crypto import wire_mac
    return body + wire_mac(wire_secret, body)


def parse_frame(b: bytes, wire_secret: bytes | None = None,
                *, limits: CodecLimits = DEFAULT_LIMITS) -> Frame:
    """Parse one frame. With a wire secret, the trailing 16 bytes are
    verified (constant time) before anything else is decoded."""
    min_len = HEADER_SIZE + 1 + (MAC_SIZE if wire_secret is not None else 0)
    if len(b) < min_len:
        raise CodecError("bad_frame", f"frame of {len(b)} bytes is shorter than {min_len}")
    mac = None
    if wire_secret is not None:
        from .crypto import constant_time_eq, wire_mac
        body, mac = b[:-MAC_SIZE], b[-MAC_SIZE:]
        if not constant_time_eq(wire_mac(wire_secret, body), mac):
            raise CodecError("mac_mismatch", "frame MAC does not verify")
    else:
        body = b
    header = decode_header(body[:HEADER_SIZE])
    payload = cbor_decode(body[HEADER_SIZE:], limits=limits)
    if not isinstance(payload, dict):
        raise CodecError("decode_error", "frame payload must be a map at the top level")
    return Frame(header=header, payload=payload, mac=mac)
