"""Independent reference implementations used only to cross-check the codec.

Everything here is deliberately written as a different construction from
the code under test (bit-at-a-time instead of table-driven CRC, split-based
instead of streaming COBS, a separately structured CBOR serializer), so a
slip in the production path cannot be reproduced by its own oracle.
"""

from __future__ import annotations

import math
import struct


def crc16_bitwise(data: bytes) -> int:
    """CRC-16/CCITT-FALSE, one bit at a time straight from the definition:
    polynomial 0x1021, init 0xFFFF, no reflection, xor-out 0x0000."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


def cobs_reference_encode(data: bytes) -> bytes:
    """COBS via the canonical description: split on zeros, emit each block
    as (length+1, bytes), splitting runs longer than 254 bytes."""
    blocks: list[bytes] = []
    current = bytearray()
    for byte in data:
        if byte == 0:
            blocks.append(bytes(current))
            current.clear()
        else:
            current.append(byte)
    blocks.append(bytes(current))

    out = bytearray()
    for block in blocks:
        while len(block) >= 254:
            out.append(0xFF)  # full block: no implicit zero follows
            out += block[:254]
            block = block[254:]
        out.append(len(block) + 1)
        out += block
    return bytes(out)


def _cbor_head(major: int, value: int) -> bytes:
    if value < 24:
        return struct.pack("B", (major << 5) | value)
    for info, fmt in ((24, "B"), (25, ">H"), (26, ">I"), (27, ">Q")):
        if value < 2 ** (8 * struct.calcsize(fmt.lstrip(">"))):
            return struct.pack("B", (major << 5) | info) + struct.pack(fmt, value)
    raise ValueError("value too large")


def _cbor_float(value: float) -> bytes:
    if math.isnan(value):
        return bytes.fromhex("f97e00")
    for prefix, fmt in ((0xF9, ">e"), (0xFA, ">f"), (0xFB, ">d")):
        try:
            packed = struct.pack(fmt, value)
        except (OverflowError, struct.error):
            continue
        if struct.unpack(fmt, packed)[0] == value:
            return struct.pack("B", prefix) + packed
    raise AssertionError("unreachable: binary64 always round-trips")


def cbor_oracle_encode(value) -> bytes:
    """Deterministic CBOR for the protocol subset, written independently:
    shortest integer heads, shortest exact float, text as UTF-8, maps with
    entries ordered by their encoded key bytes. Arrays allowed (the token
    payload uses them); everything else is out of scope here."""
    if value is True:
        return b"\xf5"
    if value is False:
        return b"\xf4"
    if isinstance(value, int):
        if value >= 0:
            return _cbor_head(0, value)
        return _cbor_head(1, -value - 1)
    if isinstance(value, float):
        return _cbor_float(value)
    if isinstance(value, str):
        raw = value.encode("utf-8")
        return _cbor_head(3, len(raw)) + raw
    if isinstance(value, (list, tuple)):
        return _cbor_head(4, len(value)) + b"".join(cbor_oracle_encode(v) for v in value)
    if isinstance(value, dict):
        entries = sorted(((cbor_oracle_encode(str(k)), cbor_oracle_encode(v))
                          for k, v in value.items()), key=lambda e: e[0])
        return _cbor_head(5, len(value)) + b"".join(k + v for k, v in entries)
    raise TypeError(f"oracle cannot encode {type(value).__name__}")
