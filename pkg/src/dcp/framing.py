"""Serial framing: COBS byte stuffing with a CRC-16 trailer.

On a raw byte stream (UART, USB-CDC, a TCP socket carrying serial traffic)
frame boundaries must be restored. Each frame travels as::

    cobs_encode(frame_bytes ‖ crc16_ccitt(frame_bytes) as 2 bytes BE) ‖ 0x00

COBS output contains no zero bytes, so 0x00 unambiguously delimits chunks
and a receiver can resynchronize after arbitrary garbage. The CRC covers
the raw frame bytes (header ‖ payload ‖ optional MAC) before stuffing.
"""

from __future__ import annotations

from dataclasses import dataclass

from .codec import crc16_ccitt
from .errors import FramingError

DELIMITER = 0x00
DEFAULT_MAX_CHUNK = 1024  # cap on one encoded chunk between delimiters


def cobs_encode(data: bytes, max_len: int | None = DEFAULT_MAX_CHUNK) -> bytes:
    """Consistent-overhead byte stuffing: output contains no 0x00 byte."""
    if max_len is not None and len(data) > max_len:
        raise FramingError("oversize", f"{len(data)} bytes exceeds chunk cap {max_len}")
    out = bytearray()
    block = bytearray()
    for b in data:
        if b == 0:
            out.append(len(block) + 1)
            out += block
            block.clear()
        else:
            block.append(b)
            if len(block) == 254:
                out.append(0xFF)
                out += block
                block.clear()
    out.append(len(block) + 1)
    out += block
    return bytes(out)


def cobs_decode(data: bytes) -> bytes:
    """Inverse of :func:`cobs_encode`; rejects embedded zeros and overruns."""
    if not data:
        raise FramingError("cobs_error", "empty chunk")
    out = bytearray()
    i = 0
    while i < len(data):
        code = data[i]
        if code == 0:
            raise FramingError("cobs_error", f"embedded zero at offset {i}")
        i += 1
        end = i + code - 1
        if end > len(data):
            raise FramingError("cobs_error", "code byte overruns the chunk")
        block = data[i:end]
        if 0 in block:
            raise FramingError("cobs_error", "embedded zero inside a block")
        out += block
        i = end
        if code != 0xFF and i < len(data):
            out.append(0)
    return bytes(out)


def wrap(frame_bytes: bytes, max_chunk: int = DEFAULT_MAX_CHUNK) -> bytes:
    """Frame bytes -> one delimited wire chunk (COBS(frame‖crc16 BE)‖0x00)."""
    if not frame_bytes:
        raise FramingError("cobs_error", "cannot wrap an empty frame")
    crc = crc16_ccitt(frame_bytes)
    encoded = cobs_encode(frame_bytes + crc.to_bytes(2, "big"), max_len=None)
    if len(encoded) > max_chunk:
        raise FramingError("oversize", f"encoded chunk of {len(encoded)} bytes exceeds {max_chunk}")
    return encoded + bytes([DELIMITER])


def unwrap(chunk: bytes) -> bytes:
    """One delimited chunk (with or without its trailing 0x00) -> frame bytes."""
    if chunk and chunk[-1] == DELIMITER:
        chunk = chunk[:-1]
    decoded = cobs_decode(chunk)
    if len(decoded) < 3:
        raise FramingError("cobs_error", "chunk too short to hold a frame and CRC")
    body, trailer = decoded[:-2], decoded[-2:]
    if crc16_ccitt(body) != int.from_bytes(trailer, "big"):
        raise FramingError("crc_failure", "frame CRC does not match")
    return body


@dataclass
class FramerStats:
    frames_ok: int = 0
    crc_failures: int = 0
    cobs_errors: int = 0
    oversize_drops: int = 0

    def to_dict(self) -> dict:
        return {"frames_ok": self.frames_ok, "crc_failures": self.crc_failures,
                "cobs_errors": self.cobs_errors, "oversize_drops": self.oversize_drops}


class StreamDecoder:
    """Incremental frame extractor over arbitrarily chunked input.

    Feed it bytes as they arrive; it emits each delimited, COBS-valid,
    CRC-valid frame exactly once, in arrival order, regardless of how the
    input was split into chunks. Malformed chunks are dropped and counted,
    never raised. Single-owner mutable state: one decoder per connection.
    """

    def __init__(self, max_chunk: int = DEFAULT_MAX_CHUNK):
        self.max_chunk = max_chunk
        self.stats = FramerStats()
        self._buf = bytearray()
        self._skipping = False  # discarding an oversize run until the next delimiter

    def feed(self, chunk: bytes) -> list[bytes]:
        frames = []
        self._buf += chunk
        while True:
            idx = self._buf.find(DELIMITER)
            if idx < 0:
                if self._skipping:
                    self._buf.clear()
                elif len(self._buf) > self.max_chunk:
                    self.stats.oversize_drops += 1
                    self._buf.clear()
                    self._skipping = True
                break
            segment = bytes(self._buf[:idx])
            del self._buf[:idx + 1]
            if self._skipping:
                self._skipping = False
                continue
            if not segment:
                continue  # leading delimiter / line noise
            if len(segment) > self.max_chunk:
                self.stats.oversize_drops += 1
                continue
            try:
                frame = unwrap(segment)
            except FramingError as err:
                if err.code == "crc_failure":
                    self.stats.crc_failures += 1
                else:
                    self.stats.cobs_errors += 1
                continue
            frames.append(frame)
            self.stats.frames_ok += 1
        return frames
