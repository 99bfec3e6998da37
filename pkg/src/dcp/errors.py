"""Exception hierarchy shared across the DCP host stack.

Every error carries a short machine-readable ``code`` (underscore style,
e.g. ``mac_mismatch``) plus a human-readable message. The code is what
ends up in JSON output and error frames; the message is for people.
"""

from __future__ import annotations


class DcpError(Exception):
    """Base class for all protocol-stack errors."""

    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message
        super().__init__(f"[{code}] {message}")

    def to_dict(self) -> dict:
        return {"code": self.code, "detail": self.message}


class CodecError(DcpError):
    """Frame or CBOR encode/decode failure.

    Codes: invalid_argument, bad_frame, unsupported_version, unknown_kind,
    encode_error, decode_error, mac_mismatch. ``path`` locates the offending
    value on encode; ``offset`` is the byte position on decode.
    """

    def __init__(self, code: str, message: str, *, path: str | None = None,
                 offset: int | None = None):
        self.path = path
        self.offset = offset
        if path is not None:
            message = f"{message} (at {path})"
        if offset is not None:
            message = f"{message} (byte {offset})"
        super().__init__(code, message)


class FramingError(DcpError):
    """COBS/CRC framing failure. Codes: cobs_error, oversize."""


class CryptoError(DcpError):
    """Bad arguments to a crypto operation (empty secret, bad capability)."""


class TokenError(DcpError):
    """Capability-token failure.

    Codes: token_malformed (bad base64/CBOR/shape), token_invalid
    (signature), token_expired (outside the validity window).
    """


class ManifestError(DcpError):
    """Manifest parse/validation failure.

    Codes: yaml_error, unsupported_version, duplicate_name, crc_collision,
    invalid_param, invalid_capability, unknown_key, invalid_manifest,
    not_found. ``path`` points into the document, e.g.
    ``intents[0].params.level.range``.
    """

    def __init__(self, code: str, message: str, *, path: str | None = None):
        self.path = path
        if path is not None:
            message = f"{message} (at {path})"
        super().__init__(code, message)


class ValidationError(DcpError):
    """Host-side rejection of a tool call, produced before any wire bytes.

    ``code`` is from the closed set: unknown_intent, capability_required,
    unknown_param, missing_param, type_mismatch, out_of_range,
    pattern_violation, too_long, dry_run_unsupported.
    """

    CODES = frozenset({
        "unknown_intent", "capability_required", "unknown_param",
        "missing_param", "type_mismatch", "out_of_range",
        "pattern_violation", "too_long", "dry_run_unsupported",
    })

    def __init__(self, code: str, detail: str, param: str | None = None):
        assert code in self.CODES, f"not a validation code: {code}"
        self.param = param
        super().__init__(code, detail)

    def to_dict(self) -> dict:
        return {"code": self.code, "detail": self.message, "param": self.param}


class DeviceError(DcpError):
    """An error frame (kind 0x04) returned by the device."""

    def __init__(self, code: str, msg: str | None = None):
        self.msg = msg
        super().__init__(code, msg or "device reported an error")


class BridgeError(DcpError):
    """Bridge transport/session failure. Codes: timeout, transport_closed,
    seq_exhausted, bad_reply, not_supported."""


class CallTimeout(BridgeError):
    def __init__(self, message: str = "no reply from device within the timeout"):
        super().__init__("timeout", message)


class TransportClosed(BridgeError):
    def __init__(self, message: str = "transport is closed"):
        super().__init__("transport_closed", message)
