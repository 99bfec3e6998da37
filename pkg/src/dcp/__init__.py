"""Device Context Protocol host stack.

Layers, bottom to top: ``codec`` (frames + restricted CBOR), ``framing``
(COBS + CRC byte streams), ``crypto`` (SHA-256/HMAC, wire MACs, capability
tokens), ``manifest`` (device declarations), ``safety`` (call validation),
``bridge`` (sessions, transports, correlation), ``devicesim`` (virtual
firmware), plus ``conformance`` and ``corpus`` tooling, a ``cli`` and a
FastAPI ``service``.
"""

from .bridge import DeviceLink, Session, loopback_link, open_session
from .codec import (Frame, FrameHeader, Kind, assemble_frame, cbor_decode, cbor_encode,
                    crc16_ccitt, decode_header, encode_header, intent_id, parse_frame)
from .crypto import (CapabilityToken, hmac_sha256, issue_token, sha256, verify_token,
                     wire_mac)
from .devicesim import VirtualDevice, generic_device, lamp_device
from .errors import (BridgeError, CallTimeout, CodecError, CryptoError, DcpError,
                     DeviceError, FramingError, ManifestError, TokenError,
                     TransportClosed, ValidationError)
from .framing import StreamDecoder, cobs_decode, cobs_encode, unwrap, wrap
from .manifest import (EventSpec, IntentSpec, Manifest, ParamSpec, export_tool_schema,
                       load_manifest, parse_manifest)
from .safety import CallRequest, NormalizedCall, validate_call, wire_args

__version__ = "0.1.0"

__all__ = [
    "BridgeError", "CallRequest", "CallTimeout", "CapabilityToken", "CodecError",
    "CryptoError", "DcpError", "DeviceError", "DeviceLink", "EventSpec", "Frame",
    "FrameHeader", "FramingError", "IntentSpec", "Kind", "Manifest", "ManifestError",
    "NormalizedCall", "ParamSpec", "Session", "StreamDecoder", "TokenError",
    "TransportClosed", "ValidationError", "VirtualDevice", "assemble_frame",
    "cbor_decode", "cbor_encode", "cobs_decode", "cobs_encode", "crc16_ccitt",
    "decode_header", "encode_header", "export_tool_schema", "generic_device",
    "hmac_sha256", "intent_id", "issue_token", "lamp_device", "load_manifest",
    "loopback_link", "open_session", "parse_frame", "parse_manifest", "sha256",
    "unwrap", "validate_call", "verify_token", "wire_args", "wire_mac", "wrap",
]
