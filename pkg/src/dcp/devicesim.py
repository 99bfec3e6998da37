"""Firmware-equivalent virtual device: byte-compatible with real hardware.

A :class:`VirtualDevice` consumes one unwrapped frame at a time (the
transport/harness owns COBS framing), dispatches on the 16-bit intent id,
honors the dry-run bit, and produces reply or error frames. It mirrors the
trust model of the real firmware: any frame on the wire is assumed to be
pre-authorized by the Bridge, so it does not re-run range checks — but it
defends minimally, answering a missing key or a wrong CBOR type with a
``bad_payload`` error frame instead of crashing.

With a wire secret configured, a frame whose MAC fails verification is
dropped silently (no error frame): on a shared medium, failure signaling
would hand an attacker a MAC oracle. The host experiences a timeout.

A device is single-owner state processing one frame at a time, like a
single-threaded MCU loop; run many devices in parallel, not one device from
many threads.
"""

from __future__ import annotations

import socket
import threading
from typing import Callable

from .codec import (HEADER_SIZE, MAC_SIZE, FrameHeader, Kind, assemble_frame,
                    cbor_decode, decode_header)
from .crypto import constant_time_eq, wire_mac
from .errors import CodecError, DcpError, ValidationError
from .framing import StreamDecoder, wrap
from .manifest import EventSpec, IntentSpec, Manifest, ParamCheckFailure

# handler(args, dry_run) -> result; raise DeviceFault for an error frame
IntentHandler = Callable[[dict, bool], object]


class DeviceFault(Exception):
    """Raised by a handler to produce an error frame with a specific code."""

    def __init__(self, code: str, msg: str | None = None):
        self.code = code
        self.msg = msg
        super().__init__(msg or code)


class VirtualDevice:
    def __init__(self, manifest: Manifest, handlers: dict[str, IntentHandler],
                 *, wire_secret: bytes | None = None):
        missing = [i.name for i in manifest.intents if i.name not in handlers]
        if missing:
            raise DcpError("missing_handler", f"no handler registered for {missing}")
        unknown = [n for n in handlers if not isinstance(manifest.by_name.get(n), IntentSpec)]
        if unknown:
            raise DcpError("missing_handler", f"handlers for undeclared intents {unknown}")
        self.manifest = manifest
        self.wire_secret = wire_secret
        self.state: dict = {}
        self._handlers = {manifest.by_name[n].id: h for n, h in handlers.items()}
        self._event_seq = 0
        self.dropped_bad_mac = 0
        self.dropped_undecodable = 0

    # -- frame processing ---------------------------------------------------

    def process(self, frame_bytes: bytes) -> bytes | None:
        """Handle one frame; returns reply/error frame bytes, or None when the
        frame is dropped (bad MAC, undecodable header, non-call kind)."""
        body = frame_bytes
        if self.wire_secret is not None:
            if len(body) < HEADER_SIZE + 1 + MAC_SIZE:
                self.dropped_undecodable += 1
                return None
            body, mac = body[:-MAC_SIZE], body[-MAC_SIZE:]
            if not constant_time_eq(wire_mac(self.wire_secret, body), mac):
                self.dropped_bad_mac += 1
                return None  # silent: never reveal MAC failures on the wire
        try:
            header = decode_header(body[:HEADER_SIZE])
        except CodecError:
            self.dropped_undecodable += 1
            return None
        if header.kind is not Kind.CALL:
            self.dropped_undecodable += 1
            return None

        try:
            payload = cbor_decode(body[HEADER_SIZE:])
            if not isinstance(payload, dict):
                raise CodecError("decode_error", "payload must be a map")
        except CodecError as err:
            return self._error(header, "bad_payload", err.message)

        spec = self.manifest.by_id.get(header.intent_id)
        if not isinstance(spec, IntentSpec) or header.intent_id not in self._handlers:
            return self._error(header, "unknown_intent")
        if header.dry_run and not spec.dry_run:
            return self._error(header, "dry_run_unsupported")

        try:
            args = self._gather_args(spec, payload)
        except DeviceFault as fault:
            return self._error(header, fault.code, fault.msg)

        try:
            result = self._handlers[header.intent_id](args, header.dry_run)
        except DeviceFault as fault:
            return self._error(header, fault.code, fault.msg)
        except Exception as exc:  # a buggy handler must not kill the loop
            return self._error(header, "internal", f"{type(exc).__name__}: {exc}")

        if spec.returns is not None:
            reply = {"value": result}
        elif isinstance(result, dict):
            reply = result
        elif result is None:
            reply = {}
        else:
            reply = {"value": result}
        try:
            return self._reply(header, reply)
        except CodecError as err:
            return self._error(header, "internal", f"unencodable reply: {err.message}")

    def _gather_args(self, spec: IntentSpec, payload: dict) -> dict:
        # Trusts the Bridge for ranges; only shape and CBOR type are checked.
        args = {}
        for p in spec.params:
            if p.name in payload:
                value = payload[p.name]
            elif p.has_default:
                value = p.default  # same defaults as the host: elision symmetry
            else:
                raise DeviceFault("bad_payload", f"missing parameter {p.name!r}")
            args[p.name] = self._coerce(p.type, p.name, value)
        return args

    @staticmethod
    def _coerce(ptype: str, name: str, value):
        if ptype == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise DeviceFault("bad_payload", f"parameter {name!r} has the wrong type")
            return float(value)
        if ptype in ("int", "duration"):
            if isinstance(value, bool) or not isinstance(value, int):
                raise DeviceFault("bad_payload", f"parameter {name!r} has the wrong type")
        elif ptype == "bool" and not isinstance(value, bool):
            raise DeviceFault("bad_payload", f"parameter {name!r} has the wrong type")
        elif ptype == "string" and not isinstance(value, str):
            raise DeviceFault("bad_payload", f"parameter {name!r} has the wrong type")
        return value

    def _reply(self, req: FrameHeader, payload: dict) -> bytes:
        header = FrameHeader(kind=Kind.REPLY, seq=req.seq, intent_id=req.intent_id)
        return assemble_frame(header, payload, self.wire_secret)

    def _error(self, req: FrameHeader, code: str, msg: str | None = None) -> bytes:
        payload = {"code": code}
        if msg:
            payload["msg"] = msg[:200]
        header = FrameHeader(kind=Kind.ERROR, seq=req.seq, intent_id=req.intent_id)
        return assemble_frame(header, payload, self.wire_secret)

    # -- events ---------------------------------------------------------------

    def emit_event(self, event: str, payload: dict) -> bytes:
        """Build an event frame; the device validates its own payload before
        anything hits the wire (range rules apply to events too)."""
        spec = self.manifest.by_name.get(event)
        if not isinstance(spec, EventSpec):
            raise ValidationError("unknown_intent", f"no event named {event!r}")
        declared = {p.name for p in spec.payload}
        for key in payload:
            if key not in declared:
                raise ValidationError("unknown_param", f"event {event!r} declares no {key!r}",
                                      param=key)
        checked = {}
        for p in spec.payload:
            if p.name not in payload:
                raise ValidationError("missing_param", f"event payload lacks {p.name!r}",
                                      param=p.name)
            try:
                checked[p.name] = p.check(payload[p.name])
            except ParamCheckFailure as err:
                raise ValidationError(err.kind, f"event parameter {p.name!r}: {err.detail}",
                                      param=p.name) from None
        header = FrameHeader(kind=Kind.EVENT, seq=self._event_seq, intent_id=spec.id)
        self._event_seq = (self._event_seq + 1) & 0xFFFF
        return assemble_frame(header, checked, self.wire_secret)


# ---------------------------------------------------------------------------
# Ready-made devices

def lamp_device(manifest: Manifest | None = None, *, wire_secret: bytes | None = None) -> VirtualDevice:
    """The smart-lamp test rig: set_brightness / read_brightness / set_label /
    reboot, with state {brightness, label}. Fade is accepted and simulated as
    a zero-cost delay."""
    from .fixtures import lamp_study_manifest

    manifest = manifest or lamp_study_manifest()
    state = {"brightness": 0.0, "label": ""}

    def set_brightness(args, dry_run):
        level = float(args["level"])
        if not dry_run:
            state["brightness"] = level
        return {"level": level}

    def read_brightness(args, dry_run):
        return state["brightness"]

    def set_label(args, dry_run):
        if not dry_run:
            state["label"] = args["text"]
        return {}

    def reboot(args, dry_run):
        state.update(brightness=0.0, label="")
        return {}

    handlers = {"set_brightness": set_brightness, "read_brightness": read_brightness}
    if "set_label" in manifest.by_name:
        handlers["set_label"] = set_label
    if "reboot" in manifest.by_name:
        handlers["reboot"] = reboot
    device = VirtualDevice(manifest, handlers, wire_secret=wire_secret)
    device.state = state
    return device


def generic_device(manifest: Manifest, *, wire_secret: bytes | None = None) -> VirtualDevice:
    """Hardware-free stand-in for any manifest: every intent echoes its
    (defaulted) arguments; intents with a declared return yield that type's
    zero value. Useful for driving arbitrary manifests without handlers."""
    zeros = {"float": 0.0, "int": 0, "duration": 0, "bool": False, "string": ""}

    def handler_for(spec: IntentSpec) -> IntentHandler:
        def handler(args, dry_run):
            if spec.returns is not None:
                return zeros[spec.returns.type]
            return dict(args)
        return handler

    handlers = {i.name: handler_for(i) for i in manifest.intents}
    return VirtualDevice(manifest, handlers, wire_secret=wire_secret)


# ---------------------------------------------------------------------------
# Socket binding, so the bridge's byte-stream transport can talk to a
# simulated device exactly as it would to hardware behind a serial port.

class DeviceServer:
    """Serve one VirtualDevice over TCP, one connection at a time."""

    def __init__(self, device: VirtualDevice, host: str = "127.0.0.1", port: int = 0,
                 max_chunk: int = 1024):
        self.device = device
        self.max_chunk = max_chunk
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(1)
        self.address = self._sock.getsockname()
        self._closing = False
        self._thread: threading.Thread | None = None

    def serve_forever(self) -> None:
        while not self._closing:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            with conn:
                self._serve_connection(conn)

    def _serve_connection(self, conn: socket.socket) -> None:
        framer = StreamDecoder(self.max_chunk)
        while not self._closing:
            try:
                chunk = conn.recv(4096)
            except OSError:
                return
            if not chunk:
                return
            for frame in framer.feed(chunk):
                reply = self.device.process(frame)
                if reply is not None:
                    try:
                        conn.sendall(wrap(reply, self.max_chunk))
                    except OSError:
                        return

    def start(self) -> "DeviceServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def close(self) -> None:
        self._closing = True
        try:
            self._sock.close()
        except OSError:
            pass
