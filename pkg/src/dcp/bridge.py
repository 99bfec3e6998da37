"""The Bridge: the sole trust boundary between an LLM-shaped caller and a
device.

A :class:`DeviceLink` owns one manifest, one transport, one framer, and the
sequence-number space for in-flight calls. A :class:`Session` is a verified
capability token bound to a link; every call through a session re-checks
token expiry, runs the full validation pipeline, and only then produces
wire bytes — a rejected call leaves the transport byte counters untouched.

Calls block the calling thread until the matching reply or error frame
arrives (correlation is by sequence number) or the timeout elapses. Multiple
sessions may call concurrently against one link; the pending map is
internally synchronized and the number of in-flight calls is bounded.
Idempotent intents may optionally be retried once on timeout; non-idempotent
intents never are.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Callable

from .codec import Frame, FrameHeader, Kind, assemble_frame, parse_frame
from .crypto import verify_token
from .errors import (BridgeError, CallTimeout, CodecError, DeviceError, TokenError,
                     TransportClosed, ValidationError)
from .framing import StreamDecoder, wrap
from .manifest import EventSpec, Manifest, ParamCheckFailure
from .safety import CallRequest, NormalizedCall, validate_call, wire_args
from .transports import LoopbackTransport, Transport

DEFAULT_TIMEOUT = 1.0
DEFAULT_MAX_IN_FLIGHT = 32


@dataclass
class LinkStats:
    calls_sent: int = 0
    replies_matched: int = 0
    device_errors: int = 0
    timeouts: int = 0
    retries: int = 0
    unsolicited_dropped: int = 0
    mac_failures: int = 0
    decode_failures: int = 0
    events_delivered: int = 0
    invalid_events_dropped: int = 0

    def to_dict(self) -> dict:
        return dict(vars(self))


class _Pending:
    __slots__ = ("done", "frame")

    def __init__(self):
        self.done = threading.Event()
        self.frame: Frame | None = None


@dataclass
class _Subscription:
    event: EventSpec
    callback: Callable[[dict], None]
    active: bool = True

    def cancel(self) -> None:
        self.active = False


class DeviceLink:
    def __init__(self, manifest: Manifest, transport: Transport, *,
                 wire_secret: bytes | None = None,
                 timeout: float = DEFAULT_TIMEOUT,
                 max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
                 retry_idempotent: bool = False,
                 max_chunk: int = 1024,
                 clock: Callable[[], float] = time.time):
        self.manifest = manifest
        self.transport = transport
        self.wire_secret = wire_secret
        self.timeout = timeout
        self.retry_idempotent = retry_idempotent
        self.max_chunk = max_chunk
        self.clock = clock
        self.framer = StreamDecoder(max_chunk)
        self.stats = LinkStats()
        self._lock = threading.Lock()
        self._pending: dict[int, _Pending] = {}
        self._next_seq = 0
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._subs: dict[int, list[_Subscription]] = {}
        self._closed = False
        transport.set_receiver(self._on_chunk, self._on_transport_close)

    # -- receive path -------------------------------------------------------

    def _on_chunk(self, chunk: bytes) -> None:
        for frame_bytes in self.framer.feed(chunk):
            self._on_frame(frame_bytes)

    def _on_frame(self, frame_bytes: bytes) -> None:
        try:
            frame = parse_frame(frame_bytes, self.wire_secret)
        except CodecError as err:
            if err.code == "mac_mismatch":
                self.stats.mac_failures += 1
            else:
                self.stats.decode_failures += 1
            return
        kind = frame.header.kind
        if kind in (Kind.REPLY, Kind.ERROR):
            with self._lock:
                pending = self._pending.get(frame.header.seq)
            if pending is None:
                self.stats.unsolicited_dropped += 1
                return
            pending.frame = frame
            pending.done.set()
        elif kind is Kind.EVENT:
            self._dispatch_event(frame)
        else:
            self.stats.unsolicited_dropped += 1

    def _dispatch_event(self, frame: Frame) -> None:
        with self._lock:
            subs = [s for s in self._subs.get(frame.header.intent_id, []) if s.active]
        if not subs:
            return
        spec = subs[0].event
        checked = {}
        try:
            declared = {p.name for p in spec.payload}
            if set(frame.payload) - declared:
                raise ParamCheckFailure("type_mismatch", "undeclared event keys")
            for p in spec.payload:
                checked[p.name] = p.check(frame.payload[p.name])
        except (ParamCheckFailure, KeyError):
            self.stats.invalid_events_dropped += 1
            return
        self.stats.events_delivered += 1
        for sub in subs:
            sub.callback(dict(checked))

    def _on_transport_close(self) -> None:
        with self._lock:
            self._closed = True
            pendings = list(self._pending.values())
        for p in pendings:
            p.done.set()  # wakes the caller; it finds no frame and reports closed

    # -- send path ------------------------------------------------------------

    def _alloc_seq(self, pending: _Pending) -> int:
        with self._lock:
            if self._closed:
                raise TransportClosed()
            for _ in range(0x10000):
                seq = self._next_seq
                self._next_seq = (self._next_seq + 1) & 0xFFFF
                if seq not in self._pending:
                    self._pending[seq] = pending
                    return seq
            raise BridgeError("seq_exhausted", "all 65536 sequence numbers are pending")

    def request(self, nc: NormalizedCall) -> dict:
        """Send one validated call; returns the reply payload map."""
        payload = wire_args(nc)
        attempts = 2 if (self.retry_idempotent and nc.intent.idempotent) else 1
        with self._slots:
            for attempt in range(attempts):
                pending = _Pending()
                seq = self._alloc_seq(pending)
                header = FrameHeader(kind=Kind.CALL, seq=seq, intent_id=nc.intent.id,
                                     dry_run=nc.dry_run)
                chunk = wrap(assemble_frame(header, payload, self.wire_secret), self.max_chunk)
                try:
                    self.transport.send(chunk)
                    self.stats.calls_sent += 1
                    pending.done.wait(self.timeout)
                finally:
                    with self._lock:
                        self._pending.pop(seq, None)
                if pending.frame is not None:
                    return self._resolve(pending.frame)
                if self._closed or self.transport.closed:
                    raise TransportClosed()
                self.stats.timeouts += 1
                if attempt + 1 < attempts:
                    self.stats.retries += 1
        raise CallTimeout()

    def _resolve(self, frame: Frame) -> dict:
        if frame.header.kind is Kind.ERROR:
            self.stats.device_errors += 1
            code = frame.payload.get("code", "internal")
            msg = frame.payload.get("msg")
            raise DeviceError(code if isinstance(code, str) else "internal",
                              msg if isinstance(msg, str) else None)
        self.stats.replies_matched += 1
        return frame.payload

    def add_subscription(self, spec: EventSpec, callback: Callable[[dict], None]) -> _Subscription:
        sub = _Subscription(event=spec, callback=callback)
        with self._lock:
            self._subs.setdefault(spec.id, []).append(sub)
        return sub

    def close(self) -> None:
        self.transport.close()


class Session:
    """A verified token bound to a link. Expiry is re-checked on every call."""

    def __init__(self, link: DeviceLink, caps: frozenset[str], expires_at: int):
        self.link = link
        self.caps = caps
        self.expires_at = expires_at

    def _check_expiry(self, now: float | None) -> None:
        now = self.link.clock() if now is None else now
        if now >= self.expires_at:
            raise TokenError("token_expired", "session token has expired")

    def call(self, intent: str, args: dict | None = None, *, dry_run: bool = False,
             now: float | None = None):
        """Validate, send, and wait for the reply. Raises ValidationError
        before anything is transmitted; returns the declared result value,
        or the full reply map for intents without a declared return."""
        self._check_expiry(now)
        req = CallRequest(intent=intent, args=dict(args or {}), dry_run=dry_run)
        nc = validate_call(self.link.manifest, req, self.caps)
        reply = self.link.request(nc)
        if nc.intent.returns is not None:
            if "value" not in reply:
                raise BridgeError("bad_reply", f"reply to {intent!r} lacks its declared value")
            return reply["value"]
        return reply

    def dry_run(self, intent: str, args: dict | None = None, *, now: float | None = None):
        """Ask the device for a predicted result with no state change."""
        return self.call(intent, args, dry_run=True, now=now)

    def subscribe(self, event: str, callback: Callable[[dict], None],
                  *, now: float | None = None) -> _Subscription:
        """Deliver validated payloads of ``event`` to ``callback``. The
        callback runs on the link's receive context and must not block."""
        self._check_expiry(now)
        spec = self.link.manifest.by_name.get(event)
        if not isinstance(spec, EventSpec):
            raise ValidationError("unknown_intent", f"no event named {event!r}")
        if spec.capability not in self.caps:
            raise ValidationError("capability_required",
                                  f"event {event!r} requires capability {spec.capability!r}")
        return self.link.add_subscription(spec, callback)


def open_session(link: DeviceLink, token: str, bridge_secret: bytes,
                 now: float | None = None) -> Session:
    """Verify a bearer token and bind its capability set to the link."""
    now = link.clock() if now is None else now
    verified = verify_token(bridge_secret, token, int(now))
    return Session(link=link, caps=verified.caps, expires_at=verified.exp)


def loopback_link(manifest: Manifest, device, *, wire_secret: bytes | None = None,
                  device_secret: bytes | None = ...,
                  **link_kwargs) -> DeviceLink:
    """An in-process link to a simulator: the full validate/encode/wrap →
    device → unwrap/decode path runs synchronously, with no OS I/O.

    The device normally shares the link's wire secret; pass
    ``device_secret`` explicitly to simulate misconfiguration.
    """
    if device_secret is ...:
        device_secret = wire_secret
    device.wire_secret = device_secret
    transport = LoopbackTransport(device, max_chunk=link_kwargs.get("max_chunk", 1024))
    return DeviceLink(manifest, transport, wire_secret=wire_secret, **link_kwargs)
