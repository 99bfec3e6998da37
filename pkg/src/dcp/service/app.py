"""HTTP bridge service: the long-running, multi-client face of the stack.

One service instance owns one device link (loopback simulator, socket, or
serial). Clients authenticate per request with a bearer capability token;
each request is verified, validated, and only then produces wire bytes.
Error mapping: token problems are 401, a missing capability is 403, an
unknown intent 404, other validation failures 400, device-reported errors
502, timeouts 504, a closed transport 503.

Endpoints:

    GET  /health                liveness + device identity
    GET  /v1/manifest           the manifest in document form
    GET  /v1/manifest/tools     JSON tool schema for LLM hosts
    POST /v1/tokens             issue a capability token (config-gated)
    POST /v1/calls              validate + execute one intent call
    POST /v1/validate           run validation only; never touches the wire
    GET  /v1/events             buffered device events visible to the caller
    POST /v1/sim/emit           make the loopback simulator emit an event
    GET  /v1/stats              transport/framing/link counters
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass

from fastapi import Depends, FastAPI, Header, Request
from fastapi.responses import JSONResponse

from ..bridge import DeviceLink, Session, open_session
from ..crypto import issue_token
from ..devicesim import generic_device, lamp_device
from ..errors import (BridgeError, CallTimeout, DcpError, DeviceError, TokenError,
                      TransportClosed, ValidationError)
from ..fixtures import lamp_study_manifest
from ..manifest import export_tool_schema, load_manifest
from ..safety import CallRequest, validate_call, wire_args
from ..transports import LoopbackTransport, open_transport
from .models import (CallBody, CallResult, EmitBody, ErrorBody, EventRecord,
                     EventsResult, HealthResult, StatsResult, TokenIssueBody,
                     TokenResult, ValidateBody, ValidateResult)


@dataclass
class ServiceConfig:
    bridge_secret: bytes
    manifest_path: str | None = None
    transport: str = "loopback"
    wire_secret: bytes | None = None
    timeout: float = 1.0
    allow_token_issue: bool = True
    max_buffered_events: int = 256


_STATUS = {
    "token_malformed": 401, "token_invalid": 401, "token_expired": 401,
    "capability_required": 403, "unknown_intent": 404,
    "timeout": 504, "transport_closed": 503,
}


def _http_error(err: DcpError) -> JSONResponse:
    if isinstance(err, DeviceError):
        body = ErrorBody(code=err.code, detail=err.msg or err.message)
        return JSONResponse(status_code=502, content=body.model_dump())
    status = _STATUS.get(err.code, 400)
    param = getattr(err, "param", None)
    body = ErrorBody(code=err.code, detail=err.message, param=param)
    return JSONResponse(status_code=status, content=body.model_dump())


def create_app(config: ServiceConfig) -> FastAPI:
    manifest = (load_manifest(config.manifest_path) if config.manifest_path
                else lamp_study_manifest())

    device = None
    if config.transport == "loopback":
        names = {i.name for i in manifest.intents}
        build = lamp_device if {"set_brightness", "read_brightness"} <= names else generic_device
        device = build(manifest, wire_secret=config.wire_secret)
    transport = open_transport(config.transport, device=device)
    link = DeviceLink(manifest, transport, wire_secret=config.wire_secret,
                      timeout=config.timeout)

    # Buffer every event via an internal all-capabilities session; requests
    # then see only the events their own token's capabilities allow.
    events_lock = threading.Lock()
    event_buffer: deque = deque(maxlen=config.max_buffered_events)
    all_caps = {s.capability for s in (*manifest.intents, *manifest.events)}
    if manifest.events:
        internal = Session(link, caps=frozenset(all_caps), expires_at=2 ** 62)
        for ev in manifest.events:
            def _store(payload: dict, _name=ev.name, _cap=ev.capability) -> None:
                with events_lock:
                    event_buffer.append(
                        {"event": _name, "capability": _cap,
                         "payload": payload, "received_at": time.time()})
            internal.subscribe(ev.name, _store)

    started = time.time()
    app = FastAPI(title="dcp bridge", version="0.1.0")
    app.state.link = link

    @app.exception_handler(DcpError)
    async def dcp_error_handler(request: Request, err: DcpError):
        return _http_error(err)

    def session(authorization: str = Header(default="")) -> Session:
        scheme, _, token = authorization.partition(" ")
        if scheme.lower() != "bearer" or not token:
            raise TokenError("token_malformed", "send 'Authorization: Bearer <token>'")
        return open_session(link, token.strip(), config.bridge_secret)

    @app.get("/health", response_model=HealthResult)
    def health():
        return HealthResult(status="ok", device=manifest.device.id,
                            transport=config.transport, uptime_s=time.time() - started)

    @app.get("/v1/manifest")
    def manifest_doc():
        return manifest.to_doc()

    @app.get("/v1/manifest/tools")
    def manifest_tools():
        return export_tool_schema(manifest)

    @app.post("/v1/tokens", response_model=TokenResult)
    def tokens(body: TokenIssueBody):
        if not config.allow_token_issue:
            raise BridgeError("not_supported", "token issuing is disabled on this service")
        now = int(time.time())
        token = issue_token(config.bridge_secret, body.caps, body.ttl_seconds, now)
        return TokenResult(token=token, caps=sorted(set(body.caps)), iat=now,
                           exp=now + body.ttl_seconds)

    @app.post("/v1/calls", response_model=CallResult)
    def calls(body: CallBody, sess: Session = Depends(session)):
        result = sess.call(body.intent, body.args, dry_run=body.dry_run)
        return CallResult(result=result)

    @app.post("/v1/validate", response_model=ValidateResult)
    def validate(body: ValidateBody, authorization: str = Header(default="")):
        if authorization:
            caps = session(authorization).caps
        else:
            caps = frozenset(body.caps or ())
        nc = validate_call(manifest, CallRequest(body.intent, dict(body.args), body.dry_run),
                           caps)
        return ValidateResult(intent=nc.intent.name, normalized_args=nc.args,
                              wire_args=wire_args(nc), dry_run=nc.dry_run)

    @app.get("/v1/events", response_model=EventsResult)
    def events(sess: Session = Depends(session)):
        with events_lock:
            visible = [EventRecord(event=e["event"], payload=e["payload"],
                                   received_at=e["received_at"])
                       for e in event_buffer if e["capability"] in sess.caps]
        return EventsResult(events=visible)

    @app.post("/v1/sim/emit")
    def sim_emit(body: EmitBody):
        if not isinstance(transport, LoopbackTransport):
            raise BridgeError("not_supported",
                              "sim/emit only works on the loopback transport")
        transport.emit_from_device(body.event, body.payload)
        return {"ok": True}

    @app.get("/v1/stats", response_model=StatsResult)
    def stats():
        return StatsResult(transport=transport.stats(), framing=link.framer.stats.to_dict(),
                           link=link.stats.to_dict())

    return app
