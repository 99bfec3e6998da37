"""``dcp`` command line: manifest, frame, token, conformance, device,
call, corpus, bench, and serve subcommands.

Every subcommand is scriptable: ``--format json`` yields machine-readable
output, nothing prompts, usage errors exit 2, validation/device errors exit
1 with structured detail. Secrets are given as hex (inline or ``@file``) or
via DCP_BRIDGE_SECRET / DCP_WIRE_SECRET environment variables.

Device-facing commands run against a transport spec (``loopback``,
``sim-socket:HOST:PORT``, ``serial:PATH[:BAUD]``) or, with ``--server URL``,
act as thin clients of a running ``dcp serve`` instance.
"""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click

from . import corpus as corpus_mod
from .bench import run_loopback_bench
from .bridge import DeviceLink, Session, open_session
from .codec import FrameHeader, Kind, assemble_frame, intent_id, parse_frame
from .conformance import run_conformance
from .crypto import inspect_token, issue_token, verify_token
from .devicesim import DeviceServer, generic_device, lamp_device
from .errors import DcpError, ValidationError
from .fixtures import lamp_study_manifest
from .manifest import export_tool_schema, load_manifest
from .transports import open_transport

_KINDS = {"call": Kind.CALL, "reply": Kind.REPLY, "event": Kind.EVENT, "error": Kind.ERROR}


def _resolve_secret(value: str | None, env_var: str) -> bytes | None:
    value = value or os.environ.get(env_var)
    if not value:
        return None
    if value.startswith("@"):
        value = Path(value[1:]).read_text(encoding="utf-8").strip()
    try:
        return bytes.fromhex(value)
    except ValueError:
        raise click.UsageError(f"secret must be hex (or @file of hex), got {value!r}")


def _emit(ctx, payload: dict, text: str | None = None) -> None:
    if ctx.obj["format"] == "json":
        click.echo(json.dumps(payload, indent=2, ensure_ascii=False))
    else:
        click.echo(text if text is not None else json.dumps(payload, indent=2, ensure_ascii=False))


def _fail(ctx, err: DcpError, exit_code: int = 1) -> None:
    detail = err.to_dict()
    if ctx.obj["format"] == "json":
        click.echo(json.dumps(detail, ensure_ascii=False))
    else:
        click.echo(f"error: {err}", err=True)
    ctx.exit(exit_code)


def _load_manifest_arg(path: str | None):
    return load_manifest(path) if path else lamp_study_manifest()


manifest_option = click.option("--manifest", "manifest_path", type=click.Path(exists=True),
                               default=None, help="Manifest YAML (default: packaged lamp rig).")
bridge_secret_option = click.option("--bridge-secret", default=None,
                                    help="Token-signing secret, hex or @file "
                                         "(env DCP_BRIDGE_SECRET).")
wire_secret_option = click.option("--wire-secret", default=None,
                                  help="Per-frame MAC secret, hex or @file "
                                       "(env DCP_WIRE_SECRET).")


@click.group()
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text",
              help="Output format.")
@click.pass_context
def main(ctx, fmt):
    """Device Context Protocol tooling."""
    ctx.ensure_object(dict)
    ctx.obj["format"] = fmt


# -- manifest ----------------------------------------------------------------

@main.group("manifest")
def manifest_group():
    """Validate manifests and export tool schemas."""


@manifest_group.command("validate")
@click.argument("file", type=click.Path(exists=True))
@click.pass_context
def manifest_validate(ctx, file):
    """Parse and fully validate a manifest; exit 0 iff it is well-formed."""
    try:
        m = load_manifest(file)
    except DcpError as err:
        _fail(ctx, err)
    _emit(ctx, {"ok": True, "device": m.device.id,
                "intents": [i.name for i in m.intents],
                "events": [e.name for e in m.events]},
          text=f"ok: {m.device.id} ({len(m.intents)} intents, {len(m.events)} events)")


@manifest_group.command("schema")
@click.argument("file", type=click.Path(exists=True))
@click.pass_context
def manifest_schema(ctx, file):
    """Export the JSON tool schema an LLM host would consume."""
    try:
        m = load_manifest(file)
    except DcpError as err:
        _fail(ctx, err)
    click.echo(json.dumps(export_tool_schema(m), indent=2))


# -- frame -------------------------------------------------------------------

@main.group("frame")
def frame_group():
    """Encode and decode raw frames."""


@frame_group.command("encode")
@click.option("--kind", type=click.Choice(sorted(_KINDS)), default="call")
@click.option("--seq", type=int, default=0)
@click.option("--intent", required=True, help="Intent/event name (hashed to the wire id).")
@click.option("--payload", default="{}", help="Payload as a JSON object.")
@click.option("--dry-run", is_flag=True, default=False)
@wire_secret_option
@click.pass_context
def frame_encode(ctx, kind, seq, intent, payload, dry_run, wire_secret):
    """Build one frame and print its hex bytes."""
    try:
        payload_map = json.loads(payload)
        header = FrameHeader(kind=_KINDS[kind], seq=seq, intent_id=intent_id(intent),
                             dry_run=dry_run)
        raw = assemble_frame(header, payload_map,
                             _resolve_secret(wire_secret, "DCP_WIRE_SECRET"))
    except json.JSONDecodeError as err:
        raise click.UsageError(f"--payload is not valid JSON: {err}")
    except DcpError as err:
        _fail(ctx, err)
    _emit(ctx, {"hex": raw.hex(), "bytes": len(raw)}, text=raw.hex())


@frame_group.command("decode")
@click.argument("hex_bytes")
@wire_secret_option
@click.pass_context
def frame_decode(ctx, hex_bytes, wire_secret):
    """Parse hex frame bytes and dump the fields."""
    try:
        frame = parse_frame(bytes.fromhex(hex_bytes),
                            _resolve_secret(wire_secret, "DCP_WIRE_SECRET"))
    except ValueError:
        raise click.UsageError("argument is not valid hex")
    except DcpError as err:
        _fail(ctx, err)
    h = frame.header
    dump = {"version": h.version, "kind": h.kind.name.lower(), "dry_run": h.dry_run,
            "seq": h.seq, "intent_id": f"{h.intent_id:#06x}", "payload": frame.payload,
            "mac": frame.mac.hex() if frame.mac else None}
    _emit(ctx, dump, text="\n".join(f"{k}: {v}" for k, v in dump.items()))


# -- token ---------------------------------------------------------------------

@main.group("token")
def token_group():
    """Issue and inspect capability tokens."""


@token_group.command("issue")
@click.option("--caps", required=True, help="Comma-separated capability list.")
@click.option("--ttl", type=int, default=3600, show_default=True, help="Lifetime in seconds.")
@click.option("--now", type=int, default=None, help="Issue time override (unix seconds).")
@bridge_secret_option
@click.pass_context
def token_issue(ctx, caps, ttl, now, bridge_secret):
    """Sign a capability set; prints the bearer token."""
    secret = _resolve_secret(bridge_secret, "DCP_BRIDGE_SECRET")
    if secret is None:
        raise click.UsageError("a bridge secret is required (flag or DCP_BRIDGE_SECRET)")
    try:
        token = issue_token(secret, [c.strip() for c in caps.split(",") if c.strip()],
                            ttl, now if now is not None else int(time.time()))
    except DcpError as err:
        _fail(ctx, err)
    _emit(ctx, {"token": token}, text=token)


@token_group.command("inspect")
@click.argument("token")
@click.option("--now", type=int, default=None, help="Verification time override.")
@bridge_secret_option
@click.pass_context
def token_inspect(ctx, token, now, bridge_secret):
    """Decode a token's claims; verifies the signature when a secret is given."""
    try:
        claims = inspect_token(token)
    except DcpError as err:
        _fail(ctx, err)
    out = dict(claims)
    secret = _resolve_secret(bridge_secret, "DCP_BRIDGE_SECRET")
    if secret is not None:
        try:
            verify_token(secret, token, now if now is not None else int(time.time()))
            out["valid"] = True
        except DcpError as err:
            out["valid"] = False
            out["reason"] = err.code
    _emit(ctx, out, text="\n".join(f"{k}: {v}" for k, v in out.items()))


# -- conformance -----------------------------------------------------------------

@main.group("conformance")
def conformance_group():
    """Golden-frame conformance checks."""


@conformance_group.command("run")
@click.argument("file", type=click.Path(exists=True))
@click.pass_context
def conformance_run(ctx, file):
    """Run all four checks on every golden case; exit 0 iff all pass."""
    try:
        report = run_conformance(file)
    except DcpError as err:
        _fail(ctx, err, exit_code=2)
    if ctx.obj["format"] == "json":
        click.echo(report.to_json())
    else:
        click.echo(report.to_text())
    ctx.exit(0 if report.ok else 1)


# -- device ----------------------------------------------------------------------

@main.group("device")
def device_group():
    """Run simulated devices."""


@device_group.command("sim")
@manifest_option
@click.option("--listen", required=True, help="HOST:PORT to serve the device on.")
@wire_secret_option
@click.pass_context
def device_sim(ctx, manifest_path, listen, wire_secret):
    """Serve a virtual device behind COBS framing on a TCP socket, so a
    bridge's byte-stream transport can talk to it exactly as to hardware."""
    manifest = _load_manifest_arg(manifest_path)
    secret = _resolve_secret(wire_secret, "DCP_WIRE_SECRET")
    names = {i.name for i in manifest.intents}
    if {"set_brightness", "read_brightness"} <= names:
        device = lamp_device(manifest, wire_secret=secret)
    else:
        device = generic_device(manifest, wire_secret=secret)
    host, _, port = listen.rpartition(":")
    if not host or not port.isdigit():
        raise click.UsageError("--listen must be HOST:PORT")
    server = DeviceServer(device, host, int(port))
    click.echo(f"device {manifest.device.id} listening on "
               f"{server.address[0]}:{server.address[1]}", err=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()


# -- call ---------------------------------------------------------------------

@main.command("call")
@click.argument("intent")
@click.option("--args", "args_json", default="{}", help="Arguments as a JSON object.")
@click.option("--token", required=True, help="Bearer capability token.")
@click.option("--dry-run", is_flag=True, default=False)
@manifest_option
@click.option("--transport", "transport_spec", default="loopback", show_default=True,
              help="loopback | sim-socket:HOST:PORT | serial:PATH[:BAUD]")
@click.option("--server", default=None, help="Route via a running dcp serve instance.")
@click.option("--timeout", type=float, default=1.0, show_default=True)
@click.option("--trace", is_flag=True, default=False,
              help="Also report transport byte counters.")
@bridge_secret_option
@wire_secret_option
@click.pass_context
def call_command(ctx, intent, args_json, token, dry_run, manifest_path, transport_spec,
                 server, timeout, trace, bridge_secret, wire_secret):
    """Validate and execute one intent call; prints the result."""
    try:
        args = json.loads(args_json)
        if not isinstance(args, dict):
            raise click.UsageError("--args must be a JSON object")
    except json.JSONDecodeError as err:
        raise click.UsageError(f"--args is not valid JSON: {err}")

    if server is not None:
        _call_via_server(ctx, server, intent, args, token, dry_run)
        return

    secret = _resolve_secret(bridge_secret, "DCP_BRIDGE_SECRET")
    if secret is None:
        raise click.UsageError("a bridge secret is required (flag or DCP_BRIDGE_SECRET)")
    manifest = _load_manifest_arg(manifest_path)
    wsecret = _resolve_secret(wire_secret, "DCP_WIRE_SECRET")

    device = None
    if transport_spec == "loopback":
        names = {i.name for i in manifest.intents}
        build = lamp_device if {"set_brightness", "read_brightness"} <= names else generic_device
        device = build(manifest, wire_secret=wsecret)
    try:
        transport = open_transport(transport_spec, device=device)
        link = DeviceLink(manifest, transport, wire_secret=wsecret, timeout=timeout)
        session = open_session(link, token, secret)
        result = session.call(intent, args, dry_run=dry_run)
    except ValidationError as err:
        if trace:
            click.echo(f"transport: {json.dumps(transport.stats())}", err=True)
        _fail(ctx, err)
    except DcpError as err:
        _fail(ctx, err)
    finally:
        try:
            transport.close()
        except (DcpError, UnboundLocalError):
            pass
    if trace:
        click.echo(f"transport: {json.dumps(transport.stats())}", err=True)
    _emit(ctx, {"ok": True, "result": result}, text=json.dumps(result))


def _call_via_server(ctx, server: str, intent: str, args: dict, token: str,
                     dry_run: bool) -> None:
    import httpx

    response = httpx.post(f"{server.rstrip('/')}/v1/calls",
                          json={"intent": intent, "args": args, "dry_run": dry_run},
                          headers={"Authorization": f"Bearer {token}"}, timeout=30.0)
    body = response.json()
    if response.status_code == 200:
        _emit(ctx, body, text=json.dumps(body.get("result")))
        return
    if ctx.obj["format"] == "json":
        click.echo(json.dumps(body, ensure_ascii=False))
    else:
        click.echo(f"error: {body}", err=True)
    ctx.exit(1)


# -- corpus ---------------------------------------------------------------------

@main.group("corpus")
def corpus_group():
    """Generate and evaluate the adversarial corpus."""


@corpus_group.command("gen")
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--n", "n_per_category", type=int, default=50, show_default=True,
              help="Entries per attack category.")
@click.option("--in-range-fraction", type=float, default=0.0, show_default=True,
              help="Share of unit-confusion values left inside the declared range.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write JSON here instead of stdout.")
@click.pass_context
def corpus_gen(ctx, seed, n_per_category, in_range_fraction, out_path):
    """Emit a deterministic corpus across the six attack categories."""
    entries = corpus_mod.generate_corpus(seed, n_per_category,
                                         in_range_fraction=in_range_fraction)
    if out_path:
        corpus_mod.save_corpus(entries, out_path, seed=seed, n_per_category=n_per_category)
        click.echo(f"wrote {len(entries)} entries to {out_path}", err=True)
    else:
        doc = {"version": 1, "seed": seed, "n_per_category": n_per_category,
               "entries": [e.to_doc() for e in entries]}
        click.echo(json.dumps(doc, indent=1, ensure_ascii=False))


@corpus_group.command("eval")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@manifest_option
@click.option("--report-format", type=click.Choice(["md", "json", "csv"]), default="md",
              show_default=True)
@click.pass_context
def corpus_eval(ctx, corpus_path, manifest_path, report_format):
    """Tabulate rejection rates for the real validator vs the permissive
    baseline; exits 1 if any entry's outcome contradicts its ground truth."""
    try:
        entries = corpus_mod.load_corpus(corpus_path)
        report = corpus_mod.evaluate(entries, _load_manifest_arg(manifest_path))
    except DcpError as err:
        _fail(ctx, err, exit_code=2)
    click.echo(corpus_mod.export_report(report, report_format))
    ctx.exit(0 if report.coherent else 1)


# -- bench -----------------------------------------------------------------------

@main.group("bench")
def bench_group():
    """Latency benchmarks."""


@bench_group.command("loopback")
@click.option("--iters", type=int, default=1000, show_default=True)
@manifest_option
@wire_secret_option
@click.pass_context
def bench_loopback(ctx, iters, manifest_path, wire_secret):
    """Median / IQR latency of the full loopback call path."""
    result = run_loopback_bench(iters,
                                manifest=_load_manifest_arg(manifest_path),
                                wire_secret=_resolve_secret(wire_secret, "DCP_WIRE_SECRET"))
    _emit(ctx, result,
          text=(f"{result['iters']} calls: median {result['median_ms']} ms, "
                f"IQR {result['p25_ms']}..{result['p75_ms']} ms"))


# -- serve -----------------------------------------------------------------------

@main.command("serve")
@manifest_option
@click.option("--transport", "transport_spec", default="loopback", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8337, show_default=True)
@click.option("--timeout", type=float, default=1.0, show_default=True)
@click.option("--allow-token-issue/--no-token-issue", default=True, show_default=True,
              help="Expose POST /v1/tokens.")
@bridge_secret_option
@wire_secret_option
def serve(manifest_path, transport_spec, host, port, timeout, allow_token_issue,
          bridge_secret, wire_secret):
    """Run the HTTP bridge service (FastAPI) over the chosen transport."""
    import uvicorn

    from .service import ServiceConfig, create_app

    secret = _resolve_secret(bridge_secret, "DCP_BRIDGE_SECRET")
    if secret is None:
        raise click.UsageError("a bridge secret is required (flag or DCP_BRIDGE_SECRET)")
    config = ServiceConfig(manifest_path=manifest_path, transport=transport_spec,
                           bridge_secret=secret,
                           wire_secret=_resolve_secret(wire_secret, "DCP_WIRE_SECRET"),
                           timeout=timeout, allow_token_issue=allow_token_issue)
    uvicorn.run(create_app(config), host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
