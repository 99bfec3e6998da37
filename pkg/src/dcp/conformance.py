"""Golden-frame conformance suite: language-neutral wire-byte fixtures.

Each case in the YAML file fully specifies the frame inputs (kind, dry-run
flag, sequence number, intent name, payload in document form) together with
the expected CBOR payload bytes and whole-frame bytes, so an independent
implementation can mechanically verify bit-exactness before building any
higher layer. The runner depends only on the codec and crypto modules.

Four checks run per case:

    encode    cbor bytes of the payload match ``cbor_hex``
    assemble  full frame bytes match ``frame_hex`` (and ``signed_frame_hex``
              with ``mac_key_hex`` when present)
    parse     re-parsing ``frame_hex`` reproduces every input field
    intent_id the hash of the intent name equals the id embedded in the frame

Tautology guard: every case must also carry ``cbor_hex_crosscheck``, the
same payload encoded by an independent CBOR implementation. A case without
that column does not load, and a case whose two columns disagree fails its
encode check, so the suite can never silently pin a self-consistent but
wrong codec.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import yaml

from .codec import (FrameHeader, Kind, assemble_frame, cbor_encode, intent_id,
                    parse_frame)
from .errors import DcpError

_KINDS = {"call": Kind.CALL, "reply": Kind.REPLY, "event": Kind.EVENT, "error": Kind.ERROR}


class GoldenFileError(DcpError):
    def __init__(self, message: str):
        super().__init__("golden_file_error", message)


@dataclass(frozen=True)
class GoldenCase:
    name: str
    kind: str
    dry_run: bool
    seq: int
    intent: str
    payload: dict
    cbor_hex: str
    frame_hex: str
    cbor_hex_crosscheck: str | None = None
    mac_key_hex: str | None = None
    signed_frame_hex: str | None = None

    def header(self) -> FrameHeader:
        return FrameHeader(kind=_KINDS[self.kind], seq=self.seq,
                           intent_id=intent_id(self.intent), dry_run=self.dry_run)

    def to_doc(self) -> dict:
        doc = {"name": self.name, "kind": self.kind, "dry_run": self.dry_run,
               "seq": self.seq, "intent": self.intent, "payload": self.payload,
               "cbor_hex": self.cbor_hex, "frame_hex": self.frame_hex}
        if self.cbor_hex_crosscheck is not None:
            doc["cbor_hex_crosscheck"] = self.cbor_hex_crosscheck
        if self.mac_key_hex is not None:
            doc["mac_key_hex"] = self.mac_key_hex
            doc["signed_frame_hex"] = self.signed_frame_hex
        return doc


def generate_golden(name: str, kind: str, seq: int, intent: str, payload: dict,
                    *, dry_run: bool = False, mac_key_hex: str | None = None) -> GoldenCase:
    """Fill in expected bytes from this build's codec.

    The result deliberately lacks ``cbor_hex_crosscheck``: a case cannot
    ship until an independent CBOR implementation has produced that column.
    """
    if kind not in _KINDS:
        raise GoldenFileError(f"kind must be one of {sorted(_KINDS)}, got {kind!r}")
    header = FrameHeader(kind=_KINDS[kind], seq=seq, intent_id=intent_id(intent),
                         dry_run=dry_run)
    cbor = cbor_encode(payload)
    frame = assemble_frame(header, payload)
    signed = None
    if mac_key_hex is not None:
        signed = assemble_frame(header, payload, bytes.fromhex(mac_key_hex)).hex()
    return GoldenCase(name=name, kind=kind, dry_run=dry_run, seq=seq, intent=intent,
                      payload=payload, cbor_hex=cbor.hex(), frame_hex=frame.hex(),
                      mac_key_hex=mac_key_hex, signed_frame_hex=signed)


def load_golden(text: str) -> list[GoldenCase]:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise GoldenFileError(f"not parseable as YAML: {err}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("cases"), list):
        raise GoldenFileError("golden file must be a mapping with a 'cases' list")
    cases = []
    for i, cd in enumerate(doc["cases"]):
        where = f"cases[{i}]"
        if not isinstance(cd, dict):
            raise GoldenFileError(f"{where}: case must be a mapping")
        try:
            case = GoldenCase(
                name=cd["name"], kind=cd["kind"], dry_run=bool(cd.get("dry_run", False)),
                seq=int(cd["seq"]), intent=cd["intent"], payload=cd["payload"],
                cbor_hex=str(cd["cbor_hex"]).lower(), frame_hex=str(cd["frame_hex"]).lower(),
                cbor_hex_crosscheck=(str(cd["cbor_hex_crosscheck"]).lower()
                                     if "cbor_hex_crosscheck" in cd else None),
                mac_key_hex=cd.get("mac_key_hex"),
                signed_frame_hex=cd.get("signed_frame_hex"))
        except KeyError as err:
            raise GoldenFileError(f"{where}: missing field {err}") from None
        if case.kind not in _KINDS:
            raise GoldenFileError(f"{where}: unknown kind {case.kind!r}")
        if not isinstance(case.payload, dict):
            raise GoldenFileError(f"{where}: payload must be a map")
        if case.cbor_hex_crosscheck is None:
            raise GoldenFileError(
                f"{where} ({case.name}): no cbor_hex_crosscheck column; golden cases must "
                "carry bytes from an independent CBOR implementation before they ship")
        if case.mac_key_hex is not None and case.signed_frame_hex is None:
            raise GoldenFileError(f"{where}: mac_key_hex without signed_frame_hex")
        cases.append(case)
    return cases


@dataclass
class CaseResult:
    name: str
    failures: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)  # check name -> bool

    @property
    def passed(self) -> bool:
        return not self.failures


@dataclass
class ConformanceReport:
    results: list

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def to_text(self) -> str:
        lines = []
        for r in self.results:
            status = "PASS" if r.passed else "FAIL"
            lines.append(f"{status}  {r.name}  "
                         + " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in r.checks.items()))
            for f in r.failures:
                lines.append(f"      - {f}")
        total = len(self.results)
        good = sum(r.passed for r in self.results)
        lines.append(f"{good}/{total} cases passed")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps({
            "ok": self.ok,
            "cases": [{"name": r.name, "passed": r.passed, "checks": r.checks,
                       "failures": r.failures} for r in self.results],
        }, indent=2)


def _values_equal(expected, actual) -> bool:
    """Type-faithful compare: 50 (int) and 50.0 (float) are different."""
    if isinstance(expected, bool) or isinstance(actual, bool):
        return type(expected) is type(actual) and expected == actual
    if isinstance(expected, (int, float)):
        return type(expected) is type(actual) and (
            expected == actual or (expected != expected and actual != actual))
    if isinstance(expected, dict):
        return (isinstance(actual, dict) and expected.keys() == actual.keys()
                and all(_values_equal(v, actual[k]) for k, v in expected.items()))
    return type(expected) is type(actual) and expected == actual


def run_case(case: GoldenCase) -> CaseResult:
    result = CaseResult(name=case.name)

    def record(check: str, ok: bool, message: str = "") -> None:
        result.checks[check] = ok
        if not ok:
            result.failures.append(f"{check}: {message}")

    encoded = cbor_encode(case.payload).hex()
    crosscheck_ok = case.cbor_hex_crosscheck in (None, case.cbor_hex)
    record("encode", encoded == case.cbor_hex and crosscheck_ok,
           f"cbor_encode -> {encoded}, expected {case.cbor_hex}"
           + ("" if crosscheck_ok else f" (crosscheck column says {case.cbor_hex_crosscheck})"))

    header = case.header()
    assembled = assemble_frame(header, case.payload).hex()
    ok = assembled == case.frame_hex
    detail = f"assemble_frame -> {assembled}, expected {case.frame_hex}"
    if ok and case.mac_key_hex is not None:
        signed = assemble_frame(header, case.payload, bytes.fromhex(case.mac_key_hex)).hex()
        ok = signed == case.signed_frame_hex
        detail = f"signed assemble -> {signed}, expected {case.signed_frame_hex}"
    record("assemble", ok, detail)

    try:
        frame = parse_frame(bytes.fromhex(case.frame_hex))
        parse_ok = (frame.header == header and _values_equal(case.payload, frame.payload))
        record("parse", parse_ok, f"parse_frame -> {frame}")
    except DcpError as err:
        record("parse", False, f"parse_frame raised {err}")

    embedded = int(case.frame_hex[8:12], 16)
    record("intent_id", intent_id(case.intent) == embedded,
           f"intent_id({case.intent!r}) = {intent_id(case.intent):#06x}, frame has {embedded:#06x}")
    return result


def run_conformance(source) -> ConformanceReport:
    """Run all four checks on every case. ``source`` is a path or YAML text."""
    text = source
    if "\n" not in str(source):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    cases = load_golden(text)
    return ConformanceReport(results=[run_case(c) for c in cases])
