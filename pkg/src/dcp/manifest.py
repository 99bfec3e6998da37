"""Manifest parsing, validation, and indexing.

A manifest is a YAML document declaring a device's intents, events, and
capabilities, with typed, unit-bearing, range-bounded parameters::

    dcp: 0.1
    device:
      id: lamp-kitchen-01
      model: smart_lamp_v1
      vendor: example.dev
    intents:
      - name: set_brightness
        params:
          level: { type: float, unit: percent, range: [0, 100] }
          fade:  { type: duration, unit: ms, default: 0 }
        capability: lamp.write
        idempotent: true
        dry_run: true
    events:
      - name: motion_detected
        payload:
          confidence: { type: float, unit: ratio, range: [0, 1] }
        capability: lamp.read

Parsing is strict: any unknown key anywhere in the document is rejected, so
a typo like ``rnage`` cannot silently disable a bound. Units are declared
metadata, not a conversion system — values travel in the declared unit.
A parsed Manifest is immutable and freely shareable across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .codec import intent_id
from .crypto import is_valid_capability
from .errors import ManifestError
from .patterns import CompiledPattern, PatternError, compile_pattern

SUPPORTED_VERSIONS = ("0.1",)

PARAM_TYPES = ("float", "int", "bool", "string", "duration")

_MISSING = object()  # distinguishes "no default" from a default of None-ish values


class ParamCheckFailure(Exception):
    """A value failed a ParamSpec check; ``kind`` names the failed stage."""

    def __init__(self, kind: str, detail: str):
        self.kind = kind    # type_mismatch | out_of_range | pattern_violation | too_long
        self.detail = detail
        super().__init__(detail)


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str
    unit: str | None = None
    range: tuple[float, float] | None = None
    default: object = _MISSING
    pattern: str | None = None
    max_length: int | None = None
    compiled_pattern: CompiledPattern | None = field(default=None, compare=False, repr=False)

    @property
    def has_default(self) -> bool:
        return self.default is not _MISSING

    def check(self, value):
        """Validate ``value`` against this spec; returns the normalized value.

        Checks run in pipeline order: type, range, pattern, max_length.
        Ints widen to floats; floats never narrow to ints; bool and string
        are strict; duration requires a non-negative integer.
        """
        t = self.type
        if t == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParamCheckFailure("type_mismatch", f"expected float, got {_type_name(value)}")
            value = float(value)
        elif t == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ParamCheckFailure("type_mismatch", f"expected int, got {_type_name(value)}")
        elif t == "duration":
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ParamCheckFailure(
                    "type_mismatch", f"expected non-negative integer duration, got {value!r}")
        elif t == "bool":
            if not isinstance(value, bool):
                raise ParamCheckFailure("type_mismatch", f"expected bool, got {_type_name(value)}")
        elif t == "string":
            if not isinstance(value, str):
                raise ParamCheckFailure("type_mismatch", f"expected string, got {_type_name(value)}")
        else:  # pragma: no cover - parse_manifest rejects unknown types
            raise AssertionError(f"unknown param type {t}")

        if self.range is not None:
            lo, hi = self.range
            if not lo <= value <= hi:
                raise ParamCheckFailure("out_of_range", f"{value!r} outside [{lo}, {hi}]")
        if self.pattern is not None:
            matcher = self.compiled_pattern or compile_pattern(self.pattern)
            if not matcher.matches(value):
                raise ParamCheckFailure("pattern_violation", f"value does not match {self.pattern!r}")
        if self.max_length is not None:
            nbytes = len(value.encode("utf-8"))
            if nbytes > self.max_length:
                raise ParamCheckFailure(
                    "too_long", f"{nbytes} bytes exceeds max_length {self.max_length}")
        return value

    def to_doc(self) -> dict:
        doc: dict = {"type": self.type}
        if self.unit is not None:
            doc["unit"] = self.unit
        if self.range is not None:
            doc["range"] = list(self.range)
        if self.has_default:
            doc["default"] = self.default
        if self.pattern is not None:
            doc["pattern"] = self.pattern
        if self.max_length is not None:
            doc["max_length"] = self.max_length
        return doc


def _type_name(value) -> str:
    return type(value).__name__


@dataclass(frozen=True)
class IntentSpec:
    name: str
    capability: str
    params: tuple[ParamSpec, ...] = ()
    returns: ParamSpec | None = None
    idempotent: bool = False
    dry_run: bool = False
    id: int = 0  # filled by the parser: intent_id(name)

    def param(self, name: str) -> ParamSpec | None:
        for p in self.params:
            if p.name == name:
                return p
        return None

    def to_doc(self) -> dict:
        doc: dict = {"name": self.name}
        if self.params:
            doc["params"] = {p.name: p.to_doc() for p in self.params}
        if self.returns is not None:
            doc["returns"] = self.returns.to_doc()
        doc["capability"] = self.capability
        if self.idempotent:
            doc["idempotent"] = True
        if self.dry_run:
            doc["dry_run"] = True
        return doc


@dataclass(frozen=True)
class EventSpec:
    name: str
    capability: str
    payload: tuple[ParamSpec, ...] = ()
    id: int = 0

    def to_doc(self) -> dict:
        doc: dict = {"name": self.name}
        if self.payload:
            doc["payload"] = {p.name: p.to_doc() for p in self.payload}
        doc["capability"] = self.capability
        return doc


@dataclass(frozen=True)
class DeviceInfo:
    id: str
    model: str
    vendor: str


@dataclass(frozen=True)
class Manifest:
    dcp_version: str
    device: DeviceInfo
    intents: tuple[IntentSpec, ...]
    events: tuple[EventSpec, ...]
    by_name: dict = field(default=None, compare=False, repr=False)
    by_id: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        by_name, by_id = {}, {}
        for spec in (*self.intents, *self.events):
            by_name[spec.name] = spec
            by_id[spec.id] = spec
        object.__setattr__(self, "by_name", by_name)
        object.__setattr__(self, "by_id", by_id)

    def lookup(self, key):
        """Resolve an intent or event by name or 16-bit wire id."""
        table = self.by_id if isinstance(key, int) else self.by_name
        try:
            return table[key]
        except KeyError:
            raise ManifestError("not_found", f"no intent or event {key!r}") from None

    def to_doc(self) -> dict:
        doc: dict = {
            "dcp": self.dcp_version,
            "device": {"id": self.device.id, "model": self.device.model,
                       "vendor": self.device.vendor},
        }
        if self.intents:
            doc["intents"] = [i.to_doc() for i in self.intents]
        if self.events:
            doc["events"] = [e.to_doc() for e in self.events]
        return doc


# ---------------------------------------------------------------------------
# Parsing

def _reject_unknown_keys(mapping: dict, allowed: tuple, path: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise ManifestError("unknown_key", f"unknown key {key!r}", path=path)


def _parse_param(name: str, doc, path: str, *, allow_default: bool = True) -> ParamSpec:
    if not isinstance(doc, dict):
        raise ManifestError("invalid_param", "parameter spec must be a mapping", path=path)
    allowed = ("type", "unit", "range", "default", "pattern", "max_length")
    if not allow_default:
        allowed = tuple(k for k in allowed if k != "default")
    _reject_unknown_keys(doc, allowed, path)

    ptype = doc.get("type")
    if ptype not in PARAM_TYPES:
        raise ManifestError("invalid_param", f"type must be one of {PARAM_TYPES}, got {ptype!r}",
                            path=f"{path}.type")
    unit = doc.get("unit")
    if unit is not None and not isinstance(unit, str):
        raise ManifestError("invalid_param", "unit must be a string", path=f"{path}.unit")
    if ptype == "duration" and unit is None:
        unit = "ms"

    prange = doc.get("range")
    if prange is not None:
        if ptype not in ("float", "int", "duration"):
            raise ManifestError("invalid_param", f"range is not allowed on {ptype} params",
                                path=f"{path}.range")
        if (not isinstance(prange, (list, tuple)) or len(prange) != 2
                or any(isinstance(b, bool) or not isinstance(b, (int, float)) for b in prange)):
            raise ManifestError("invalid_param", "range must be [lo, hi] numbers",
                                path=f"{path}.range")
        lo, hi = prange
        if lo > hi:
            raise ManifestError("invalid_param", f"range [{lo}, {hi}] has lo > hi",
                                path=f"{path}.range")
        prange = (lo, hi)

    pattern = doc.get("pattern")
    max_length = doc.get("max_length")
    if ptype != "string":
        if pattern is not None:
            raise ManifestError("invalid_param", "pattern is only allowed on string params",
                                path=f"{path}.pattern")
        if max_length is not None:
            raise ManifestError("invalid_param", "max_length is only allowed on string params",
                                path=f"{path}.max_length")
    compiled = None
    if pattern is not None:
        if not isinstance(pattern, str):
            raise ManifestError("invalid_param", "pattern must be a string", path=f"{path}.pattern")
        try:
            compiled = compile_pattern(pattern)
        except PatternError as err:
            raise ManifestError("invalid_param", f"bad pattern: {err}", path=f"{path}.pattern") from None
    if max_length is not None and (isinstance(max_length, bool) or not isinstance(max_length, int)
                                   or max_length <= 0):
        raise ManifestError("invalid_param", "max_length must be a positive integer",
                            path=f"{path}.max_length")

    spec = ParamSpec(name=name, type=ptype, unit=unit, range=prange,
                     default=doc.get("default", _MISSING), pattern=pattern,
                     max_length=max_length, compiled_pattern=compiled)
    if spec.has_default:
        try:
            normalized = spec.check(spec.default)
        except ParamCheckFailure as err:
            raise ManifestError("invalid_param", f"default fails its own checks: {err.detail}",
                                path=f"{path}.default") from None
        spec = ParamSpec(name=name, type=ptype, unit=unit, range=prange, default=normalized,
                         pattern=pattern, max_length=max_length, compiled_pattern=compiled)
    return spec


def _parse_params(doc, path: str, *, allow_default: bool) -> tuple[ParamSpec, ...]:
    if doc is None:
        return ()
    if not isinstance(doc, dict):
        raise ManifestError("invalid_param", "params must be a mapping of name -> spec", path=path)
    out = []
    for name, pdoc in doc.items():
        if not isinstance(name, str) or not name:
            raise ManifestError("invalid_param", f"bad parameter name {name!r}", path=path)
        out.append(_parse_param(name, pdoc, f"{path}.{name}", allow_default=allow_default))
    return tuple(out)


def _parse_capability(doc: dict, path: str) -> str:
    cap = doc.get("capability")
    if not isinstance(cap, str) or not is_valid_capability(cap):
        raise ManifestError("invalid_capability",
                            f"every intent and event needs a capability like 'lamp.write', got {cap!r}",
                            path=f"{path}.capability")
    return cap


def _parse_intent(doc, index: int) -> IntentSpec:
    path = f"intents[{index}]"
    if not isinstance(doc, dict):
        raise ManifestError("invalid_manifest", "intent must be a mapping", path=path)
    _reject_unknown_keys(doc, ("name", "params", "returns", "capability", "idempotent", "dry_run"), path)
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ManifestError("invalid_manifest", f"bad intent name {name!r}", path=f"{path}.name")
    params = _parse_params(doc.get("params"), f"{path}.params", allow_default=True)
    returns = None
    if "returns" in doc:
        returns = _parse_param("value", doc["returns"], f"{path}.returns", allow_default=False)
    for flag in ("idempotent", "dry_run"):
        if flag in doc and not isinstance(doc[flag], bool):
            raise ManifestError("invalid_manifest", f"{flag} must be a boolean", path=f"{path}.{flag}")
    return IntentSpec(name=name, capability=_parse_capability(doc, path), params=params,
                      returns=returns, idempotent=doc.get("idempotent", False),
                      dry_run=doc.get("dry_run", False), id=intent_id(name))


def _parse_event(doc, index: int) -> EventSpec:
    path = f"events[{index}]"
    if not isinstance(doc, dict):
        raise ManifestError("invalid_manifest", "event must be a mapping", path=path)
    _reject_unknown_keys(doc, ("name", "payload", "capability"), path)
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ManifestError("invalid_manifest", f"bad event name {name!r}", path=f"{path}.name")
    # events support neither defaults nor dry-run in v0.x
    payload = _parse_params(doc.get("payload"), f"{path}.payload", allow_default=False)
    return EventSpec(name=name, capability=_parse_capability(doc, path), payload=payload,
                     id=intent_id(name))


def parse_manifest(doc: str) -> Manifest:
    """Parse and fully validate a YAML manifest document."""
    try:
        data = yaml.safe_load(doc)
    except yaml.YAMLError as err:
        raise ManifestError("yaml_error", f"not parseable as YAML: {err}") from None
    if not isinstance(data, dict):
        raise ManifestError("invalid_manifest", "manifest must be a mapping at the top level")
    _reject_unknown_keys(data, ("dcp", "device", "intents", "events"), "$")

    version = data.get("dcp")
    if isinstance(version, float):
        version = repr(version)  # YAML reads `dcp: 0.1` as a float
    if version not in SUPPORTED_VERSIONS:
        raise ManifestError("unsupported_version", f"dcp version {version!r} is not supported")

    dev = data.get("device")
    if not isinstance(dev, dict):
        raise ManifestError("invalid_manifest", "device block is required", path="device")
    _reject_unknown_keys(dev, ("id", "model", "vendor"), "device")
    for key in ("id", "model", "vendor"):
        if not isinstance(dev.get(key), str) or not dev[key]:
            raise ManifestError("invalid_manifest", f"device.{key} must be a non-empty string",
                                path=f"device.{key}")
    device = DeviceInfo(id=dev["id"], model=dev["model"], vendor=dev["vendor"])

    raw_intents = data.get("intents") or []
    raw_events = data.get("events") or []
    if not isinstance(raw_intents, list) or not isinstance(raw_events, list):
        raise ManifestError("invalid_manifest", "intents and events must be lists")
    intents = tuple(_parse_intent(d, i) for i, d in enumerate(raw_intents))
    events = tuple(_parse_event(d, i) for i, d in enumerate(raw_events))

    seen_names: dict[str, str] = {}
    seen_ids: dict[int, str] = {}
    for spec in (*intents, *events):
        if spec.name in seen_names:
            raise ManifestError("duplicate_name", f"name {spec.name!r} is declared twice")
        if spec.id in seen_ids:
            raise ManifestError(
                "crc_collision",
                f"{spec.name!r} and {seen_ids[spec.id]!r} share intent id {spec.id:#06x}; rename one")
        seen_names[spec.name] = spec.name
        seen_ids[spec.id] = spec.name

    return Manifest(dcp_version=version, device=device, intents=intents, events=events)


def load_manifest(path) -> Manifest:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_manifest(fh.read())


def dump_manifest(m: Manifest) -> str:
    """Serialize back to YAML; parse(dump(m)) == m."""
    return yaml.safe_dump(m.to_doc(), sort_keys=False)


# ---------------------------------------------------------------------------
# Tool-schema export

_JSON_TYPES = {"float": "number", "int": "integer", "duration": "integer",
               "bool": "boolean", "string": "string"}


def _param_schema(p: ParamSpec) -> dict:
    schema: dict = {"type": _JSON_TYPES[p.type]}
    if p.range is not None:
        schema["minimum"], schema["maximum"] = p.range
    if p.pattern is not None:
        schema["pattern"] = p.pattern
    if p.max_length is not None:
        schema["maxLength"] = p.max_length
    bits = [p.type]
    if p.unit:
        bits.append(f"unit: {p.unit}")
    if p.has_default:
        bits.append(f"default: {p.default}")
    schema["description"] = ", ".join(bits)
    return schema


def export_tool_schema(m: Manifest) -> dict:
    """One JSON-Schema-style tool entry per intent, for LLM-host consumption.

    Range bounds become minimum/maximum, string constraints become
    pattern/maxLength, units are embedded in every description, and the
    required list is exactly the parameters without defaults.
    """
    tools = []
    for intent in m.intents:
        entry: dict = {
            "name": intent.name,
            "capability": intent.capability,
            "idempotent": intent.idempotent,
            "dry_run": intent.dry_run,
            "inputSchema": {
                "type": "object",
                "properties": {p.name: _param_schema(p) for p in intent.params},
                "required": [p.name for p in intent.params if not p.has_default],
                "additionalProperties": False,
            },
        }
        if intent.returns is not None:
            entry["returns"] = _param_schema(intent.returns)
        tools.append(entry)
    return {
        "device": {"id": m.device.id, "model": m.device.model, "vendor": m.device.vendor},
        "tools": tools,
    }
