"""Host-side call validation: the checks that run before any wire byte exists.

``validate_call`` is a pure function of (manifest, request, granted
capabilities). Checks run in a fixed order and the first failure wins:

    1. intent exists                      -> unknown_intent
    2. intent capability is granted       -> capability_required
    3. no undeclared argument keys        -> unknown_param
    4. per declared parameter, in manifest order:
         present or defaulted             -> missing_param
         type (int widens to float)       -> type_mismatch
         inclusive range bounds           -> out_of_range
         full-match pattern               -> pattern_violation
         UTF-8 byte length                -> too_long
    5. dry-run requested but undeclared   -> dry_run_unsupported

The capability check deliberately precedes the per-parameter checks: an
unauthorized caller learns nothing about parameter schemas from error codes.

On success the result carries fully-typed arguments with defaults
materialized; ``wire_args`` then drops parameters whose value equals the
declared default, since the device applies the same defaults itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ValidationError
from .manifest import IntentSpec, Manifest, ManifestError, ParamCheckFailure


@dataclass
class CallRequest:
    """An untrusted tool call as it arrives from the LLM side."""
    intent: str
    args: dict = field(default_factory=dict)
    dry_run: bool = False


@dataclass
class NormalizedCall:
    """A validated call: typed args, defaults filled, nothing undeclared."""
    intent: IntentSpec
    args: dict
    dry_run: bool = False


def validate_call(m: Manifest, req: CallRequest, granted) -> NormalizedCall:
    """Run the full validation pipeline; raises ValidationError on the first
    failing stage and never mutates any state."""
    try:
        spec = m.lookup(req.intent)
    except ManifestError:
        spec = None
    if spec is None or not isinstance(spec, IntentSpec):
        raise ValidationError("unknown_intent", f"no intent named {req.intent!r}")

    if spec.capability not in granted:
        raise ValidationError("capability_required",
                              f"intent {spec.name!r} requires capability {spec.capability!r}")

    declared = {p.name for p in spec.params}
    for key in req.args:
        if key not in declared:
            raise ValidationError("unknown_param",
                                  f"intent {spec.name!r} declares no parameter {key!r}", param=key)

    normalized = {}
    for p in spec.params:
        if p.name in req.args:
            value = req.args[p.name]
        elif p.has_default:
            value = p.default
        else:
            raise ValidationError("missing_param",
                                  f"required parameter {p.name!r} is missing", param=p.name)
        try:
            normalized[p.name] = p.check(value)
        except ParamCheckFailure as err:
            raise ValidationError(err.kind, f"parameter {p.name!r}: {err.detail}",
                                  param=p.name) from None

    if req.dry_run and not spec.dry_run:
        raise ValidationError("dry_run_unsupported",
                              f"intent {spec.name!r} does not declare dry_run")

    return NormalizedCall(intent=spec, args=normalized, dry_run=req.dry_run)


def wire_args(nc: NormalizedCall) -> dict:
    """Payload map for the wire: defaulted-to-default parameters elided,
    floats carried as floats, durations as integers."""
    out = {}
    for p in nc.intent.params:
        value = nc.args[p.name]
        if p.has_default and value == p.default and type(value) is type(p.default):
            continue
        out[p.name] = value
    return out
