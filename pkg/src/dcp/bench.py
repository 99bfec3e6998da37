"""Loopback latency benchmark.

Times the full host path — validate, encode, wrap, device decode/dispatch,
reply encode, unwrap, decode, correlate — through the in-process loopback
transport, which isolates the protocol's own cost from any real link.
Reports the median and inter-quartile range over N timed calls.
"""

from __future__ import annotations

import statistics
import time

from .bridge import Session, loopback_link
from .devicesim import lamp_device
from .fixtures import lamp_study_manifest
from .manifest import Manifest


def run_loopback_bench(iters: int = 1000, *, manifest: Manifest | None = None,
                       wire_secret: bytes | None = None) -> dict:
    manifest = manifest or lamp_study_manifest()
    device = lamp_device(manifest, wire_secret=wire_secret)
    link = loopback_link(manifest, device, wire_secret=wire_secret)
    session = Session(link, caps=frozenset({"lamp.read", "lamp.write", "lamp.admin"}),
                      expires_at=2 ** 62)

    session.call("set_brightness", {"level": 1})  # warm-up
    samples_ms = []
    started = time.perf_counter()
    for i in range(iters):
        t0 = time.perf_counter_ns()
        session.call("set_brightness", {"level": i % 101})
        samples_ms.append((time.perf_counter_ns() - t0) / 1e6)
    total_s = time.perf_counter() - started

    q1, median, q3 = statistics.quantiles(samples_ms, n=4) if len(samples_ms) >= 4 else (
        min(samples_ms), statistics.median(samples_ms), max(samples_ms))
    return {
        "iters": iters,
        "median_ms": round(median, 4),
        "p25_ms": round(q1, 4),
        "p75_ms": round(q3, 4),
        "iqr_ms": round(q3 - q1, 4),
        "total_s": round(total_s, 3),
        "signed": wire_secret is not None,
    }
