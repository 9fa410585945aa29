"""Counter snapshots to normalized feature vectors.

Turns raw MIB-II interface counters into per-second rates with Counter32
wrap handling and reboot detection, derives traffic-shape ratios, and
z-scores everything against parameters fitted on training data so that
Euclidean distances in feature space are meaningful across units.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from netstate.classifier import FeatureVector

COUNTER32_MOD = 2**32

# MIB-II interface counters polled per interface, in wire order
COUNTER_NAMES = (
    "in_octets",
    "out_octets",
    "in_errors",
    "out_errors",
    "in_discards",
    "out_discards",
    "in_nucast_pkts",
    "in_ucast_pkts",
)

# v1 feature set: load, errors, discards, broadcast share
FEATURES_V1 = (
    "in_octets_rate",
    "out_octets_rate",
    "in_pkts_rate",
    "error_ratio",
    "discard_ratio",
    "broadcast_ratio",
)

DEGENERATE_STD = 1e-9


class PipelineError(ValueError):
    """Raised on malformed snapshot streams or parameter misuse."""


@dataclass(frozen=True)
class CounterSnapshot:
    """One poll result for a (target, interface) pair.

    ``timestamp_ms`` is collector wall-clock; ``uptime_ticks`` is the
    device's sysUpTime in hundredths of a second, used only for reboot
    detection. ``degraded`` marks snapshots missing some counters.
    """

    target_id: str
    if_index: int
    timestamp_ms: int
    uptime_ticks: int
    counters: dict[str, int]
    degraded: bool = False

    def __post_init__(self):
        for name, value in self.counters.items():
            if not 0 <= value < COUNTER32_MOD:
                raise PipelineError(f"counter {name}={value} outside Counter32 range")


@dataclass(frozen=True)
class RateVector:
    """Per-second rates plus derived ratios over one poll interval."""

    interval_s: float
    values: dict[str, float]

    def __post_init__(self):
        if not self.interval_s > 0:
            raise PipelineError(f"interval must be > 0, got {self.interval_s}")
        for name, v in self.values.items():
            if not math.isfinite(v) or v < 0:
                raise PipelineError(f"rate {name}={v} must be finite and >= 0")


@dataclass(frozen=True)
class NormParams:
    """Per-feature z-score parameters, fitted on training rates."""

    feature_order: tuple[str, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.feature_order) == len(self.means) == len(self.stds)):
            raise PipelineError("feature_order, means and stds must be parallel")
        if any(s <= 0 for s in self.stds):
            raise PipelineError("stds must be > 0 (degenerate features use 1.0)")


def counter_delta(prev: CounterSnapshot, curr: CounterSnapshot) -> dict[str, int] | None:
    """Per-counter increments (curr - prev) mod 2^32, or None when the
    device rebooted between the two snapshots (uptime went backwards)."""
    if (prev.target_id, prev.if_index) != (curr.target_id, curr.if_index):
        raise PipelineError(
            f"snapshot stream mismatch: {prev.target_id}/{prev.if_index} vs {curr.target_id}/{curr.if_index}"
        )
    # reboot first: a rebase never computes a rate, so it must be detected
    # even when two polls land inside the same millisecond
    if curr.uptime_ticks < prev.uptime_ticks:
        return None
    if curr.timestamp_ms <= prev.timestamp_ms:
        raise PipelineError(f"non-increasing timestamp: {prev.timestamp_ms} -> {curr.timestamp_ms}")
    deltas = {}
    for name in COUNTER_NAMES:
        if name in prev.counters and name in curr.counters:
            deltas[name] = (curr.counters[name] - prev.counters[name]) % COUNTER32_MOD
    return deltas


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def to_rates(deltas: dict[str, int], interval_s: float) -> RateVector:
    """Rates = delta / interval; ratios use the 0-denominator-yields-0 rule."""
    if not interval_s > 0:
        raise PipelineError(f"interval must be > 0, got {interval_s}")
    values: dict[str, float] = {}
    for name in COUNTER_NAMES:
        values[f"{name}_rate"] = deltas.get(name, 0) / interval_s
    in_pkts = deltas.get("in_ucast_pkts", 0) + deltas.get("in_nucast_pkts", 0)
    values["in_pkts_rate"] = in_pkts / interval_s
    values["error_ratio"] = _ratio(deltas.get("in_errors", 0) + deltas.get("out_errors", 0), in_pkts)
    values["discard_ratio"] = _ratio(deltas.get("in_discards", 0) + deltas.get("out_discards", 0), in_pkts)
    values["broadcast_ratio"] = _ratio(deltas.get("in_nucast_pkts", 0), in_pkts)
    return RateVector(interval_s=float(interval_s), values=values)


def fit_normalizer(samples: list[RateVector], feature_order: tuple[str, ...] = FEATURES_V1) -> NormParams:
    """Per-feature mean and population std over the samples; features with
    std below 1e-9 pass through centered with std pinned to 1."""
    if not samples:
        raise PipelineError("cannot fit a normalizer on zero samples")
    means, stds = [], []
    n = len(samples)
    for name in feature_order:
        column = [s.values[name] for s in samples]
        mean = sum(column) / n
        var = sum((v - mean) ** 2 for v in column) / n
        std = math.sqrt(var)
        means.append(mean)
        stds.append(std if std >= DEGENERATE_STD else 1.0)
    return NormParams(feature_order=tuple(feature_order), means=tuple(means), stds=tuple(stds))


def normalize(rates: RateVector, params: NormParams) -> FeatureVector:
    values = []
    for name, mean, std in zip(params.feature_order, params.means, params.stds):
        if name not in rates.values:
            raise PipelineError(f"rate vector is missing feature {name!r}")
        values.append((rates.values[name] - mean) / std)
    return FeatureVector(values=tuple(values))


def denormalize(vector: FeatureVector, params: NormParams) -> dict[str, float]:
    """Back to human units (rates and ratios) for display."""
    if vector.dim != len(params.feature_order):
        raise PipelineError(f"vector dim {vector.dim} != {len(params.feature_order)} features")
    return {
        name: v * std + mean
        for name, v, mean, std in zip(params.feature_order, vector.values, params.means, params.stds)
    }


@dataclass
class StreamCursor:
    """Per-(target, interface) delta pairing.

    Feed snapshots in poll order; yields a RateVector once two wrap-free,
    reboot-free consecutive snapshots exist. A reboot breaks the chain: the
    rebooted snapshot becomes the new pairing base.
    """

    prev: CounterSnapshot | None = field(default=None)

    def feed(self, snapshot: CounterSnapshot) -> RateVector | None:
        prev, self.prev = self.prev, snapshot
        if prev is None:
            return None
        deltas = counter_delta(prev, snapshot)
        if deltas is None:
            return None
        interval_s = (snapshot.timestamp_ms - prev.timestamp_ms) / 1000.0
        return to_rates(deltas, interval_s)


# -- trace files (JSON Lines, one snapshot per line) --


def snapshot_to_json(s: CounterSnapshot) -> str:
    return json.dumps(
        {
            "target": s.target_id,
            "if_index": s.if_index,
            "ts_ms": s.timestamp_ms,
            "uptime_ticks": s.uptime_ticks,
            "counters": {k: s.counters[k] for k in sorted(s.counters)},
        },
        separators=(",", ":"),
    )


def snapshot_from_json(line: str) -> CounterSnapshot:
    try:
        obj = json.loads(line)
        return CounterSnapshot(
            target_id=obj["target"],
            if_index=int(obj["if_index"]),
            timestamp_ms=int(obj["ts_ms"]),
            uptime_ticks=int(obj["uptime_ticks"]),
            counters={str(k): int(v) for k, v in obj["counters"].items()},
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise PipelineError(f"malformed trace line: {exc}") from exc


def write_trace(path: str | Path, snapshots: Iterable[CounterSnapshot]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in snapshots:
            fh.write(snapshot_to_json(s) + "\n")


def read_trace(path: str | Path) -> list[CounterSnapshot]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(snapshot_from_json(line))
    return out


def write_feature_csv(path: str | Path, vectors: Iterable[FeatureVector], feature_order: tuple[str, ...]) -> None:
    """Offline inspection export: header is the feature order, one row per vector."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(feature_order)
        for v in vectors:
            if v.dim != len(feature_order):
                raise PipelineError(f"vector dim {v.dim} != {len(feature_order)} features")
            writer.writerow([repr(x) for x in v.values])
