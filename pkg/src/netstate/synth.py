"""Synthetic network states: deterministic counter traces for desk-scale
verification, plus the labeled-corpus builder that feeds training.

Four reference states with envelopes separable by construction:

  normal           moderate load, error_ratio < 0.001, broadcast_ratio < 0.05
  congestion       octet rates >= 5x the normal mean, discards rising
  error-burst      error_ratio in [0.05, 0.3]
  broadcast-storm  broadcast_ratio >= 0.6, packet rate >= 3x normal

Per-interval volumes jitter +-20% around scenario means; the envelope
bounds above hold for every interval *after* jitter and integerization
(e.g. congestion uses 7x so the 0.8 jitter floor stays above 5x). The
generator is validated by re-deriving rates through the feature pipeline,
never by trusting its own arithmetic.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from netstate.classifier import ClassLabel, TrainingSample
from netstate.features import (
    COUNTER32_MOD,
    COUNTER_NAMES,
    FEATURES_V1,
    CounterSnapshot,
    NormParams,
    RateVector,
    counter_delta,
    fit_normalizer,
    normalize,
    to_rates,
)

GENERATOR_VERSION = 1

KINDS = ("normal", "congestion", "error-burst", "broadcast-storm", "custom")

# normal-state baseline rates; the other kinds scale off these
NORMAL_IN_OCTETS_RATE = 1_000_000.0
NORMAL_OUT_OCTETS_RATE = 600_000.0
NORMAL_IN_PKTS_RATE = 1_200.0

DEFAULT_LABELS = {
    "normal": "Normal",
    "congestion": "Congestion",
    "error-burst": "ErrorBurst",
    "broadcast-storm": "BroadcastStorm",
}


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    kind: str
    duration_s: int
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SynthError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        if self.duration_s < 1:
            raise SynthError(f"duration_s must be >= 1, got {self.duration_s}")
        for key, value in self.params.items():
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
                raise SynthError(f"param {key}={value!r} must be a number >= 0")
        jitter = self.params.get("jitter", 0.2)
        if not 0 <= jitter < 1:
            raise SynthError(f"jitter {jitter} outside [0, 1)")


@dataclass(frozen=True)
class Trace:
    """Generated snapshots plus the t=0 base they accumulate from.

    The base carries the start counter offsets; deriving rates for the
    first snapshot needs it, and it is what makes wrap-twin traces (same
    rates, offset counters) exactly comparable.
    """

    base: CounterSnapshot
    snapshots: tuple[CounterSnapshot, ...]
    metadata: dict

    @property
    def kind(self) -> str:
        return self.metadata["kind"]


@dataclass(frozen=True)
class _Draw:
    """One interval's target rates and fractions, pre-integerization."""

    in_octets: float
    out_octets: float
    in_pkts: float
    bcast: float
    err: float
    disc: float


def _draw_interval(scenario: Scenario, rng: random.Random, k: int, n: int) -> _Draw:
    p = scenario.params
    jitter = p.get("jitter", 0.2)

    def jit() -> float:
        return rng.uniform(1.0 - jitter, 1.0 + jitter)

    if scenario.kind == "normal":
        return _Draw(
            in_octets=NORMAL_IN_OCTETS_RATE * p.get("octet_factor", 1.0) * jit(),
            out_octets=NORMAL_OUT_OCTETS_RATE * p.get("octet_factor", 1.0) * jit(),
            in_pkts=NORMAL_IN_PKTS_RATE * p.get("pkt_factor", 1.0) * jit(),
            bcast=rng.uniform(0.005, 0.03),
            err=rng.uniform(0.0, 0.0005),
            disc=rng.uniform(0.0, 0.001),
        )
    if scenario.kind == "congestion":
        # 7x mean so the 0.8 jitter floor keeps octet rates >= 5.6x normal
        progress = k / max(n - 1, 1)
        return _Draw(
            in_octets=NORMAL_IN_OCTETS_RATE * p.get("octet_factor", 7.0) * jit(),
            out_octets=NORMAL_OUT_OCTETS_RATE * p.get("octet_factor", 7.0) * jit(),
            in_pkts=NORMAL_IN_PKTS_RATE * p.get("pkt_factor", 5.0) * jit(),
            bcast=rng.uniform(0.005, 0.03),
            err=rng.uniform(0.0, 0.0005),
            disc=0.02 + 0.08 * progress,  # buffer losses climb as queues fill
        )
    if scenario.kind == "error-burst":
        return _Draw(
            in_octets=NORMAL_IN_OCTETS_RATE * p.get("octet_factor", 1.2) * jit(),
            out_octets=NORMAL_OUT_OCTETS_RATE * p.get("octet_factor", 1.2) * jit(),
            in_pkts=NORMAL_IN_PKTS_RATE * p.get("pkt_factor", 1.2) * jit(),
            bcast=rng.uniform(0.005, 0.03),
            err=rng.uniform(0.08, 0.25),  # comfortably inside [0.05, 0.3]
            disc=rng.uniform(0.0, 0.005),
        )
    if scenario.kind == "broadcast-storm":
        # 4x packet mean: jitter floor 3.2x stays above the 3x envelope
        return _Draw(
            in_octets=NORMAL_IN_OCTETS_RATE * p.get("octet_factor", 1.5) * jit(),
            out_octets=NORMAL_OUT_OCTETS_RATE * p.get("octet_factor", 1.5) * jit(),
            in_pkts=NORMAL_IN_PKTS_RATE * p.get("pkt_factor", 4.0) * jit(),
            bcast=rng.uniform(0.65, 0.9),
            err=rng.uniform(0.0, 0.0005),
            disc=rng.uniform(0.0, 0.005),
        )
    return _Draw(  # custom
        in_octets=p.get("in_octets_rate", NORMAL_IN_OCTETS_RATE) * jit(),
        out_octets=p.get("out_octets_rate", NORMAL_OUT_OCTETS_RATE) * jit(),
        in_pkts=p.get("in_pkts_rate", NORMAL_IN_PKTS_RATE) * jit(),
        bcast=p.get("broadcast_frac", 0.01),
        err=p.get("error_frac", 0.0),
        disc=p.get("discard_frac", 0.0),
    )


def _interval_deltas(draw: _Draw, interval_s: float) -> dict[str, int]:
    pkts = int(draw.in_pkts * interval_s)
    nucast = int(pkts * draw.bcast)
    errors = int(pkts * draw.err)
    discards = int(pkts * draw.disc)
    return {
        "in_octets": int(draw.in_octets * interval_s),
        "out_octets": int(draw.out_octets * interval_s),
        "in_errors": errors - errors // 2,
        "out_errors": errors // 2,
        "in_discards": discards - discards // 2,
        "out_discards": discards // 2,
        "in_nucast_pkts": nucast,
        "in_ucast_pkts": pkts - nucast,
    }


def interval_deltas(scenario: Scenario, interval_s: float, count: int) -> list[dict[str, int]]:
    """The deterministic per-interval counter increments behind a trace;
    also consumed by the live agent's interpolation engine."""
    rng = random.Random(scenario.seed)
    return [_interval_deltas(_draw_interval(scenario, rng, k, count), interval_s) for k in range(count)]


def generate_trace(
    scenario: Scenario,
    poll_interval_s: float,
    *,
    target_id: str = "sim",
    if_index: int = 1,
    start_counters: dict[str, int] | None = None,
    start_ts_ms: int = 0,
    start_uptime_ticks: int = 0,
) -> Trace:
    if poll_interval_s < 1:
        raise SynthError(f"poll_interval_s must be >= 1, got {poll_interval_s}")
    n = int(scenario.duration_s // poll_interval_s)
    step_ms = round(poll_interval_s * 1000)  # snapshots carry integer ms/ticks
    if n < 1:
        raise SynthError("duration shorter than one poll interval")
    totals: dict[str, int] = {}
    for name in COUNTER_NAMES:
        offset = (start_counters or {}).get(name, 0)
        if not 0 <= offset < COUNTER32_MOD:
            raise SynthError(f"start counter {name}={offset} outside Counter32 range")
        totals[name] = offset
    if start_counters:
        unknown = set(start_counters) - set(COUNTER_NAMES)
        if unknown:
            raise SynthError(f"unknown start counters {sorted(unknown)}")

    base = CounterSnapshot(
        target_id=target_id,
        if_index=if_index,
        timestamp_ms=start_ts_ms,
        uptime_ticks=start_uptime_ticks,
        counters=dict(totals),
    )
    snapshots = []
    for k, deltas in enumerate(interval_deltas(scenario, poll_interval_s, n)):
        for name, delta in deltas.items():
            totals[name] = (totals[name] + delta) % COUNTER32_MOD
        snapshots.append(
            CounterSnapshot(
                target_id=target_id,
                if_index=if_index,
                timestamp_ms=start_ts_ms + (k + 1) * step_ms,
                uptime_ticks=(start_uptime_ticks + (k + 1) * (step_ms // 10)) % COUNTER32_MOD,
                counters=dict(totals),
            )
        )
    metadata = {
        "kind": scenario.kind,
        "seed": scenario.seed,
        "generator_version": GENERATOR_VERSION,
        "poll_interval_s": poll_interval_s,
    }
    return Trace(base=base, snapshots=tuple(snapshots), metadata=metadata)


def trace_rates(trace: Trace) -> list[RateVector]:
    """Rates re-derived through the consumer pipeline, base included, so a
    trace of n snapshots yields n rate vectors."""
    out = []
    prev = trace.base
    for snap in trace.snapshots:
        deltas = counter_delta(prev, snap)
        if deltas is None:
            raise SynthError("generated trace contains an uptime regression")
        out.append(to_rates(deltas, (snap.timestamp_ms - prev.timestamp_ms) / 1000.0))
        prev = snap
    return out


@dataclass(frozen=True)
class LabeledDataset:
    samples: tuple[TrainingSample, ...]
    norm: NormParams
    classes: tuple[ClassLabel, ...]


def labeled_dataset(
    scenarios: list[tuple[Scenario, ClassLabel]],
    poll_interval_s: int,
) -> LabeledDataset:
    """One normalized, labeled sample per generated snapshot, with the
    normalizer fitted over the union of all scenarios' rates."""
    if not scenarios:
        raise SynthError("no scenarios given")
    names_by_id: dict[int, str] = {}
    for _, label in scenarios:
        if names_by_id.setdefault(label.id, label.name) != label.name:
            raise SynthError(f"conflicting names for class id {label.id}")
    if len(names_by_id) < 2:
        raise SynthError("need >= 2 distinct labels")

    per_scenario = [
        (scenario, label, trace_rates(generate_trace(scenario, poll_interval_s)))
        for scenario, label in scenarios
    ]
    union = [rv for _, _, rates in per_scenario for rv in rates]
    if all(
        max(rv.values[name] for rv in union) == min(rv.values[name] for rv in union)
        for name in FEATURES_V1
    ):
        raise SynthError("degenerate dataset: every feature is constant across the union")
    norm = fit_normalizer(union, FEATURES_V1)

    samples = []
    for scenario, label, rates in per_scenario:
        for idx, rv in enumerate(rates):
            samples.append(
                TrainingSample(
                    vector=normalize(rv, norm),
                    label=label,
                    source_id=f"{scenario.kind}:{scenario.seed}:{idx}",
                )
            )
    classes = tuple(ClassLabel(id=i, name=names_by_id[i]) for i in sorted(names_by_id))
    return LabeledDataset(samples=tuple(samples), norm=norm, classes=classes)
