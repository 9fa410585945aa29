"""Synthetic SNMP v2c agent: serves scenario-derived counters over UDP.

Counters are interpolated from the scenario clock, so the agent answers at
any real-time cadence; a clock multiplier accelerates the scenario timeline
(not the wire protocol) for fast tests. Fault injection: drop_all,
delay_ms, reboot_now(), plus live scenario switching that keeps counters
monotone.
"""

from __future__ import annotations

import socket
import threading
import time

from netstate.features import COUNTER32_MOD, COUNTER_NAMES, counter_delta
from netstate.snmp import ber
from netstate.snmp.client import COUNTER_COLUMNS, SYS_UPTIME_OID, counter_oid
from netstate.synth import Scenario, Trace, interval_deltas

_GRANULARITY_S = 1  # scenario-time resolution of the interpolation engine


class _Engine:
    """Cumulative counter curve for one scenario or trace, repeating its
    pattern forever. Values at arbitrary scenario times come from linear
    interpolation between interval boundaries (monotone by construction)."""

    def __init__(self, boundaries: list[dict[str, int]], interval_s: float):
        self.boundaries = boundaries  # len n+1, unbounded ints from 0
        self.interval_s = interval_s
        self.duration_s = (len(boundaries) - 1) * interval_s
        self.total = boundaries[-1]

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "_Engine":
        n = max(scenario.duration_s // _GRANULARITY_S, 1)
        cum = [{name: 0 for name in COUNTER_NAMES}]
        for deltas in interval_deltas(scenario, _GRANULARITY_S, n):
            cum.append({name: cum[-1][name] + deltas[name] for name in COUNTER_NAMES})
        return cls(cum, float(_GRANULARITY_S))

    @classmethod
    def from_trace(cls, trace: Trace) -> "_Engine":
        cum = [{name: 0 for name in COUNTER_NAMES}]
        prev = trace.base
        interval_s = None
        for snap in trace.snapshots:
            deltas = counter_delta(prev, snap)
            if deltas is None:
                raise ValueError("trace with uptime regression cannot drive the agent")
            interval_s = (snap.timestamp_ms - prev.timestamp_ms) / 1000.0
            cum.append({name: cum[-1][name] + deltas.get(name, 0) for name in COUNTER_NAMES})
            prev = snap
        return cls(cum, interval_s)

    def cumulative_at(self, tau: float) -> dict[str, int]:
        tau = max(tau, 0.0)
        loops, rem = divmod(tau, self.duration_s)
        i = min(int(rem // self.interval_s), len(self.boundaries) - 2)
        frac = (rem - i * self.interval_s) / self.interval_s
        out = {}
        for name in COUNTER_NAMES:
            lo = self.boundaries[i][name]
            hi = self.boundaries[i + 1][name]
            out[name] = self.total[name] * int(loops) + lo + int((hi - lo) * frac)
        return out


class SyntheticAgent:
    """UDP responder; use as a context manager or call close()."""

    def __init__(
        self,
        bind: tuple[str, int] = ("127.0.0.1", 0),
        *,
        scenario: Scenario | None = None,
        trace: Trace | None = None,
        community: str = "public",
        if_indexes: tuple[int, ...] = (1,),
        clock_multiplier: float = 1.0,
        clock=time.monotonic,
    ):
        if (scenario is None) == (trace is None):
            raise ValueError("give exactly one of scenario or trace")
        self.community = community
        self.if_indexes = tuple(if_indexes)
        self.clock_multiplier = clock_multiplier
        self._clock = clock
        self._lock = threading.Lock()
        self._engine = _Engine.from_scenario(scenario) if scenario else _Engine.from_trace(trace)
        self._epoch = clock()  # scenario-clock origin
        self._boot_epoch = self._epoch  # uptime origin
        self._base = {i: {name: 0 for name in COUNTER_NAMES} for i in self.if_indexes}
        self.drop_all = False
        self.delay_ms = 0
        self.requests_seen = 0

        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind(bind)
        self.host, self.port = self._sock.getsockname()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, name="synth-agent", daemon=True)
        self._thread.start()

    # -- control surface (safe from other threads) --

    def set_scenario(self, scenario: Scenario) -> None:
        """Switch the traffic pattern; counters continue monotonically."""
        with self._lock:
            cum = self._engine.cumulative_at(self._tau())
            for i in self.if_indexes:
                self._base[i] = {name: self._base[i][name] + cum[name] for name in COUNTER_NAMES}
            self._engine = _Engine.from_scenario(scenario)
            self._epoch = self._clock()

    def reboot_now(self) -> None:
        """Device restart: uptime and counters drop to zero."""
        with self._lock:
            now = self._clock()
            self._boot_epoch = now
            self._epoch = now
            self._base = {i: {name: 0 for name in COUNTER_NAMES} for i in self.if_indexes}

    def close(self) -> None:
        self._stop.set()
        self._thread.join(timeout=2)
        self._sock.close()

    def __enter__(self) -> "SyntheticAgent":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- serving --

    def _tau(self) -> float:
        return (self._clock() - self._epoch) * self.clock_multiplier

    def _serve(self) -> None:
        self._sock.settimeout(0.05)
        while not self._stop.is_set():
            try:
                data, addr = self._sock.recvfrom(65535)
            except socket.timeout:
                continue
            except OSError:
                return
            reply = self._handle(data)
            if reply is not None:
                try:
                    self._sock.sendto(reply, addr)
                except OSError:
                    return

    def _handle(self, data: bytes) -> bytes | None:
        try:
            _, community, pdu = ber.decode_message(data)
        except ber.DecodeError:
            return None
        with self._lock:
            self.requests_seen += 1
            if self.drop_all:
                return None
            if community != self.community:
                return None  # v2c agents drop bad-community requests silently
            if pdu.kind not in (ber.PduKind.GET_REQUEST, ber.PduKind.GET_NEXT_REQUEST):
                return None
            delay_ms = self.delay_ms
            tau = self._tau()
            uptime = int((self._clock() - self._boot_epoch) * self.clock_multiplier * 100) % COUNTER32_MOD
            counters = {
                i: {
                    name: (self._base[i][name] + cum) % COUNTER32_MOD
                    for name, cum in self._engine.cumulative_at(tau).items()
                }
                for i in self.if_indexes
            }
        answers = tuple(
            ber.VarBind(vb.oid, self._value_for(vb.oid, uptime, counters)) for vb in pdu.varbinds
        )
        reply = ber.Pdu(ber.PduKind.RESPONSE, pdu.request_id, varbinds=answers)
        if delay_ms:
            time.sleep(delay_ms / 1000.0)
        return ber.encode_message(1, community, reply)

    def _value_for(self, oid, uptime: int, counters) -> ber.Value:
        if oid == SYS_UPTIME_OID:
            return ber.TimeTicks(uptime)
        for name, column in COUNTER_COLUMNS:
            for i in self.if_indexes:
                if oid == counter_oid(column, i):
                    return ber.Counter32(counters[i][name])
        return ber.NoSuchInstance()


def run_agent(bind_addr: tuple[str, int], source, **kwargs) -> SyntheticAgent:
    """Start an agent from a Scenario or a Trace; returns the live handle."""
    if isinstance(source, Trace):
        return SyntheticAgent(bind_addr, trace=source, **kwargs)
    if isinstance(source, Scenario):
        return SyntheticAgent(bind_addr, scenario=source, **kwargs)
    raise TypeError(f"expected Scenario or Trace, got {type(source).__name__}")
