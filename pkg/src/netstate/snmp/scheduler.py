"""Poll scheduling: per-stream cadence with deterministic jitter.

A stream is one (target, if_index) pair. Each stream has at most one poll
in flight, so sink delivery stays ordered per stream and a dead target can
never stall the others. Every failure surfaces as a PollEvent; nothing
escapes the scheduler loop. Clock, sleep and the poll function are
injectable so tests can run years of schedule in milliseconds.
"""

from __future__ import annotations

import hashlib
import heapq
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable

from netstate.features import CounterSnapshot
from netstate.snmp.client import CollectorError, Target, poll_once

JITTER_FRAC = 0.1
_WAKE_S = 0.2  # worst-case latency for noticing stop/add/remove


@dataclass(frozen=True)
class PollEvent:
    """One scheduler outcome: a snapshot, or a typed error string."""

    target_id: str
    if_index: int
    snapshot: CounterSnapshot | None = None
    error: str | None = None


def poll_jitter(target_id: str, if_index: int, poll_seq: int, frac: float = JITTER_FRAC) -> float:
    """Deterministic jitter fraction in [-frac, +frac] for one poll slot."""
    digest = hashlib.sha256(f"{target_id}/{if_index}/{poll_seq}".encode()).digest()
    u = int.from_bytes(digest[:8], "big") / 2**64
    return (2.0 * u - 1.0) * frac


@dataclass
class _Stream:
    target: Target
    if_index: int
    due: float
    polls: int = 0
    dead: bool = False


class PollScheduler:
    """Drives poll_once over all configured streams.

    inline=True executes polls on the scheduler thread (simulated-clock
    tests); otherwise a thread pool runs up to max_outstanding concurrent
    polls and the sink must tolerate concurrent calls.
    """

    def __init__(
        self,
        targets: Iterable[Target],
        sink: Callable[[PollEvent], None],
        *,
        poll_fn: Callable[[Target, int], CounterSnapshot] | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
        max_outstanding: int = 64,
        inline: bool = False,
    ):
        self._sink = sink
        self._poll_fn = poll_fn or poll_once
        self._clock = clock
        self._sleep = sleep
        self._max_outstanding = max_outstanding
        self._inline = inline
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._heap: list[tuple[float, int, _Stream]] = []
        self._seq = 0
        self._targets: dict[str, Target] = {}
        self._streams: dict[tuple[str, int], _Stream] = {}
        for target in targets:
            self.add_target(target)

    # -- target management (callable from other threads) --

    def add_target(self, target: Target) -> None:
        with self._lock:
            if target.id in self._targets:
                raise ValueError(f"duplicate target id {target.id!r}")
            self._targets[target.id] = target
            now = self._clock()
            for if_index in target.if_indexes:
                stream = _Stream(target=target, if_index=if_index, due=now)
                self._streams[(target.id, if_index)] = stream
                self._push(stream)

    def remove_target(self, target_id: str) -> Target:
        with self._lock:
            target = self._targets.pop(target_id, None)
            if target is None:
                raise KeyError(target_id)
            for if_index in target.if_indexes:
                stream = self._streams.pop((target_id, if_index), None)
                if stream is not None:
                    stream.dead = True  # stale heap entries get skipped
            return target

    def targets(self) -> list[Target]:
        with self._lock:
            return list(self._targets.values())

    def stop(self) -> None:
        self._stop.set()

    # -- main loop --

    def run(self, until: float | None = None) -> None:
        """Blocking loop; returns when stop() is called or clock >= until."""
        executor = None
        if not self._inline:
            executor = ThreadPoolExecutor(
                max_workers=self._max_outstanding, thread_name_prefix="poll"
            )
        try:
            while not self._stop.is_set():
                now = self._clock()
                if until is not None and now >= until:
                    break
                stream, due = self._pop_due(now)
                if stream is None:
                    self._sleep(min(due - now, _WAKE_S) if due is not None else _WAKE_S)
                    continue
                if executor is None:
                    self._complete(stream, due, self._do_poll(stream))
                else:
                    executor.submit(self._poll_and_complete, stream, due)
        finally:
            if executor is not None:
                executor.shutdown(wait=True)

    def _pop_due(self, now: float) -> tuple[_Stream | None, float | None]:
        """Earliest due live stream, or (None, next_due) when nothing is ripe."""
        with self._lock:
            while self._heap:
                due, _, stream = self._heap[0]
                if stream.dead:
                    heapq.heappop(self._heap)
                    continue
                if due > now:
                    return None, due
                heapq.heappop(self._heap)
                return stream, due
        return None, None

    def _push(self, stream: _Stream) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (stream.due, self._seq, stream))

    def _do_poll(self, stream: _Stream) -> PollEvent:
        target = stream.target
        try:
            snapshot = self._poll_fn(target, stream.if_index)
            return PollEvent(target.id, stream.if_index, snapshot=snapshot)
        except CollectorError as exc:
            return PollEvent(target.id, stream.if_index, error=str(exc))
        except Exception as exc:  # the loop must survive arbitrary poll bugs
            return PollEvent(target.id, stream.if_index, error=f"poll failed: {exc!r}")

    def _poll_and_complete(self, stream: _Stream, due: float) -> None:
        self._complete(stream, due, self._do_poll(stream))

    def _complete(self, stream: _Stream, due: float, event: PollEvent) -> None:
        try:
            self._sink(event)
        except Exception:
            pass  # a sink bug must not stop polling
        with self._lock:
            if stream.dead:
                return
            stream.polls += 1
            gap = stream.target.poll_interval_s * (
                1.0 + poll_jitter(stream.target.id, stream.if_index, stream.polls)
            )
            # anchor on the previous due time so jitter does not accumulate,
            # but never schedule into the past
            stream.due = max(self._clock(), due + gap)
            self._push(stream)
