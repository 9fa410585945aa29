"""SNMP v2c UDP client: one GetRequest per (target, interface) poll."""

from __future__ import annotations

import random
import socket
import time
from dataclasses import dataclass

from netstate.features import CounterSnapshot
from netstate.snmp import ber

SYS_UPTIME_OID = (1, 3, 6, 1, 2, 1, 1, 3, 0)
IF_ENTRY = (1, 3, 6, 1, 2, 1, 2, 2, 1)

# ifEntry column for each polled counter, in wire order
COUNTER_COLUMNS = (
    ("in_octets", 10),
    ("out_octets", 16),
    ("in_errors", 14),
    ("out_errors", 20),
    ("in_discards", 13),
    ("out_discards", 19),
    ("in_nucast_pkts", 12),
    ("in_ucast_pkts", 11),
)

DEFAULT_TIMEOUT_S = 2.0
DEFAULT_RETRIES = 3

_rng = random.Random()


class CollectorError(Exception):
    """Base for poll failures the scheduler converts into events."""


class TargetUnreachable(CollectorError):
    def __init__(self, target_id: str, host: str, port: int, attempts: int):
        super().__init__(f"target {target_id} ({host}:{port}) unreachable after {attempts} attempts")
        self.target_id = target_id
        self.attempts = attempts


class SnmpError(CollectorError):
    def __init__(self, status: int, index: int):
        super().__init__(f"agent returned error_status={status} error_index={index}")
        self.status = status
        self.index = index


@dataclass(frozen=True)
class Target:
    id: str
    host: str
    port: int = 161
    community: str = "public"
    if_indexes: tuple[int, ...] = (1,)
    poll_interval_s: int = 10

    def __post_init__(self):
        object.__setattr__(self, "if_indexes", tuple(self.if_indexes))
        if not self.id:
            raise ValueError("target id must be non-empty")
        if not 0 < self.port < 65536:
            raise ValueError(f"port {self.port} outside (0, 65536)")
        if not 1 <= self.poll_interval_s <= 300:
            raise ValueError(f"poll_interval_s {self.poll_interval_s} outside [1, 300]")
        if not self.if_indexes:
            raise ValueError("if_indexes must be non-empty")
        if any(i < 1 for i in self.if_indexes):
            raise ValueError(f"if_indexes must be >= 1, got {self.if_indexes}")


def counter_oid(column: int, if_index: int) -> tuple[int, ...]:
    return IF_ENTRY + (column, if_index)


def poll_varbinds(if_index: int) -> tuple[ber.VarBind, ...]:
    """sysUpTime.0 plus the eight interface counters, Null placeholders."""
    vbs = [ber.VarBind(SYS_UPTIME_OID, ber.Null())]
    for _, column in COUNTER_COLUMNS:
        vbs.append(ber.VarBind(counter_oid(column, if_index), ber.Null()))
    return tuple(vbs)


def poll_once(
    target: Target,
    if_index: int,
    *,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    retries: int = DEFAULT_RETRIES,
    request_id: int | None = None,
) -> CounterSnapshot:
    """One GetRequest for sysUpTime + the 8 interface counters.

    Each attempt sends with a fresh request id and waits up to timeout_s;
    responses whose request id does not match are ignored while the
    attempt's clock keeps running. error_status != 0 raises immediately
    (the agent answered; retrying cannot help). ``request_id`` pins the
    first attempt's id (attempt k uses request_id + k).
    """
    column_names = {counter_oid(column, if_index): name for name, column in COUNTER_COLUMNS}
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        try:
            sock.connect((target.host, target.port))
        except OSError as exc:
            raise TargetUnreachable(target.id, target.host, target.port, 0) from exc
        for attempt in range(retries):
            rid = (request_id + attempt) if request_id is not None else _rng.randrange(1, 2**31)
            request = ber.encode_message(
                1,
                target.community,
                ber.Pdu(ber.PduKind.GET_REQUEST, rid, varbinds=poll_varbinds(if_index)),
            )
            sent_at_ms = int(time.time() * 1000)
            deadline = time.monotonic() + timeout_s
            try:
                sock.send(request)
            except OSError:
                # ICMP unreachable surfaced on the connected socket; retry
                time.sleep(min(timeout_s, 0.05))
                continue
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                sock.settimeout(remaining)
                try:
                    data = sock.recv(65535)
                except socket.timeout:
                    break
                except OSError:
                    break
                try:
                    _, _, pdu = ber.decode_message(data)
                except ber.DecodeError:
                    continue
                if pdu.kind is not ber.PduKind.RESPONSE or pdu.request_id != rid:
                    continue
                return _snapshot_from_response(target, if_index, sent_at_ms, pdu, column_names)
        raise TargetUnreachable(target.id, target.host, target.port, retries)
    finally:
        sock.close()


def _snapshot_from_response(
    target: Target,
    if_index: int,
    sent_at_ms: int,
    pdu: ber.Pdu,
    column_names: dict[tuple[int, ...], str],
) -> CounterSnapshot:
    if pdu.error_status != 0:
        raise SnmpError(pdu.error_status, pdu.error_index)
    counters: dict[str, int] = {}
    uptime: int | None = None
    degraded = False
    for vb in pdu.varbinds:
        if vb.oid == SYS_UPTIME_OID:
            if isinstance(vb.value, ber.TimeTicks):
                uptime = vb.value.value
            else:
                degraded = True
            continue
        name = column_names.get(vb.oid)
        if name is None:
            continue  # unsolicited varbind; none of ours
        if isinstance(vb.value, ber.Counter32):
            counters[name] = vb.value.value
        else:
            degraded = True  # NoSuchInstance or unexpected type: omit
    if len(counters) < len(COUNTER_COLUMNS):
        degraded = True
    if uptime is None:
        uptime = 0
        degraded = True
    return CounterSnapshot(
        target_id=target.id,
        if_index=if_index,
        timestamp_ms=sent_at_ms,
        uptime_ticks=uptime,
        counters=counters,
        degraded=degraded,
    )
