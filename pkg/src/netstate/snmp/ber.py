"""BER codec for the SNMP v2c subset this service speaks.

Definite-length encoding only, minimal integer contents, application tags
Counter32/Gauge32/TimeTicks, context tags for the three PDU kinds and the
two v2c exception varbind values. Decoding is strict (offset-bearing
errors, no over-reads, trailing bytes rejected) except for unknown value
tags inside varbinds, which surface as Opaque values instead of failing
the whole message.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

TAG_INTEGER = 0x02
TAG_OCTET_STRING = 0x04
TAG_NULL = 0x05
TAG_OID = 0x06
TAG_SEQUENCE = 0x30
TAG_COUNTER32 = 0x41
TAG_GAUGE32 = 0x42
TAG_TIMETICKS = 0x43
TAG_NO_SUCH_OBJECT = 0x80
TAG_NO_SUCH_INSTANCE = 0x81

MAX_OID_ARC = 2**32 - 1
_MAX_INT_CONTENT = 16  # sane bound; nothing in the subset needs more


class EncodeError(ValueError):
    pass


class DecodeError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Integer:
    value: int


@dataclass(frozen=True)
class OctetString:
    value: bytes


@dataclass(frozen=True)
class Null:
    pass


@dataclass(frozen=True)
class Oid:
    arcs: tuple[int, ...]


@dataclass(frozen=True)
class Counter32:
    value: int


@dataclass(frozen=True)
class Gauge32:
    value: int


@dataclass(frozen=True)
class TimeTicks:
    value: int


@dataclass(frozen=True)
class NoSuchObject:
    pass


@dataclass(frozen=True)
class NoSuchInstance:
    pass


@dataclass(frozen=True)
class Opaque:
    """Unknown varbind value tag, carried through undecoded."""

    tag: int
    payload: bytes


Value = Integer | OctetString | Null | Oid | Counter32 | Gauge32 | TimeTicks | NoSuchObject | NoSuchInstance | Opaque


@dataclass(frozen=True)
class VarBind:
    oid: tuple[int, ...]
    value: Value

    def __post_init__(self):
        _validate_oid(self.oid)


class PduKind(enum.IntEnum):
    GET_REQUEST = 0xA0
    GET_NEXT_REQUEST = 0xA1
    RESPONSE = 0xA2


@dataclass(frozen=True)
class Pdu:
    kind: PduKind
    request_id: int
    error_status: int = 0
    error_index: int = 0
    varbinds: tuple[VarBind, ...] = ()

    def __post_init__(self):
        if not -(2**31) <= self.request_id < 2**31:
            raise EncodeError(f"request_id {self.request_id} outside 32-bit signed range")


def _validate_oid(arcs: tuple[int, ...]) -> None:
    if len(arcs) < 2:
        raise EncodeError(f"oid needs at least 2 arcs, got {arcs}")
    if arcs[0] > 2:
        raise EncodeError(f"oid first arc must be <= 2, got {arcs[0]}")
    if arcs[0] < 2 and arcs[1] > 39:
        raise EncodeError(f"oid second arc must be <= 39 under arc {arcs[0]}")
    for a in arcs:
        if not 0 <= a <= MAX_OID_ARC:
            raise EncodeError(f"oid arc {a} outside [0, 2^32-1]")


# -- encoding --


def _encode_length(n: int) -> bytes:
    if n < 0x80:
        return bytes([n])
    body = n.to_bytes((n.bit_length() + 7) // 8, "big")
    return bytes([0x80 | len(body)]) + body


def _tlv(tag: int, content: bytes) -> bytes:
    return bytes([tag]) + _encode_length(len(content)) + content


def _int_content(value: int) -> bytes:
    length = max(1, (value.bit_length() + 8) // 8)  # two's complement with sign bit
    return value.to_bytes(length, "big", signed=True)


def _uint_content(value: int) -> bytes:
    if value < 0:
        raise EncodeError(f"unsigned value cannot be negative: {value}")
    length = value.bit_length() // 8 + 1  # extra 0x00 when the high bit is set
    return value.to_bytes(length, "big")


def _base128(value: int) -> bytes:
    chunk = [value & 0x7F]
    value >>= 7
    while value:
        chunk.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(chunk))


def _oid_content(arcs: tuple[int, ...]) -> bytes:
    _validate_oid(arcs)
    # first two arcs pack into one base-128 subidentifier: 40*a + b
    out = bytearray(_base128(40 * arcs[0] + arcs[1]))
    for arc in arcs[2:]:
        out.extend(_base128(arc))
    return bytes(out)


def encode_value(value: Value) -> bytes:
    if isinstance(value, Integer):
        return _tlv(TAG_INTEGER, _int_content(value.value))
    if isinstance(value, OctetString):
        return _tlv(TAG_OCTET_STRING, value.value)
    if isinstance(value, Null):
        return _tlv(TAG_NULL, b"")
    if isinstance(value, Oid):
        return _tlv(TAG_OID, _oid_content(value.arcs))
    if isinstance(value, Counter32):
        return _tlv(TAG_COUNTER32, _uint_content(_check_u32(value.value)))
    if isinstance(value, Gauge32):
        return _tlv(TAG_GAUGE32, _uint_content(_check_u32(value.value)))
    if isinstance(value, TimeTicks):
        return _tlv(TAG_TIMETICKS, _uint_content(_check_u32(value.value)))
    if isinstance(value, NoSuchObject):
        return _tlv(TAG_NO_SUCH_OBJECT, b"")
    if isinstance(value, NoSuchInstance):
        return _tlv(TAG_NO_SUCH_INSTANCE, b"")
    if isinstance(value, Opaque):
        return _tlv(value.tag, value.payload)
    raise EncodeError(f"cannot encode value of type {type(value).__name__}")


def _check_u32(v: int) -> int:
    if not 0 <= v < 2**32:
        raise EncodeError(f"value {v} outside unsigned 32-bit range")
    return v


def encode_pdu(pdu: Pdu) -> bytes:
    content = (
        _tlv(TAG_INTEGER, _int_content(pdu.request_id))
        + _tlv(TAG_INTEGER, _int_content(pdu.error_status))
        + _tlv(TAG_INTEGER, _int_content(pdu.error_index))
        + _tlv(
            TAG_SEQUENCE,
            b"".join(
                _tlv(TAG_SEQUENCE, _tlv(TAG_OID, _oid_content(vb.oid)) + encode_value(vb.value))
                for vb in pdu.varbinds
            ),
        )
    )
    return _tlv(int(pdu.kind), content)


def encode_message(version: int, community: str, pdu: Pdu) -> bytes:
    try:
        community_bytes = community.encode("latin-1")
    except UnicodeEncodeError as exc:
        raise EncodeError(f"community not encodable: {exc}") from exc
    content = (
        _tlv(TAG_INTEGER, _int_content(version))
        + _tlv(TAG_OCTET_STRING, community_bytes)
        + encode_pdu(pdu)
    )
    return _tlv(TAG_SEQUENCE, content)


# -- decoding --


class _Reader:
    __slots__ = ("data", "pos", "end")

    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def fail(self, message: str) -> "DecodeError":
        return DecodeError(message, self.pos)

    @property
    def remaining(self) -> int:
        return self.end - self.pos

    def done(self) -> bool:
        return self.pos >= self.end

    def read_byte(self) -> int:
        if self.pos >= self.end:
            raise self.fail("unexpected end of data")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def read_bytes(self, n: int) -> bytes:
        if n > self.remaining:
            raise self.fail(f"need {n} bytes, only {self.remaining} left")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def read_length(self) -> int:
        first = self.read_byte()
        if first < 0x80:
            return first
        n_bytes = first & 0x7F
        if n_bytes == 0:
            self.pos -= 1
            raise self.fail("indefinite length not allowed")
        if n_bytes > 8:
            raise self.fail(f"length-of-length {n_bytes} too large")
        body = self.read_bytes(n_bytes)
        return int.from_bytes(body, "big")

    def read_tlv(self) -> tuple[int, "_Reader"]:
        """Read one TLV; returns the tag and a sub-reader over the content."""
        tag = self.read_byte()
        length = self.read_length()
        if length > self.remaining:
            raise self.fail(f"length {length} overruns message ({self.remaining} bytes left)")
        inner = _Reader(self.data, self.pos, self.pos + length)
        self.pos += length
        return tag, inner

    def expect_tlv(self, tag: int, what: str) -> "_Reader":
        at = self.pos
        got, inner = self.read_tlv()
        if got != tag:
            raise DecodeError(f"expected {what} (tag 0x{tag:02X}), got 0x{got:02X}", at)
        return inner


def _parse_int(reader: _Reader) -> int:
    content = reader.data[reader.pos : reader.end]
    if not content:
        raise reader.fail("empty integer content")
    if len(content) > _MAX_INT_CONTENT:
        raise reader.fail(f"integer content longer than {_MAX_INT_CONTENT} bytes")
    if len(content) > 1:
        if content[0] == 0x00 and content[1] < 0x80:
            raise reader.fail("non-minimal integer (redundant leading 0x00)")
        if content[0] == 0xFF and content[1] >= 0x80:
            raise reader.fail("non-minimal integer (redundant leading 0xFF)")
    return int.from_bytes(content, "big", signed=True)


def _parse_u32(reader: _Reader, what: str) -> int:
    value = _parse_int(reader)
    if not 0 <= value < 2**32:
        raise reader.fail(f"{what} value {value} outside unsigned 32-bit range")
    return value


def _parse_oid(reader: _Reader) -> tuple[int, ...]:
    if reader.done():
        raise reader.fail("empty oid content")
    arcs: list[int] = []
    first = True
    while not reader.done():
        at = reader.pos
        arc = 0
        while True:
            b = reader.read_byte()
            if arc == 0 and b == 0x80:
                raise DecodeError("non-minimal oid arc (leading 0x80)", at)
            arc = (arc << 7) | (b & 0x7F)
            # first subidentifier packs 40*a+b, so its bound sits 80 higher
            if arc > (MAX_OID_ARC + 80 if first else MAX_OID_ARC):
                raise DecodeError("oid arc exceeds 2^32-1", at)
            if not b & 0x80:
                break
            if reader.done():
                raise reader.fail("truncated oid arc")
        if first:
            if arc < 40:
                arcs.extend((0, arc))
            elif arc < 80:
                arcs.extend((1, arc - 40))
            else:
                arcs.extend((2, arc - 80))
            first = False
        else:
            arcs.append(arc)
    return tuple(arcs)


def _parse_value(tag: int, inner: _Reader) -> Value:
    if tag == TAG_INTEGER:
        return Integer(_parse_int(inner))
    if tag == TAG_OCTET_STRING:
        return OctetString(inner.data[inner.pos : inner.end])
    if tag == TAG_NULL:
        if not inner.done():
            raise inner.fail("null value with non-empty content")
        return Null()
    if tag == TAG_OID:
        return Oid(_parse_oid(inner))
    if tag == TAG_COUNTER32:
        return Counter32(_parse_u32(inner, "Counter32"))
    if tag == TAG_GAUGE32:
        return Gauge32(_parse_u32(inner, "Gauge32"))
    if tag == TAG_TIMETICKS:
        return TimeTicks(_parse_u32(inner, "TimeTicks"))
    if tag == TAG_NO_SUCH_OBJECT:
        if not inner.done():
            raise inner.fail("NoSuchObject with non-empty content")
        return NoSuchObject()
    if tag == TAG_NO_SUCH_INSTANCE:
        if not inner.done():
            raise inner.fail("NoSuchInstance with non-empty content")
        return NoSuchInstance()
    return Opaque(tag=tag, payload=inner.data[inner.pos : inner.end])


def _parse_varbind(reader: _Reader) -> VarBind:
    vb = reader.expect_tlv(TAG_SEQUENCE, "varbind SEQUENCE")
    oid_inner = vb.expect_tlv(TAG_OID, "varbind OID")
    arcs = _parse_oid(oid_inner)
    tag, value_inner = vb.read_tlv()
    value = _parse_value(tag, value_inner)
    if not vb.done():
        raise vb.fail("trailing bytes inside varbind")
    try:
        return VarBind(oid=arcs, value=value)
    except EncodeError as exc:
        raise DecodeError(str(exc), vb.pos) from exc


def decode_message(data: bytes) -> tuple[int, str, Pdu]:
    """Strict parse of one SNMP v2c message. Raises DecodeError with the
    failing byte offset on any structural problem."""
    root = _Reader(bytes(data))
    if root.done():
        raise root.fail("empty input")
    msg = root.expect_tlv(TAG_SEQUENCE, "message SEQUENCE")
    if not root.done():
        raise root.fail("trailing bytes after message")

    version = _parse_int(msg.expect_tlv(TAG_INTEGER, "version INTEGER"))
    community_inner = msg.expect_tlv(TAG_OCTET_STRING, "community OCTET STRING")
    community = community_inner.data[community_inner.pos : community_inner.end].decode("latin-1")

    at = msg.pos
    pdu_tag, pdu_inner = msg.read_tlv()
    try:
        kind = PduKind(pdu_tag)
    except ValueError:
        raise DecodeError(f"unsupported PDU tag 0x{pdu_tag:02X}", at) from None
    if not msg.done():
        raise msg.fail("trailing bytes after PDU")

    request_id = _parse_int(pdu_inner.expect_tlv(TAG_INTEGER, "request-id INTEGER"))
    if not -(2**31) <= request_id < 2**31:
        raise DecodeError(f"request_id {request_id} outside 32-bit signed range", at)
    error_status = _parse_int(pdu_inner.expect_tlv(TAG_INTEGER, "error-status INTEGER"))
    error_index = _parse_int(pdu_inner.expect_tlv(TAG_INTEGER, "error-index INTEGER"))
    vbl = pdu_inner.expect_tlv(TAG_SEQUENCE, "varbind list SEQUENCE")
    if not pdu_inner.done():
        raise pdu_inner.fail("trailing bytes after varbind list")
    varbinds = []
    while not vbl.done():
        varbinds.append(_parse_varbind(vbl))

    return version, community, Pdu(
        kind=kind,
        request_id=request_id,
        error_status=error_status,
        error_index=error_index,
        varbinds=tuple(varbinds),
    )
