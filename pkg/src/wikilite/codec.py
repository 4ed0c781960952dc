"""Binary codecs for stored values.

Records are msgpack arrays with a fixed, sorted field layout, so equal
records always encode to the same bytes.  Posting lists are the first id
followed by successive gaps, each as an unsigned LEB128 varint (seven data
bits per byte, high bit set on every byte but the last).
"""

from __future__ import annotations

import struct
from decimal import Decimal, InvalidOperation
from typing import Iterable, Optional

import msgpack
import numpy as np

from .errors import CorruptPosting, CorruptRecord, InvalidPosting
from .model import (
    EntityRef, ExternalId, GlobeCoordinate, ItemRecord, MonolingualText, OpaqueValue,
    Quantity, Rank, ReferenceGroup, Snak, SnakKind, Statement, StringValue, Time, Url,
)

RECORD_FORMAT = 1

_RANKS = (Rank.PREFERRED, Rank.NORMAL, Rank.DEPRECATED)
_RANK_CODE = {r: i for i, r in enumerate(_RANKS)}
_KINDS = (SnakKind.VALUE, SnakKind.SOMEVALUE, SnakKind.NOVALUE)
_KIND_CODE = {k: i for i, k in enumerate(_KINDS)}

_ID = struct.Struct(">Q")
_DOUBLE = struct.Struct(">d")


def pack_id(nid: int) -> bytes:
    return _ID.pack(nid)


def unpack_id(data: bytes) -> int:
    return _ID.unpack(data)[0]


def pack_double(x: float) -> bytes:
    return _DOUBLE.pack(x)


def unpack_double(data: bytes) -> float:
    return _DOUBLE.unpack(data)[0]


def prop_sort_key(prop: str) -> tuple[int, str]:
    return (int(prop[1:]) if prop[1:].isdigit() else -1, prop)


# records -------------------------------------------------------------------

def _opt_str(x: Optional[Decimal]) -> Optional[str]:
    return None if x is None else str(x)


def _enc_value(dv) -> list:
    t = type(dv)
    if t is EntityRef:
        return [0, dv.id]
    if t is StringValue:
        return [1, dv.value]
    if t is ExternalId:
        return [2, dv.value]
    if t is Url:
        return [3, dv.value]
    if t is MonolingualText:
        return [4, dv.language, dv.text]
    if t is Quantity:
        return [5, str(dv.amount), dv.unit, _opt_str(dv.lower), _opt_str(dv.upper)]
    if t is Time:
        return [6, dv.time, dv.precision, dv.calendar, dv.timezone, dv.before, dv.after]
    if t is GlobeCoordinate:
        return [7, dv.latitude, dv.longitude, dv.precision, dv.globe, dv.altitude]
    if t is OpaqueValue:
        return [8, dv.type_tag, dv.raw]
    raise TypeError(f"cannot encode datavalue {dv!r}")


def _enc_snak(s: Snak) -> list:
    dv = None if s.datavalue is None else _enc_value(s.datavalue)
    return [_KIND_CODE[s.kind], s.property, s.datatype, dv]


def _enc_snak_map(snaks: dict[str, list[Snak]], order: Iterable[str]) -> list:
    return [[p, [_enc_snak(s) for s in snaks[p]]] for p in order]


def _enc_statement(st: Statement) -> list:
    quals = _enc_snak_map(st.qualifiers, sorted(st.qualifiers, key=prop_sort_key))
    refs = [_enc_snak_map(g.snaks, g.snak_order) for g in st.references]
    return [_RANK_CODE[st.rank], _enc_snak(st.mainsnak), quals, refs]


def encode_record(record: ItemRecord) -> bytes:
    claims = [
        [p, [_enc_statement(st) for st in record.claims[p]]]
        for p in sorted(record.claims, key=prop_sort_key)
    ]
    payload = [
        RECORD_FORMAT,
        record.id,
        sorted(record.labels.items()),
        sorted(record.descriptions.items()),
        sorted(record.aliases.items()),
        sorted(record.sitelinks.items()),
        claims,
    ]
    return msgpack.packb(payload, use_bin_type=True)


def _str(x) -> str:
    if type(x) is not str:
        raise TypeError("expected str")
    return x


def _opt_dec(x) -> Optional[Decimal]:
    return None if x is None else Decimal(_str(x))


def _opt_float(x) -> Optional[float]:
    if x is None:
        return None
    if type(x) not in (float, int):
        raise TypeError("expected number")
    return float(x)


def _int(x) -> int:
    if type(x) is not int:
        raise TypeError("expected int")
    return x


def _code(table: tuple, x):
    if type(x) is not int or not 0 <= x < len(table):
        raise ValueError(f"bad enum code {x!r}")
    return table[x]


def _dec_value(raw):
    tag = raw[0]
    if tag == 0:
        return EntityRef(_str(raw[1]))
    if tag == 1:
        return StringValue(_str(raw[1]))
    if tag == 2:
        return ExternalId(_str(raw[1]))
    if tag == 3:
        return Url(_str(raw[1]))
    if tag == 4:
        return MonolingualText(_str(raw[1]), _str(raw[2]))
    if tag == 5:
        return Quantity(Decimal(_str(raw[1])), _str(raw[2]), _opt_dec(raw[3]), _opt_dec(raw[4]))
    if tag == 6:
        return Time(_str(raw[1]), _int(raw[2]), _str(raw[3]), _int(raw[4]), _int(raw[5]), _int(raw[6]))
    if tag == 7:
        return GlobeCoordinate(
            float(_opt_float(raw[1])), float(_opt_float(raw[2])), _opt_float(raw[3]),
            _str(raw[4]), _opt_float(raw[5]),
        )
    if tag == 8:
        return OpaqueValue(_str(raw[1]), _str(raw[2]))
    raise ValueError(f"unknown datavalue tag {tag!r}")


def _dec_snak(raw) -> Snak:
    kind, prop, datatype, dv = raw
    if datatype is not None:
        _str(datatype)
    return Snak(_code(_KINDS, kind), _str(prop), None if dv is None else _dec_value(dv), datatype)


def _dec_snak_map(raw) -> tuple[dict[str, list[Snak]], list[str]]:
    snaks = {}
    for prop, items in raw:
        snaks[_str(prop)] = [_dec_snak(s) for s in items]
    return snaks, [p for p, _ in raw]


def _dec_statement(raw) -> Statement:
    rank, mainsnak, quals, refs = raw
    qualifiers, _ = _dec_snak_map(quals)
    references = [ReferenceGroup(*_dec_snak_map(g)) for g in refs]
    return Statement(_dec_snak(mainsnak), _code(_RANKS, rank), qualifiers, references)


def _str_pairs(raw) -> dict[str, str]:
    return {_str(k): _str(v) for k, v in raw}


def decode_raw(data: bytes) -> list:
    """Unpack a stored record without building dataclasses.

    Layout: ``[format, id, labels, descriptions, aliases, sitelinks, claims]``
    where maps are lists of ``[key, value]`` pairs.
    """
    try:
        raw = msgpack.unpackb(data, raw=False, use_list=True, strict_map_key=True)
    except Exception as exc:
        raise CorruptRecord(f"undecodable record: {exc}") from None
    if type(raw) is not list or len(raw) != 7 or raw[0] != RECORD_FORMAT:
        raise CorruptRecord("record header mismatch")
    return raw


def decode_record(data: bytes) -> ItemRecord:
    raw = decode_raw(data)
    try:
        _, eid, labels, descriptions, aliases, sitelinks, claims = raw
        return ItemRecord(
            id=_str(eid),
            labels=_str_pairs(labels),
            descriptions=_str_pairs(descriptions),
            aliases={_str(k): [_str(a) for a in v] for k, v in aliases},
            sitelinks=_str_pairs(sitelinks),
            claims={_str(p): [_dec_statement(st) for st in sts] for p, sts in claims},
        )
    except (TypeError, ValueError, IndexError, KeyError, AttributeError, InvalidOperation) as exc:
        raise CorruptRecord(f"malformed record structure: {exc}") from None


# posting lists ---------------------------------------------------------------

_EMPTY = np.empty(0, dtype=np.uint64)
_U64 = 1 << 64
_LOW_BYTES = bytes(range(0x80))


_SMALL = 64  # below this many values the numpy setup costs more than a plain loop


def _varint_loop(values) -> bytes:
    out = bytearray()
    for v in values:
        while v >= 0x80:
            out.append((v & 0x7F) | 0x80)
            v >>= 7
        out.append(v)
    return bytes(out)


def varint_encode(values: np.ndarray) -> bytes:
    """LEB128-encode an array of unsigned 64-bit integers."""
    values = np.asarray(values, dtype=np.uint64)
    n = values.size
    if n == 0:
        return b""
    if n < _SMALL:
        return _varint_loop(values.tolist())
    nbytes = np.ones(n, dtype=np.int64)
    for k in range(1, 10):
        nbytes += (values >> np.uint64(7 * k)) != 0
    offsets = np.zeros(n, dtype=np.int64)
    np.cumsum(nbytes[:-1], out=offsets[1:])
    out = np.empty(int(nbytes.sum()), dtype=np.uint8)
    for k in range(10):
        mask = nbytes > k
        if not mask.any():
            break
        chunk = ((values[mask] >> np.uint64(7 * k)) & np.uint64(0x7F)).astype(np.uint8)
        more = (nbytes[mask] > k + 1).astype(np.uint8) << np.uint8(7)
        out[offsets[mask] + k] = chunk | more
    return out.tobytes()


def varint_decode(data: bytes) -> np.ndarray:
    buf = np.frombuffer(data, dtype=np.uint8)
    if buf.size == 0:
        return _EMPTY
    if buf[-1] & 0x80:
        raise CorruptPosting("truncated varint")
    ends = np.flatnonzero(buf < 0x80)
    starts = np.empty_like(ends)
    starts[0] = 0
    starts[1:] = ends[:-1] + 1
    lengths = ends - starts + 1
    if lengths.max() > 10:
        raise CorruptPosting("varint longer than 10 bytes")
    if np.any((buf[ends] == 0) & (lengths > 1)):
        raise CorruptPosting("overlong varint")
    pos = np.arange(buf.size) - np.repeat(starts, lengths)
    payload = buf & np.uint8(0x7F)
    if np.any((pos == 9) & (payload > 1)):
        raise CorruptPosting("varint overflows 64 bits")
    parts = payload.astype(np.uint64) << (pos * 7).astype(np.uint64)
    return np.bitwise_or.reduceat(parts, starts)


def as_posting(ids) -> np.ndarray:
    """Coerce to a uint64 array and check it is strictly increasing."""
    try:
        if isinstance(ids, np.ndarray):
            if ids.size and ids.dtype.kind not in "iu":  # bool arrays are kind "b"
                raise TypeError(f"got dtype {ids.dtype}")
            if ids.dtype.kind == "i" and ids.size and ids.min() < 0:
                raise ValueError("negative id")
            arr = ids.astype(np.uint64, copy=False)
        else:
            ids = list(ids)
            if not all(isinstance(x, (int, np.integer)) and not isinstance(x, bool) for x in ids):
                raise TypeError("non-integer id")
            arr = np.array([int(x) for x in ids], dtype=np.uint64)
    except (OverflowError, ValueError, TypeError) as exc:
        raise InvalidPosting(f"ids must be unsigned 64-bit integers: {exc}") from None
    if arr.ndim != 1:
        raise InvalidPosting("posting list must be one-dimensional")
    if arr.size > 1 and not np.all(arr[1:] > arr[:-1]):
        raise InvalidPosting("posting list must be strictly increasing")
    return arr


def _small_gaps(ids) -> Optional[list]:
    """Gaps of a short plain-int list, or None to take the numpy path."""
    gaps, prev = [], -1
    for x in ids:
        if type(x) is not int or x <= prev or x >= _U64:
            return None  # let as_posting decide, and word the error
        gaps.append(x - prev if prev >= 0 else x)
        prev = x
    return gaps


def encode_posting(ids) -> bytes:
    if isinstance(ids, list) and len(ids) < _SMALL:
        gaps = _small_gaps(ids)
        if gaps is not None:
            return _varint_loop(gaps)
    arr = as_posting(ids)
    if arr.size == 0:
        return b""
    gaps = np.empty_like(arr)
    gaps[0] = arr[0]
    np.subtract(arr[1:], arr[:-1], out=gaps[1:])
    return varint_encode(gaps)


def _decode_loop(data: bytes) -> list[int]:
    if data[-1] & 0x80:
        raise CorruptPosting("truncated varint")
    ids, total, value, shift, n = [], 0, 0, 0, 0
    for b in data:
        n += 1
        if n > 10:
            raise CorruptPosting("varint longer than 10 bytes")
        if n == 10 and b & 0x7F > 1:
            raise CorruptPosting("varint overflows 64 bits")
        value |= (b & 0x7F) << shift
        shift += 7
        if b < 0x80:
            if b == 0 and n > 1:
                raise CorruptPosting("overlong varint")
            if ids and value == 0:
                raise CorruptPosting("zero gap: posting list is not strictly increasing")
            total += value
            if total >= _U64:
                raise CorruptPosting("posting ids overflow 64 bits")
            ids.append(total)
            value = shift = n = 0
    return ids


def decode_posting_list(data: bytes) -> list[int]:
    """Like :func:`decode_posting` but returns plain ints; cheaper for short lists."""
    if not data:
        return []
    if len(data) < 4 * _SMALL:
        return _decode_loop(data)
    return decode_posting(data).tolist()


def decode_posting(data: bytes) -> np.ndarray:
    """Decode to a strictly increasing uint64 array.

    Raises :class:`CorruptPosting` on truncation, overflow, or a zero gap.
    """
    if 0 < len(data) < _SMALL:
        return np.array(_decode_loop(data), dtype=np.uint64)
    gaps = varint_decode(data)
    if gaps.size > 1 and not np.all(gaps[1:]):
        raise CorruptPosting("zero gap: posting list is not strictly increasing")
    ids = np.cumsum(gaps, dtype=np.uint64)
    if ids.size > 1 and not np.all(ids[1:] > ids[:-1]):
        raise CorruptPosting("posting ids overflow 64 bits")
    return ids


def count_posting(data: bytes) -> int:
    """Number of ids in an encoded posting list, without decoding it."""
    return len(data) - len(data.translate(None, _LOW_BYTES))
