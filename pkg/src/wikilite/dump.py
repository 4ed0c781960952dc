"""Streaming reader for Wikidata entity JSON dumps.

A dump is one JSON array with an entity object per line::

    [
    {"type":"item","id":"Q1",...},
    {"type":"item","id":"Q2",...}
    ]

``stream_entities`` peels off that framing and yields raw lines;
``parse_entity`` turns a line into an :class:`~wikilite.model.ItemRecord`.
Parsing never raises on bad input, it returns :class:`Skipped` or
:class:`ParseFailure` so a long build can count and carry on.
"""

from __future__ import annotations

import bz2
import gzip
import io
import json
import logging
import os
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import BinaryIO, Iterable, Iterator, Optional, Union

from .errors import MalformedFraming, MalformedSnak, UnreadableSource
from .model import (
    ENTITY_ID_RE, PROPERTY_ID_RE, EntityRef, ExternalId, GlobeCoordinate, ItemRecord,
    MonolingualText, OpaqueValue, Quantity, Rank, ReferenceGroup, Snak, SnakKind,
    Statement, StringValue, Time, Url, iri_to_entity,
)

logger = logging.getLogger(__name__)

GZIP_MAGIC = b"\x1f\x8b"
BZIP2_MAGIC = b"BZh"
COMPRESSIONS = ("none", "gzip", "bzip2", "auto")

_ENTITY_PREFIX = {"item": "Q", "property": "P"}


@dataclass(frozen=True)
class RawEntityDoc:
    line_number: int
    data: bytes


@dataclass(frozen=True)
class Skipped:
    line_number: int
    entity_id: str
    reason: str


@dataclass(frozen=True)
class ParseFailure:
    line_number: int
    reason: str


ParseResult = Union[ItemRecord, Skipped, ParseFailure]


def detect_compression(head: bytes) -> str:
    if head.startswith(GZIP_MAGIC):
        return "gzip"
    if head.startswith(BZIP2_MAGIC):
        return "bzip2"
    return "none"


def _peek(stream, n: int) -> bytes:
    if hasattr(stream, "peek"):
        return stream.peek(n)[:n]
    pos = stream.tell()
    head = stream.read(n)
    stream.seek(pos)
    return head


def open_dump(source: Union[str, os.PathLike, BinaryIO], compression: str = "auto") -> BinaryIO:
    """Return a binary stream of decompressed dump text."""
    if compression not in COMPRESSIONS:
        raise ValueError(f"unknown compression {compression!r}")
    if isinstance(source, (str, os.PathLike)):
        try:
            stream = open(source, "rb")
        except OSError as exc:
            raise UnreadableSource(f"{source}: {exc}") from exc
    else:
        stream = source
    try:
        if compression == "auto":
            compression = detect_compression(_peek(stream, 3))
    except (OSError, ValueError) as exc:
        raise UnreadableSource(str(exc)) from exc
    if compression == "gzip":
        return gzip.GzipFile(fileobj=stream, mode="rb")
    if compression == "bzip2":
        return bz2.BZ2File(stream, mode="rb")
    return stream


def stream_entities(
    source: Union[str, os.PathLike, BinaryIO], compression: str = "auto"
) -> Iterator[RawEntityDoc]:
    """Yield one :class:`RawEntityDoc` per entity line of a dump.

    Line numbers are 1-based and count the framing lines. JSON validity is
    not checked here.
    """
    stream = open_dump(source, compression)
    opened = False
    closed = False
    try:
        for number, line in enumerate(_lines(stream), 1):
            text = line.strip()
            if not text:
                continue
            if not opened:
                if text == b"[":
                    opened = True
                    continue
                if text == b"[]":
                    opened = closed = True
                    continue
                raise MalformedFraming(f"line {number}: expected '[' to open the dump")
            if closed:
                raise MalformedFraming(f"line {number}: content after closing ']'")
            if text == b"]":
                closed = True
                continue
            if text.endswith(b","):
                text = text[:-1].rstrip()
            yield RawEntityDoc(number, text)
    finally:
        if stream is not source:
            stream.close()
    if not opened:
        raise MalformedFraming("empty dump: no opening '['")
    if not closed:
        logger.warning("dump ended without a closing ']'; input may be truncated")


def _lines(stream) -> Iterable[bytes]:
    try:
        yield from stream
    except (OSError, EOFError, ValueError) as exc:
        raise UnreadableSource(str(exc)) from exc


# entity parsing ------------------------------------------------------------

class _SchemaError(ValueError):
    pass


def _as_map(value) -> dict:
    # the dump writes empty maps as [] in places
    if value is None or value == []:
        return {}
    if not isinstance(value, dict):
        raise _SchemaError(f"expected an object, got {type(value).__name__}")
    return value


def _as_str(value, what: str) -> str:
    if not isinstance(value, str):
        raise _SchemaError(f"{what} must be a string")
    return value


def _as_number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedSnak(f"{what} must be a number")
    return float(value)


def _as_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedSnak(f"{what} must be an integer")
    return value


def _canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _decimal(text, what: str) -> Decimal:
    if not isinstance(text, str):
        raise MalformedSnak(f"{what} must be a decimal string")
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise MalformedSnak(f"{what} is not a decimal: {text!r}") from None
    if not value.is_finite():
        raise MalformedSnak(f"{what} is not finite")
    return value


def _parse_datavalue(raw: dict, datatype: Optional[str]):
    if not isinstance(raw, dict) or "value" not in raw or not isinstance(raw.get("type"), str):
        raise MalformedSnak("datavalue needs 'type' and 'value'")
    tag, value = raw["type"], raw["value"]

    if tag == "wikibase-entityid":
        if not isinstance(value, dict):
            raise MalformedSnak("entity datavalue must be an object")
        eid = value.get("id")
        if eid is None and value.get("entity-type") in _ENTITY_PREFIX and isinstance(value.get("numeric-id"), int):
            eid = _ENTITY_PREFIX[value["entity-type"]] + str(value["numeric-id"])
        if isinstance(eid, str) and ENTITY_ID_RE.match(eid):
            return EntityRef(eid)
        # lexemes, forms, senses
        return OpaqueValue(tag, _canonical_json(value))

    if tag == "string":
        if not isinstance(value, str):
            raise MalformedSnak("string datavalue must be a string")
        if datatype == "external-id":
            return ExternalId(value)
        if datatype == "url":
            return Url(value)
        return StringValue(value)

    if tag == "monolingualtext":
        if not isinstance(value, dict):
            raise MalformedSnak("monolingualtext datavalue must be an object")
        text, lang = value.get("text"), value.get("language")
        if not isinstance(text, str) or not isinstance(lang, str):
            raise MalformedSnak("monolingualtext needs string 'text' and 'language'")
        return MonolingualText(lang, text)

    if tag == "quantity":
        if not isinstance(value, dict):
            raise MalformedSnak("quantity datavalue must be an object")
        unit = value.get("unit", "1")
        if not isinstance(unit, str):
            raise MalformedSnak("quantity unit must be a string")
        upper = value.get("upperBound")
        lower = value.get("lowerBound")
        return Quantity(
            amount=_decimal(value.get("amount"), "amount"),
            unit=iri_to_entity(unit),
            lower=None if lower is None else _decimal(lower, "lowerBound"),
            upper=None if upper is None else _decimal(upper, "upperBound"),
        )

    if tag == "time":
        if not isinstance(value, dict):
            raise MalformedSnak("time datavalue must be an object")
        timestamp = value.get("time")
        if not isinstance(timestamp, str):
            raise MalformedSnak("time needs a 'time' string")
        precision = _as_int(value.get("precision"), "precision")
        if not 0 <= precision <= 14:
            raise MalformedSnak(f"time precision {precision} outside 0..14")
        calendar = value.get("calendarmodel")
        if not isinstance(calendar, str):
            raise MalformedSnak("time needs a 'calendarmodel'")
        return Time(
            time=timestamp, precision=precision, calendar=iri_to_entity(calendar),
            timezone=_as_int(value.get("timezone", 0), "timezone"),
            before=_as_int(value.get("before", 0), "before"),
            after=_as_int(value.get("after", 0), "after"),
        )

    if tag == "globecoordinate":
        if not isinstance(value, dict):
            raise MalformedSnak("globecoordinate datavalue must be an object")
        lat = _as_number(value.get("latitude"), "latitude")
        lon = _as_number(value.get("longitude"), "longitude")
        if not -90.0 <= lat <= 90.0 or not -180.0 <= lon <= 180.0:
            raise MalformedSnak(f"coordinate out of range: ({lat}, {lon})")
        precision = value.get("precision")
        altitude = value.get("altitude")
        globe = value.get("globe", "http://www.wikidata.org/entity/Q2")
        if not isinstance(globe, str):
            raise MalformedSnak("globe must be a string")
        return GlobeCoordinate(
            latitude=lat, longitude=lon,
            precision=None if precision is None else _as_number(precision, "precision"),
            globe=iri_to_entity(globe),
            altitude=None if altitude is None else _as_number(altitude, "altitude"),
        )

    return OpaqueValue(tag, _canonical_json(value))


def normalize_snak(raw: dict) -> Snak:
    """Convert one dump snak object into a typed :class:`Snak`.

    Raises :class:`MalformedSnak` for an unknown snaktype, a bad property
    id, or a value snak without a usable datavalue.
    """
    if not isinstance(raw, dict):
        raise MalformedSnak("snak must be an object")
    try:
        kind = SnakKind(raw.get("snaktype"))
    except ValueError:
        raise MalformedSnak(f"unknown snaktype {raw.get('snaktype')!r}") from None
    prop = raw.get("property")
    if not isinstance(prop, str) or not PROPERTY_ID_RE.match(prop):
        raise MalformedSnak(f"bad property id {prop!r}")
    datatype = raw.get("datatype")
    if datatype is not None and not isinstance(datatype, str):
        raise MalformedSnak("datatype must be a string")
    if kind is not SnakKind.VALUE:
        return Snak(kind, prop, None, datatype)
    if "datavalue" not in raw:
        raise MalformedSnak("value snak without datavalue")
    return Snak(kind, prop, _parse_datavalue(raw["datavalue"], datatype), datatype)


def _snak_map(raw, order_raw) -> tuple[dict[str, list[Snak]], list[str]]:
    raw = _as_map(raw)
    snaks = {}
    for prop, items in raw.items():
        if not PROPERTY_ID_RE.match(prop) or not isinstance(items, list):
            raise _SchemaError(f"bad snak group {prop!r}")
        snaks[prop] = [normalize_snak(s) for s in items]
    if order_raw is None:
        return snaks, list(snaks)
    if not isinstance(order_raw, list) or len(set(order_raw)) != len(order_raw) or set(order_raw) != set(snaks):
        raise _SchemaError("snak order does not match the snak keys")
    return snaks, list(order_raw)


def _parse_statement(raw, prop: str) -> Statement:
    if not isinstance(raw, dict):
        raise _SchemaError("statement must be an object")
    mainsnak = normalize_snak(raw.get("mainsnak"))
    if mainsnak.property != prop:
        raise _SchemaError(f"mainsnak property {mainsnak.property} filed under {prop}")
    try:
        rank = Rank(raw.get("rank", "normal"))
    except ValueError:
        raise _SchemaError(f"unknown rank {raw.get('rank')!r}") from None
    qualifiers = {}
    if raw.get("qualifiers"):
        snaks, order = _snak_map(raw["qualifiers"], raw.get("qualifiers-order"))
        qualifiers = {p: snaks[p] for p in order}
    references = []
    for group in raw.get("references") or []:
        if not isinstance(group, dict):
            raise _SchemaError("reference group must be an object")
        snaks, order = _snak_map(group.get("snaks"), group.get("snaks-order"))
        references.append(ReferenceGroup(snaks, order))
    return Statement(mainsnak, rank, qualifiers, references)


def _term_map(raw, languages) -> dict[str, str]:
    out = {}
    for lang, entry in _as_map(raw).items():
        if languages is not None and lang not in languages:
            continue
        out[lang] = _as_str(_as_map(entry).get("value"), "term value")
    return out


def _alias_map(raw, languages) -> dict[str, list[str]]:
    out = {}
    for lang, entries in _as_map(raw).items():
        if languages is not None and lang not in languages:
            continue
        if not isinstance(entries, list):
            raise _SchemaError("aliases must be lists")
        seen = dict.fromkeys(_as_str(_as_map(e).get("value"), "alias value") for e in entries)
        if seen:
            out[lang] = list(seen)
    return out


def record_from_json(obj: dict, language_filter: Optional[set[str]] = None) -> ItemRecord:
    """Build an ItemRecord from a decoded entity object.

    Raises on record-level schema violations. A statement that fails to
    parse is dropped and counted in ``dropped_statements``.
    """
    eid = obj["id"]
    sitelinks = {}
    for site, entry in _as_map(obj.get("sitelinks")).items():
        sitelinks[site] = _as_str(_as_map(entry).get("title"), "sitelink title")
    claims = {}
    dropped = 0
    for prop, raw_statements in _as_map(obj.get("claims")).items():
        if not PROPERTY_ID_RE.match(prop):
            raise _SchemaError(f"bad claim property {prop!r}")
        if not isinstance(raw_statements, list):
            raise _SchemaError(f"claims for {prop} must be a list")
        statements = []
        for raw in raw_statements:
            try:
                statements.append(_parse_statement(raw, prop))
            except (MalformedSnak, _SchemaError, TypeError, ValueError) as exc:
                logger.debug("%s %s: dropping statement: %s", eid, prop, exc)
                dropped += 1
        if statements:
            claims[prop] = statements
    return ItemRecord(
        id=eid,
        labels=_term_map(obj.get("labels"), language_filter),
        descriptions=_term_map(obj.get("descriptions"), language_filter),
        aliases=_alias_map(obj.get("aliases"), language_filter),
        sitelinks=sitelinks,
        claims=claims,
        dropped_statements=dropped,
    )


def parse_entity(doc: RawEntityDoc, language_filter: Optional[set[str]] = None) -> ParseResult:
    try:
        obj = json.loads(doc.data)
    except (ValueError, UnicodeDecodeError) as exc:
        return ParseFailure(doc.line_number, f"invalid JSON: {exc}")
    if not isinstance(obj, dict):
        return ParseFailure(doc.line_number, "entity is not a JSON object")
    eid = obj.get("id")
    if not isinstance(eid, str):
        return ParseFailure(doc.line_number, "entity has no string 'id'")
    if not ENTITY_ID_RE.match(eid):
        return Skipped(doc.line_number, eid, "not an item or property")
    try:
        return record_from_json(obj, language_filter)
    except (_SchemaError, TypeError, ValueError, AttributeError) as exc:
        return ParseFailure(doc.line_number, f"{eid}: {exc}")
