"""Entity data model and its dump-shaped JSON projection.

The JSON produced here uses the same field names as the Wikidata entity
dump, so ``wikilite.dump.parse_entity`` accepts it back unchanged.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterator, Optional, Union

ENTITY_ID_RE = re.compile(r"[QP][0-9]+\Z")
PROPERTY_ID_RE = re.compile(r"P[0-9]+\Z")
ENTITY_IRI_PREFIX = "http://www.wikidata.org/entity/"
_ENTITY_IRI_RE = re.compile(r"https?://www\.wikidata\.org/entity/([QP][0-9]+)\Z")


class SnakKind(str, enum.Enum):
    VALUE = "value"
    SOMEVALUE = "somevalue"
    NOVALUE = "novalue"


class Rank(str, enum.Enum):
    PREFERRED = "preferred"
    NORMAL = "normal"
    DEPRECATED = "deprecated"


@dataclass(frozen=True)
class EntityRef:
    id: str


@dataclass(frozen=True)
class StringValue:
    value: str


@dataclass(frozen=True)
class ExternalId:
    value: str


@dataclass(frozen=True)
class Url:
    value: str


@dataclass(frozen=True)
class MonolingualText:
    language: str
    text: str


@dataclass(frozen=True)
class Quantity:
    amount: Decimal
    unit: str = "1"
    lower: Optional[Decimal] = None
    upper: Optional[Decimal] = None


@dataclass(frozen=True)
class Time:
    time: str
    precision: int
    calendar: str
    timezone: int = 0
    before: int = 0
    after: int = 0


@dataclass(frozen=True)
class GlobeCoordinate:
    latitude: float
    longitude: float
    precision: Optional[float]
    globe: str
    altitude: Optional[float] = None


@dataclass(frozen=True)
class OpaqueValue:
    """A datavalue of a type wikilite does not model; kept verbatim."""

    type_tag: str
    raw: str


DataValue = Union[
    EntityRef, StringValue, ExternalId, Url, MonolingualText,
    Quantity, Time, GlobeCoordinate, OpaqueValue,
]


@dataclass(frozen=True)
class Snak:
    kind: SnakKind
    property: str
    datavalue: Optional[DataValue] = None
    datatype: Optional[str] = None

    def __post_init__(self):
        if (self.kind is SnakKind.VALUE) != (self.datavalue is not None):
            raise ValueError("datavalue must be present iff the snak kind is 'value'")


@dataclass
class ReferenceGroup:
    snaks: dict[str, list[Snak]]
    snak_order: list[str]

    def __post_init__(self):
        if len(set(self.snak_order)) != len(self.snak_order) or set(self.snak_order) != set(self.snaks):
            raise ValueError("snak_order must list every snaks key exactly once")


@dataclass
class Statement:
    mainsnak: Snak
    rank: Rank = Rank.NORMAL
    qualifiers: dict[str, list[Snak]] = field(default_factory=dict)
    references: list[ReferenceGroup] = field(default_factory=list)


@dataclass
class ItemRecord:
    id: str
    labels: dict[str, str] = field(default_factory=dict)
    descriptions: dict[str, str] = field(default_factory=dict)
    aliases: dict[str, list[str]] = field(default_factory=dict)
    sitelinks: dict[str, str] = field(default_factory=dict)
    claims: dict[str, list[Statement]] = field(default_factory=dict)
    # statements dropped while parsing; build bookkeeping only
    dropped_statements: int = field(default=0, compare=False, repr=False)


def entity_refs(record: ItemRecord) -> Iterator[tuple[str, str]]:
    """Yield ``(property, target)`` for every indexable statement.

    Only value-kind mainsnaks carrying an entity reference count, and
    deprecated statements are skipped. Order follows ``record.claims``.
    """
    for prop, statements in record.claims.items():
        for st in statements:
            if st.rank is Rank.DEPRECATED:
                continue
            dv = st.mainsnak.datavalue
            if type(dv) is EntityRef:
                yield prop, dv.id


def entity_to_iri(value: str) -> str:
    if ENTITY_ID_RE.match(value):
        return ENTITY_IRI_PREFIX + value
    return value


def iri_to_entity(value: str) -> str:
    """Return the entity id at the end of a Wikidata entity IRI, else the input."""
    m = _ENTITY_IRI_RE.match(value)
    return m.group(1) if m else value


def format_amount(amount: Decimal) -> str:
    s = format(amount, "f")
    return s if s.startswith("-") else "+" + s


# JSON projection -----------------------------------------------------------

def datavalue_to_json(dv: DataValue) -> dict:
    if isinstance(dv, EntityRef):
        kind = "item" if dv.id[0] == "Q" else "property"
        value = {"entity-type": kind, "numeric-id": int(dv.id[1:]), "id": dv.id}
        return {"value": value, "type": "wikibase-entityid"}
    if isinstance(dv, (StringValue, ExternalId, Url)):
        return {"value": dv.value, "type": "string"}
    if isinstance(dv, MonolingualText):
        return {"value": {"text": dv.text, "language": dv.language}, "type": "monolingualtext"}
    if isinstance(dv, Quantity):
        value = {"amount": format_amount(dv.amount), "unit": entity_to_iri(dv.unit)}
        if dv.upper is not None:
            value["upperBound"] = format_amount(dv.upper)
        if dv.lower is not None:
            value["lowerBound"] = format_amount(dv.lower)
        return {"value": value, "type": "quantity"}
    if isinstance(dv, Time):
        value = {
            "time": dv.time, "timezone": dv.timezone, "before": dv.before,
            "after": dv.after, "precision": dv.precision,
            "calendarmodel": entity_to_iri(dv.calendar),
        }
        return {"value": value, "type": "time"}
    if isinstance(dv, GlobeCoordinate):
        value = {
            "latitude": dv.latitude, "longitude": dv.longitude, "altitude": dv.altitude,
            "precision": dv.precision, "globe": entity_to_iri(dv.globe),
        }
        return {"value": value, "type": "globecoordinate"}
    if isinstance(dv, OpaqueValue):
        return {"value": json.loads(dv.raw), "type": dv.type_tag}
    raise TypeError(f"not a datavalue: {dv!r}")


def snak_to_json(snak: Snak) -> dict:
    out = {"snaktype": snak.kind.value, "property": snak.property}
    if snak.datatype is not None:
        out["datatype"] = snak.datatype
    if snak.datavalue is not None:
        out["datavalue"] = datavalue_to_json(snak.datavalue)
    return out


def _snak_map_to_json(snaks: dict[str, list[Snak]], order: list[str]) -> dict:
    return {p: [snak_to_json(s) for s in snaks[p]] for p in order}


def reference_to_json(group: ReferenceGroup) -> dict:
    return {
        "snaks": _snak_map_to_json(group.snaks, group.snak_order),
        "snaks-order": list(group.snak_order),
    }


def statement_to_json(st: Statement) -> dict:
    out = {"mainsnak": snak_to_json(st.mainsnak), "type": "statement", "rank": st.rank.value}
    if st.qualifiers:
        order = list(st.qualifiers)
        out["qualifiers"] = _snak_map_to_json(st.qualifiers, order)
        out["qualifiers-order"] = order
    if st.references:
        out["references"] = [reference_to_json(g) for g in st.references]
    return out


def record_to_json(record: ItemRecord) -> dict:
    """Serialize a record in the entity dump's own layout."""
    return {
        "id": record.id,
        "type": "item" if record.id[0] == "Q" else "property",
        "labels": {k: {"language": k, "value": v} for k, v in record.labels.items()},
        "descriptions": {k: {"language": k, "value": v} for k, v in record.descriptions.items()},
        "aliases": {k: [{"language": k, "value": a} for a in v] for k, v in record.aliases.items()},
        "sitelinks": {k: {"site": k, "title": v, "badges": []} for k, v in record.sitelinks.items()},
        "claims": {p: [statement_to_json(st) for st in sts] for p, sts in record.claims.items()},
    }
