"""Item retrieval over a built store.

Entity ids are interned to 64-bit numeric ids: the top bit marks a
property (P), the remaining bits count up in first-seen order per
namespace.  ``id_map`` maps the id string to its 8-byte big-endian number
and ``id_map_rev`` maps it back.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np

from .codec import decode_record, pack_id, prop_sort_key, unpack_id
from .errors import UnknownEntity
from .model import ENTITY_ID_RE, EntityRef, ItemRecord, Rank, ReferenceGroup, SnakKind, Statement
from .store import Store

PROPERTY_BIT = 1 << 63


def is_property(nid: int) -> bool:
    return bool(nid & PROPERTY_BIT)


@dataclass(frozen=True)
class RelationEdge:
    property: str
    direction: str  # "forward" (a -> b) or "backward" (b -> a)


TEXT_FIELDS = ("label", "description", "aliases")


def resolve(store: Store, entity_id: str) -> Optional[int]:
    value = store.get("id_map", entity_id.encode())
    return None if value is None else unpack_id(value)


def unresolve(store: Store, nid: int) -> str:
    value = store.get("id_map_rev", pack_id(nid))
    if value is None:
        raise UnknownEntity(f"numeric id {nid} is not registered")
    return value.decode()


def unresolve_many(store: Store, nids: Iterable[int]) -> list[str]:
    keys = [pack_id(int(n)) for n in nids]
    out = []
    for nid, value in zip(keys, store.get_many("id_map_rev", keys)):
        if value is None:
            raise UnknownEntity(f"numeric id {unpack_id(nid)} is not registered")
        out.append(value.decode())
    return out


class Catalog:
    """Read-side projections of stored items."""

    def __init__(self, store: Store, cache_size: int = 1024):
        self.store = store
        self._record = lru_cache(maxsize=cache_size)(self._load_record)

    def resolve(self, entity_id: str) -> Optional[int]:
        return resolve(self.store, entity_id)

    def unresolve(self, nid: int) -> str:
        return unresolve(self.store, nid)

    def _require(self, entity_id: str) -> int:
        nid = self.resolve(entity_id) if ENTITY_ID_RE.match(entity_id) else None
        if nid is None:
            raise UnknownEntity(entity_id)
        return nid

    def _load_record(self, entity_id: str) -> ItemRecord:
        nid = self._require(entity_id)
        data = self.store.get("items", pack_id(nid))
        if data is None:
            raise UnknownEntity(entity_id)
        return decode_record(data)

    def record(self, entity_id: str) -> ItemRecord:
        """The stored record; raises UnknownEntity for ids without one."""
        return self._record(entity_id)

    def has_record(self, entity_id: str) -> bool:
        nid = self.resolve(entity_id)
        return nid is not None and self.store.get("items", pack_id(nid)) is not None

    def get_text(self, entity_id: str, field: str, language: Optional[str] = None):
        if field not in TEXT_FIELDS:
            raise ValueError(f"field must be one of {TEXT_FIELDS}")
        rec = self.record(entity_id)
        values = {"label": rec.labels, "description": rec.descriptions, "aliases": rec.aliases}[field]
        if language is None:
            return dict(values)
        value = values.get(language)
        return list(value) if isinstance(value, list) else value

    def get_sitelinks(self, entity_id: str) -> dict[str, str]:
        return dict(self.record(entity_id).sitelinks)

    def get_statements(self, entity_id: str, property: Optional[str] = None) -> list[Statement]:
        claims = self.record(entity_id).claims
        if property is not None:
            return list(claims.get(property, []))
        return [st for sts in claims.values() for st in sts]

    def get_references(self, entity_id: str) -> list[tuple[str, int, ReferenceGroup]]:
        """Every reference group as ``(property, statement ordinal, group)``."""
        out = []
        for prop, statements in self.record(entity_id).claims.items():
            for ordinal, st in enumerate(statements):
                out.extend((prop, ordinal, group) for group in st.references)
        return out

    def get_types(self, entity_id: str) -> list[str]:
        types = {}
        for st in self.record(entity_id).claims.get("P31", []):
            if _edge_target(st) is not None:
                types[_edge_target(st)] = None
        return list(types)

    def get_inverse(self, target: str, property: Optional[str] = None) -> np.ndarray:
        """Numeric ids of entities with a statement pointing at ``target``."""
        from .attributes import QueryClause, evaluate

        self._require(target)
        return evaluate(self.store, [QueryClause("AND", property, target)])

    def get_relation(self, a: str, b: str) -> list[RelationEdge]:
        self._require(a)
        self._require(b)
        forward = self._props_pointing(a, b)
        backward = self._props_pointing(b, a)
        return ([RelationEdge(p, "forward") for p in forward]
                + [RelationEdge(p, "backward") for p in backward])

    def _props_pointing(self, source: str, target: str) -> list[str]:
        if not self.has_record(source):
            return []
        claims = self.record(source).claims
        props = [p for p, sts in claims.items() if any(_edge_target(st) == target for st in sts)]
        return sorted(props, key=prop_sort_key)


def _edge_target(st: Statement) -> Optional[str]:
    if st.rank is Rank.DEPRECATED or st.mainsnak.kind is not SnakKind.VALUE:
        return None
    dv = st.mainsnak.datavalue
    return dv.id if type(dv) is EntityRef else None
