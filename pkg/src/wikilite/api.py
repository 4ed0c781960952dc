"""JSON projections shared by the CLI and the HTTP service.

Both front ends call these functions and serialize the result with
:func:`dumps`, so a CLI ``--json`` line and an HTTP body for the same
arguments are byte-identical.
"""

from __future__ import annotations

import json
from typing import Optional

from . import rank
from .attributes import evaluate, evaluate_count, parse_query
from .catalog import Catalog, unresolve_many
from .keywords import DEFAULT_WEIGHTS, KeywordIndex
from .model import reference_to_json, statement_to_json
from .store import TABLES, Store


def dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


class Database:
    """A read-mode store plus the query objects built on it."""

    def __init__(self, store: Store):
        self.store = store
        self.catalog = Catalog(store)
        self.keywords = KeywordIndex(store)

    @classmethod
    def open(cls, path) -> "Database":
        return cls(Store.open(path, "read"))

    def close(self) -> None:
        self.store.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _pick(values: dict, lang: Optional[str]):
    if lang is not None:
        return {lang: values[lang]} if lang in values else {}
    return dict(sorted(values.items()))


def display_label(labels: dict[str, str], lang: Optional[str] = None) -> Optional[str]:
    for key in (lang, "en"):
        if key is not None and key in labels:
            return labels[key]
    return labels[min(labels)] if labels else None


def item_json(db: Database, entity_id: str, lang: Optional[str] = None) -> dict:
    rec = db.catalog.record(entity_id)
    return {
        "id": rec.id,
        "labels": _pick(rec.labels, lang),
        "descriptions": _pick(rec.descriptions, lang),
        "aliases": _pick(rec.aliases, lang),
        "sitelinks": dict(sorted(rec.sitelinks.items())),
        "types": db.catalog.get_types(entity_id),
    }


def statements_json(db: Database, entity_id: str, property: Optional[str] = None) -> dict:
    statements = db.catalog.get_statements(entity_id, property)
    return {"id": entity_id, "statements": [statement_to_json(st) for st in statements]}


def references_json(db: Database, entity_id: str) -> dict:
    refs = db.catalog.get_references(entity_id)
    return {
        "id": entity_id,
        "references": [
            {"property": prop, "statement": ordinal, "reference": reference_to_json(group)}
            for prop, ordinal, group in refs
        ],
    }


def rank_json(db: Database, entity_id: str) -> dict:
    return {"id": entity_id, "pagerank": rank.get_rank(db.store, entity_id)}


def search_json(db: Database, query: str, limit: int = 10, max_edit: int = 2,
                lang: Optional[str] = None, weights=DEFAULT_WEIGHTS) -> dict:
    hits = db.keywords.search(query, limit, max_edit, weights)
    out = []
    for hit in hits:
        row = {"id": hit.id, "label": display_label(db.catalog.record(hit.id).labels, lang)}
        row.update({k: v for k, v in hit.to_json().items() if k != "id"})
        out.append(row)
    return {"query": query, "hits": out}


def attr_search_json(db: Database, query: str, limit: Optional[int] = None,
                     count_only: bool = False) -> dict:
    clauses = parse_query(query)
    if count_only:
        return {"count": evaluate_count(db.store, clauses)}
    ids = evaluate(db.store, clauses)
    shown = ids if limit is None else ids[:limit]
    return {"count": int(ids.size), "ids": unresolve_many(db.store, shown.tolist())}


def stats_json(db: Database) -> dict:
    return {
        "meta": db.store.meta(),
        "tables": {t: db.store.count(t) for t in TABLES},
    }
