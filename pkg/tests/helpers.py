"""Fixture builders: dump-shaped entity dicts, dump files, small databases."""

from __future__ import annotations

import bz2
import gzip
import json
import random
from pathlib import Path

import numpy as np

from wikilite import keywords
from wikilite.build import BuildOptions, BuildReport, build, build_attribute_index, ingest_records
from wikilite.catalog import resolve
from wikilite.rank import RankVector, store_ranks
from wikilite.store import Store


def ref_value(target: str) -> dict:
    return {
        "value": {"entity-type": "item" if target[0] == "Q" else "property",
                  "numeric-id": int(target[1:]), "id": target},
        "type": "wikibase-entityid",
    }


def snak(prop: str, target=None, snaktype: str = "value", datatype: str = "wikibase-item", datavalue=None):
    out = {"snaktype": snaktype, "property": prop, "datatype": datatype}
    if snaktype == "value":
        out["datavalue"] = datavalue if datavalue is not None else ref_value(target)
    return out


def statement(mainsnak: dict, rank: str = "normal", qualifiers=None, references=None) -> dict:
    out = {"mainsnak": mainsnak, "type": "statement", "id": "X$" + str(random.random()), "rank": rank}
    if qualifiers:
        out["qualifiers"] = qualifiers
        out["qualifiers-order"] = list(qualifiers)
    if references:
        out["references"] = references
    return out


def reference(*snaks_: dict) -> dict:
    groups: dict = {}
    for s in snaks_:
        groups.setdefault(s["property"], []).append(s)
    return {"hash": "h", "snaks": groups, "snaks-order": list(groups)}


def entity(eid: str, label=None, claims=(), *, labels=None, descriptions=None, aliases=None,
           sitelinks=None) -> dict:
    """An entity dict; ``claims`` is a list of statement dicts or ``(prop, target)`` pairs."""
    labels = dict(labels or {})
    if label is not None:
        labels.setdefault("en", label)
    grouped: dict = {}
    for c in claims:
        st = statement(snak(*c)) if isinstance(c, tuple) else c
        grouped.setdefault(st["mainsnak"]["property"], []).append(st)
    return {
        "type": "item" if eid[0] == "Q" else "property",
        "id": eid,
        "labels": {k: {"language": k, "value": v} for k, v in labels.items()},
        "descriptions": {k: {"language": k, "value": v} for k, v in (descriptions or {}).items()},
        "aliases": {k: [{"language": k, "value": a} for a in v] for k, v in (aliases or {}).items()},
        "sitelinks": {k: {"site": k, "title": v, "badges": []} for k, v in (sitelinks or {}).items()},
        "claims": grouped,
    }


def dump_text(entities, extra_lines=()) -> str:
    lines = [json.dumps(e, ensure_ascii=False) for e in entities] + list(extra_lines)
    return "[\n" + ",\n".join(lines) + "\n]\n"


def write_dump(path, entities, extra_lines=(), compress=None) -> Path:
    path = Path(path)
    data = dump_text(entities, extra_lines).encode()
    if compress == "gzip":
        data = gzip.compress(data, mtime=0)
    elif compress == "bzip2":
        data = bz2.compress(data)
    path.write_bytes(data)
    return path


def build_db(tmp_path, entities, name="db", extra_lines=(), **options):
    dump = write_dump(Path(tmp_path) / f"{name}.json", entities, extra_lines)
    out = Path(tmp_path) / name
    report = build(dump, out, BuildOptions(progress_every=0, **options))
    return out, report


def build_with_ranks(tmp_path, entities, ranks: dict[str, float], name="ranked"):
    """Build without PageRank, then store hand-assigned scores."""
    dump = write_dump(Path(tmp_path) / f"{name}.json", entities)
    out = Path(tmp_path) / name
    with Store.open(out, "build") as store:
        ingest_records(store, dump, BuildOptions(progress_every=0), BuildReport())
        build_attribute_index(store)
        keywords.build_term_index(store)
        pairs = sorted((resolve(store, eid), score) for eid, score in ranks.items())
        ids = np.array([p[0] for p in pairs], dtype=np.uint64)
        scores = np.array([p[1] for p in pairs])
        store_ranks(store, RankVector(ids, scores, 0.85, 0, 0.0))
        store.mark_complete()
    return out


def random_kg(n_items=1000, per_item=10, n_props=20, seed=0, n_external=50, deprecated_rate=0.05):
    """Random items Q1..Qn with entity-ref statements plus some noise.

    Noise that the index must ignore: deprecated statements, somevalue and
    novalue snaks, string values, entity refs inside qualifiers and
    references.  Some targets (Q900000+) never get a record.
    """
    rng = random.Random(seed)
    targets = [f"Q{i}" for i in range(1, n_items + 1)] + [f"Q{900000 + i}" for i in range(n_external)]
    # skew toward a few popular values so queries hit non-trivial sets
    weights = [1.0 / (1 + i) ** 0.8 for i in range(len(targets))]
    props = [f"P{i}" for i in range(1, n_props + 1)]
    entities = []
    for i in range(1, n_items + 1):
        claims = []
        for _ in range(rng.randint(per_item // 2, per_item + per_item // 2)):
            prop = rng.choice(props)
            target = rng.choices(targets, weights)[0]
            roll = rng.random()
            if roll < deprecated_rate:
                claims.append(statement(snak(prop, target), rank="deprecated"))
            elif roll < deprecated_rate + 0.03:
                claims.append(statement(snak(prop, snaktype=rng.choice(["somevalue", "novalue"]))))
            elif roll < deprecated_rate + 0.06:
                claims.append(statement(snak(prop, datatype="string",
                                             datavalue={"value": target, "type": "string"})))
            else:
                quals = {"P99": [snak("P99", rng.choice(targets))]} if rng.random() < 0.1 else None
                refs = [reference(snak("P248", rng.choice(targets)))] if rng.random() < 0.1 else None
                claims.append(statement(snak(prop, target), rank=rng.choice(["normal", "normal", "preferred"]),
                                        qualifiers=quals, references=refs))
        entities.append(entity(f"Q{i}", f"item {i}", claims))
    return entities


def random_query(rng: random.Random, n_items: int, n_props: int = 20, max_clauses: int = 5):
    """A clause list that always has a positive group."""
    clauses = []
    for _ in range(rng.randint(1, max_clauses)):
        op = rng.choices(["AND", "OR", "NOT"], [0.45, 0.35, 0.2])[0]
        prop = None if rng.random() < 0.3 else f"P{rng.randint(1, n_props)}"
        # mostly popular values so results are non-empty
        value = f"Q{min(int(rng.expovariate(1 / 15)) + 1, n_items)}"
        clauses.append((op, prop, value))
    if all(c[0] == "NOT" for c in clauses):
        clauses[0] = ("AND",) + clauses[0][1:]
    return clauses


def random_record(rng: random.Random, eid=None):
    """A random ItemRecord covering every datavalue variant and snak kind."""
    from decimal import Decimal

    from wikilite.model import (
        EntityRef, ExternalId, GlobeCoordinate, ItemRecord, MonolingualText, OpaqueValue, Quantity,
        Rank, ReferenceGroup, Snak, SnakKind, Statement, StringValue, Time, Url,
    )

    def text(n=6):
        return "".join(rng.choice("abcxyzé日 -") for _ in range(rng.randint(0, n)))

    def dec():
        return Decimal(rng.randint(-10**6, 10**6)).scaleb(-rng.randint(0, 4))

    def value():
        k = rng.randrange(9)
        if k == 0:
            return EntityRef(rng.choice("QP") + str(rng.randint(1, 10**8)))
        if k == 1:
            return StringValue(text())
        if k == 2:
            return ExternalId(text())
        if k == 3:
            return Url("https://" + text())
        if k == 4:
            return MonolingualText(rng.choice(["en", "fr", "zh-hans"]), text())
        if k == 5:
            return Quantity(dec(), rng.choice(["1", "Q11573"]), rng.choice([None, dec()]), rng.choice([None, dec()]))
        if k == 6:
            return Time(f"+{rng.randint(1, 2024)}-01-01T00:00:00Z", rng.randint(0, 14), "Q1985727",
                        rng.randint(-720, 720), rng.randint(0, 3), rng.randint(0, 3))
        if k == 7:
            return GlobeCoordinate(rng.uniform(-90, 90), rng.uniform(-180, 180),
                                   rng.choice([None, 0.001, 1.0]), "Q2", rng.choice([None, 12.5]))
        return OpaqueValue("tabular-data", '"Data:x.tab"')

    def make_snak(prop):
        kind = rng.choices(list(SnakKind), [8, 1, 1])[0]
        return Snak(kind, prop, value() if kind is SnakKind.VALUE else None, rng.choice([None, "string"]))

    def snak_map(n):
        props = rng.sample(range(1, 50), n)
        snaks = {f"P{p}": [make_snak(f"P{p}") for _ in range(rng.randint(1, 2))] for p in props}
        return snaks

    claims = {}
    for p in rng.sample(range(1, 100), rng.randint(0, 4)):
        prop = f"P{p}"
        statements = []
        for _ in range(rng.randint(1, 3)):
            quals = snak_map(rng.randint(0, 2))
            refs = []
            for _ in range(rng.randint(0, 2)):
                snaks = snak_map(rng.randint(1, 2))
                refs.append(ReferenceGroup(snaks, list(snaks)))
            statements.append(Statement(make_snak(prop), rng.choice(list(Rank)), quals, refs))
        claims[prop] = statements
    langs = ["en", "fr", "de", "zh"]
    return ItemRecord(
        id=eid or f"Q{rng.randint(1, 10**9)}",
        labels={lang: text() for lang in rng.sample(langs, rng.randint(0, 3))},
        descriptions={lang: text(20) for lang in rng.sample(langs, rng.randint(0, 2))},
        aliases={lang: list(dict.fromkeys(text() for _ in range(rng.randint(1, 3))))
                 for lang in rng.sample(langs, rng.randint(0, 2))},
        sitelinks={f"{lang}wiki": text() for lang in rng.sample(langs, rng.randint(0, 2))},
        claims=claims,
    )


_SYLLABLES = ["ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "vu", "xe", "ba", "do", "fi", "gu", "he", "ji"]
_CLAIM = ('{"mainsnak":{"snaktype":"value","property":"P%d","datatype":"wikibase-item","datavalue":'
          '{"value":{"entity-type":"item","numeric-id":%d,"id":"Q%d"},"type":"wikibase-entityid"}},'
          '"type":"statement","rank":"normal"}')


def write_synthetic_dump(path, n_items: int, seed: int = 0) -> Path:
    """Large dump from string templates: half the items are P31=Q1, all link to two random others."""
    rng = random.Random(seed)
    words = ["".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 4))) for _ in range(20_000)]
    path = Path(path)
    with open(path, "w", encoding="utf-8") as out:
        out.write("[\n")
        for i in range(1, n_items + 1):
            cls = 1 if i % 2 == 0 else 2
            claims = {31: [cls], 50: [rng.randint(1, n_items), rng.randint(1, n_items)]}
            body = ",".join('"P%d":[%s]' % (p, ",".join(_CLAIM % (p, v, v) for v in vs)) for p, vs in claims.items())
            label = f"{rng.choice(words)} {rng.choice(words)}"
            out.write('{"type":"item","id":"Q%d","labels":{"en":{"language":"en","value":"%s"}},'
                      '"descriptions":{},"aliases":{},"sitelinks":{},"claims":{%s}}%s\n'
                      % (i, label, body, "," if i < n_items else ""))
        out.write("]\n")
    return path
