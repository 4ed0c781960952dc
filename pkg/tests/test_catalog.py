import json
import random

import pytest

from conftest import small_entities
from oracles import entity_pairs
from wikilite.catalog import PROPERTY_BIT, RelationEdge, is_property, resolve, unresolve
from wikilite.dump import record_from_json
from wikilite.errors import UnknownEntity
from wikilite.model import Rank, SnakKind


def ids_of(db, nids):
    return {db.catalog.unresolve(n) for n in nids.tolist()}


# ids ------------------------------------------------------------------------------

def test_resolve_roundtrip(small_db):
    assert small_db.catalog.unresolve(small_db.catalog.resolve("Q42")) == "Q42"
    assert small_db.catalog.resolve("Q999999999") is None
    assert not is_property(small_db.catalog.resolve("Q42"))
    assert is_property(small_db.catalog.resolve("P31"))


def test_first_seen_numbering(small_db):
    # Q5 is the first subject, then its P279 value; Q42 follows
    assert small_db.catalog.resolve("Q5") == 0
    assert small_db.catalog.resolve("P279") == PROPERTY_BIT
    assert small_db.catalog.resolve("Q215627") == 1
    assert small_db.catalog.resolve("Q42") == 2


def test_every_stored_id_roundtrips(kg_db):
    store = kg_db.store
    n = 0
    for batch in store.iter_batches("id_map"):
        for eid, key in batch:
            nid = int.from_bytes(key, "big")
            assert unresolve(store, nid) == eid.decode()
            assert resolve(store, eid.decode()) == nid
            n += 1
    assert n == store.count("id_map_rev") > 1000


def test_unresolve_unknown(small_db):
    with pytest.raises(UnknownEntity):
        small_db.catalog.unresolve(123456)


# text and sitelinks -----------------------------------------------------------------

def test_get_text(small_db):
    cat = small_db.catalog
    assert cat.get_text("Q5", "label", "en") == "human"
    assert cat.get_text("Q5", "label", "xx-absent") is None
    assert cat.get_text("Q5", "label") == {"en": "human", "fr": "être humain"}
    assert cat.get_text("Q5", "aliases") == {"en": ["person", "people"]}
    assert cat.get_text("Q5", "description", "en") == "species"
    with pytest.raises(ValueError):
        cat.get_text("Q5", "sitelinks")


def test_sitelinks(small_db):
    assert small_db.catalog.get_sitelinks("Q5") == {"enwiki": "Human"}
    assert small_db.catalog.get_sitelinks("Q4") == {}


@pytest.mark.parametrize("bad", ["Q999", "X1", "", "Q463035"])
def test_unknown_entity(small_db, bad):
    # Q463035 is registered (it is a value) but has no record
    with pytest.raises(UnknownEntity):
        small_db.catalog.get_text(bad, "label")


def test_readback_equals_parsed_records(kg_db, kg_entities):
    for raw in kg_entities:
        rec = record_from_json(raw)
        cat = kg_db.catalog
        assert cat.record(raw["id"]) == rec
        assert cat.get_text(raw["id"], "aliases") == rec.aliases
        assert cat.get_sitelinks(raw["id"]) == rec.sitelinks


# statements and references -------------------------------------------------------------

def test_statements_in_dump_order(small_db):
    p31 = small_db.catalog.get_statements("Q42", "P31")
    assert [st.mainsnak.kind for st in p31] == [SnakKind.VALUE, SnakKind.SOMEVALUE, SnakKind.VALUE, SnakKind.VALUE]
    assert [getattr(st.mainsnak.datavalue, "id", None) for st in p31] == ["Q5", None, "Q5", "Q1"]
    assert small_db.catalog.get_statements("Q42", "P999") == []
    everything = small_db.catalog.get_statements("Q42")
    assert len(everything) == 8
    assert [st.mainsnak.property for st in everything][:4] == ["P31"] * 4


def test_deprecated_statements_are_returned(small_db):
    (st,) = small_db.catalog.get_statements("Q42", "P69")
    assert st.rank is Rank.DEPRECATED


def test_references(small_db):
    refs = small_db.catalog.get_references("Q42")
    assert [(p, i, list(g.snaks)) for p, i, g in refs] == [("P31", 0, ["P248"]), ("P31", 0, ["P143"])]
    assert small_db.catalog.get_references("Q4") == []


def test_reference_counts_match_json_walk(kg_db, kg_entities):
    for raw in kg_entities[:300]:
        expected = sum(len(st.get("references", [])) for sts in raw["claims"].values() for st in sts)
        assert len(kg_db.catalog.get_references(raw["id"])) == expected


# types, inverse, relations ---------------------------------------------------------------

def test_types(small_db):
    assert small_db.catalog.get_types("Q42") == ["Q5", "Q1"]
    assert small_db.catalog.get_types("Q3") == ["Q5"]
    assert small_db.catalog.get_types("Q4") == []


def test_types_match_raw_oracle(kg_db, kg_entities):
    for raw in kg_entities:
        expected = []
        for st in raw["claims"].get("P31", []):
            ms = st["mainsnak"]
            if st["rank"] != "deprecated" and ms["snaktype"] == "value" and ms["datavalue"]["type"] == "wikibase-entityid":
                if ms["datavalue"]["value"]["id"] not in expected:
                    expected.append(ms["datavalue"]["value"]["id"])
        assert kg_db.catalog.get_types(raw["id"]) == expected


def test_inverse(small_db):
    cat = small_db.catalog
    assert ids_of(small_db, cat.get_inverse("Q5", "P31")) == {"Q42", "Q3"}
    assert ids_of(small_db, cat.get_inverse("Q5")) == {"Q42", "Q3", "Q215627"}
    assert ids_of(small_db, cat.get_inverse("Q463035")) == {"Q42"}
    # values seen only in deprecated statements or references never get an id
    for eid in ("Q691283", "Q36578", "Q123456789"):
        with pytest.raises(UnknownEntity):
            cat.get_inverse(eid)


def test_inverse_matches_full_scan(kg_db, kg_entities):
    rng = random.Random(0)
    pairs = {e["id"]: entity_pairs(e) for e in kg_entities}
    all_pairs = sorted({pv for ps in pairs.values() for pv in ps})
    for prop, value in rng.sample(all_pairs, 200):
        expected = {eid for eid, ps in pairs.items() if (prop, value) in ps}
        assert ids_of(kg_db, kg_db.catalog.get_inverse(value, prop)) == expected
        wildcard = {eid for eid, ps in pairs.items() if any(v == value for _, v in ps)}
        assert ids_of(kg_db, kg_db.catalog.get_inverse(value)) == wildcard
        assert expected <= wildcard


def test_relation(small_db):
    cat = small_db.catalog
    assert cat.get_relation("Q42", "Q1") == [RelationEdge("P31", "forward"), RelationEdge("P50", "forward"),
                                             RelationEdge("P50", "backward")]
    assert cat.get_relation("Q42", "Q42") == []
    assert cat.get_relation("Q1", "Q1") == [RelationEdge("P279", "forward"), RelationEdge("P279", "backward")]
    # Q463035 has no record, so only edges from Q42 can exist
    assert cat.get_relation("Q463035", "Q42") == [RelationEdge("P735", "backward")]
    with pytest.raises(UnknownEntity):
        cat.get_relation("Q42", "Q77777")


def test_relation_random_pairs(kg_db, kg_entities):
    rng = random.Random(1)
    pairs = {e["id"]: entity_pairs(e) for e in kg_entities}

    def pointing(a, b):
        return sorted({p for p, v in pairs.get(a, ()) if v == b}, key=lambda p: int(p[1:]))

    ids = list(pairs)
    for _ in range(300):
        a = rng.choice(ids)
        linked = [v for _, v in pairs[a] if v in pairs]
        b = rng.choice(linked) if linked and rng.random() < 0.7 else rng.choice(ids)
        got = kg_db.catalog.get_relation(a, b)
        expected = [RelationEdge(p, "forward") for p in pointing(a, b)] + \
                   [RelationEdge(p, "backward") for p in pointing(b, a)]
        assert got == expected
        flipped = {"forward": "backward", "backward": "forward"}
        swapped = kg_db.catalog.get_relation(b, a)
        assert sorted((e.property, flipped[e.direction]) for e in swapped) == sorted(
            (e.property, e.direction) for e in got)


def test_small_fixture_is_json_clean():
    # every fixture entity survives a JSON round trip untouched
    for e in small_entities():
        assert json.loads(json.dumps(e)) == e
