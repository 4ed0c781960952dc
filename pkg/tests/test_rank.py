import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import build_db, entity, snak, statement
from oracles import dense_pagerank, entity_pairs
from wikilite.errors import EmptyGraph, UnknownEntity
from wikilite.rank import build_edges, get_rank, power_iteration


def random_graph(rng, n, density):
    return [(a, b) for a in range(n) for b in range(n) if rng.random() < density]


def test_three_cycle_is_uniform():
    r, _, _ = power_iteration(3, [0, 1, 2], [1, 2, 0])
    assert np.allclose(r, 1 / 3, atol=1e-12)


def test_single_node():
    r, _, _ = power_iteration(1, [], [])
    assert r.tolist() == [1.0]


def test_two_nodes_against_dense():
    r, _, _ = power_iteration(2, [0], [1], damping=0.85)
    expected = dense_pagerank(2, [(0, 1)], 0.85)
    assert np.allclose(r, expected, atol=1e-9, rtol=0)
    assert r[1] > r[0]


def test_empty_graph():
    with pytest.raises(EmptyGraph):
        power_iteration(0, [], [])


def test_bad_damping():
    with pytest.raises(ValueError):
        power_iteration(2, [0], [1], damping=1.0)


def test_duplicate_edges_collapse():
    a, _, _ = power_iteration(3, [0, 0, 1], [1, 1, 2])
    b, _, _ = power_iteration(3, [0, 1], [1, 2])
    assert np.array_equal(a, b)


@pytest.mark.parametrize("seed", range(20))
def test_random_graphs_against_dense(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 50)
    edges = random_graph(rng, n, rng.choice([0.02, 0.1, 0.3]))
    r, iters, residual = power_iteration(n, [a for a, _ in edges], [b for _, b in edges])
    expected = dense_pagerank(n, edges)
    assert np.max(np.abs(r - expected)) < 1e-9
    assert abs(math.fsum(r.tolist()) - 1) < 1e-9
    assert r.min() >= 0.15 / n - 1e-15
    assert residual < 1e-6 or iters == 100


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=30),
    st.permutations(range(n)))))
def test_relabeling_invariance(case):
    n, edges, perm = case
    r, _, _ = power_iteration(n, [a for a, _ in edges], [b for _, b in edges])
    p, _, _ = power_iteration(n, [perm[a] for a, _ in edges], [perm[b] for _, b in edges])
    assert np.max(np.abs(p[list(perm)] - r)) <= 2e-6


def test_more_iterations_reduce_residual():
    rng = random.Random(3)
    edges = random_graph(rng, 30, 0.1)
    _, it1, res1 = power_iteration(30, [a for a, _ in edges], [b for _, b in edges], max_iterations=3)
    assert it1 == 3
    _, _, res2 = power_iteration(30, [a for a, _ in edges], [b for _, b in edges], tolerance=1e-12)
    assert res2 < res1


# against a built store ------------------------------------------------------------

def test_store_edges_and_scores(tmp_path):
    entities = [
        entity("Q1", "a", [("P31", "Q2"), ("P50", "Q2"), ("P1", "Q1"), ("P2", "Q99")]),
        entity("Q2", "b", [("P31", "Q3"), statement(snak("P5", "Q1"), rank="deprecated")]),
        entity("Q3", "c", [("P31", "Q1")]),
        entity("Q4", "d", [statement(snak("P9", datatype="string", datavalue={"type": "string", "value": "x"}))]),
    ]
    path, _ = build_db(tmp_path, entities)
    from wikilite.store import Store

    with Store.open(path, "read") as store:
        nodes, src, dst, stats = build_edges(store)
        assert (stats.nodes, stats.edges, stats.dangling) == (4, 3, 1)
        expected = dense_pagerank(4, [(0, 1), (1, 2), (2, 0)])
        got = [get_rank(store, f"Q{i}") for i in (1, 2, 3, 4)]
        assert max(abs(a - b) for a, b in zip(got, expected)) < 1e-9
        assert abs(math.fsum(got) - 1) < 1e-9
        with pytest.raises(UnknownEntity):
            get_rank(store, "Q99")  # a value without a record is not a node
        with pytest.raises(UnknownEntity):
            get_rank(store, "Q12345")


def test_cycle_and_single_node_readback(tmp_path):
    from wikilite.store import Store

    cycle, _ = build_db(tmp_path, [entity("Q1", "a", [("P1", "Q2")]), entity("Q2", "b", [("P1", "Q3")]),
                                   entity("Q3", "c", [("P1", "Q1")])], name="cycle")
    single, _ = build_db(tmp_path, [entity("Q7", "x")], name="single")
    with Store.open(cycle, "read") as s:
        assert all(abs(get_rank(s, f"Q{i}") - 1 / 3) < 1e-12 for i in (1, 2, 3))
    with Store.open(single, "read") as s:
        assert get_rank(s, "Q7") == 1.0


def test_edge_count_equals_scan(kg_db, kg_entities):
    ids = {e["id"] for e in kg_entities}
    expected = {(e["id"], v) for e in kg_entities for _, v in entity_pairs(e) if v in ids and v != e["id"]}
    nodes, src, dst, stats = build_edges(kg_db.store)
    assert stats.edges == len(expected)
    names = [kg_db.catalog.unresolve(int(n)) for n in nodes.tolist()]
    assert {(names[a], names[b]) for a, b in zip(src.tolist(), dst.tolist())} == expected
    index = {eid: i for i, eid in enumerate(names)}
    oracle = dense_pagerank(len(names), [(index[a], index[b]) for a, b in expected])
    got = [get_rank(kg_db.store, eid) for eid in names]
    assert max(abs(a - b) for a, b in zip(got, oracle)) < 1e-9
