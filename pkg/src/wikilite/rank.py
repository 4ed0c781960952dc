"""PageRank popularity over the item-to-item statement graph."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .catalog import resolve
from .codec import decode_posting_list, pack_double, pack_id, unpack_double, unpack_id
from .errors import EmptyGraph, UnknownEntity
from .store import Store

logger = logging.getLogger(__name__)


@dataclass
class RankVector:
    ids: np.ndarray  # sorted numeric ids
    scores: np.ndarray  # aligned with ids
    damping: float
    iterations_run: int
    residual: float

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.ids.tolist(), self.scores.tolist()))

    def score(self, nid: int) -> float:
        i = int(np.searchsorted(self.ids, np.uint64(nid)))
        if i >= self.ids.size or int(self.ids[i]) != nid:
            raise UnknownEntity(f"numeric id {nid} has no rank")
        return float(self.scores[i])


@dataclass
class EdgeStats:
    nodes: int
    edges: int
    dangling: int


def power_iteration(n, sources, targets, damping=0.85, tolerance=1e-6, max_iterations=100):
    """Run PageRank on nodes ``0..n-1`` with edges ``sources[i] -> targets[i]``.

    Each sweep computes ``(1-d)/n + d * (A^T r + dangling_mass/n)`` where
    out-edges are weighted uniformly and the mass of out-degree-zero nodes
    is spread over all nodes.  Starts uniform and stops once the L1 change
    drops below ``tolerance``.  Returns ``(scores, iterations, residual)``.
    """
    if n <= 0:
        raise EmptyGraph("graph has no nodes")
    if not 0.0 < damping < 1.0:
        raise ValueError("damping must lie in (0, 1)")
    src = np.asarray(sources, dtype=np.int64)
    dst = np.asarray(targets, dtype=np.int64)
    if src.size:
        pairs = np.unique(src * n + dst)
        src, dst = pairs // n, pairs % n
    outdeg = np.bincount(src, minlength=n).astype(np.float64)
    weights = 1.0 / outdeg[src]
    transition = sparse.csr_matrix((weights, (dst, src)), shape=(n, n))
    dangling = outdeg == 0

    r = np.full(n, 1.0 / n)
    teleport = (1.0 - damping) / n
    iterations, residual = 0, math.inf
    for iterations in range(1, max_iterations + 1):
        nxt = teleport + damping * (transition @ r + r[dangling].sum() / n)
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - r).sum())
        r = nxt
        if residual < tolerance:
            break
    return r, iterations, residual


def record_ids(store: Store) -> np.ndarray:
    """Numeric ids of every entity that has a stored record, ascending."""
    ids = [unpack_id(k) for batch in store.iter_batches("items", 50_000) for k, _ in batch]
    return np.asarray(ids, dtype=np.uint64)


def _node_index(nodes: np.ndarray, ids: np.ndarray):
    idx = np.searchsorted(nodes, ids)
    ok = idx < nodes.size
    ok[ok] = nodes[idx[ok]] == ids[ok]
    return idx.astype(np.int64), ok


def build_edges(store: Store):
    """Distinct ``a -> b`` edges between entities that have records.

    Read from ``inv_v``, which already excludes deprecated statements and
    holds each (item, value) pair once.  Self-loops are dropped.
    Returns ``(node_ids, sources, targets, stats)`` with node indexes.
    """
    nodes = record_ids(store)
    targets, counts, subjects = [], [], []
    for batch in store.iter_batches("inv_v", 20_000):
        for key, value in batch:
            ids = decode_posting_list(value)
            targets.append(unpack_id(key))
            counts.append(len(ids))
            subjects.extend(ids)
    subj = np.array(subjects, dtype=np.uint64)
    targ = np.repeat(np.array(targets, dtype=np.uint64), counts)
    keep = subj != targ
    subj, targ = subj[keep], targ[keep]
    src, src_ok = _node_index(nodes, subj)
    dst, dst_ok = _node_index(nodes, targ)
    keep = src_ok & dst_ok
    src, dst = src[keep], dst[keep]
    dangling = int(nodes.size - np.unique(src).size)
    return nodes, src, dst, EdgeStats(int(nodes.size), int(src.size), dangling)


def pagerank(store: Store, damping: float = 0.85, tolerance: float = 1e-6,
             max_iterations: int = 100) -> RankVector:
    nodes, src, dst, stats = build_edges(store)
    logger.info("pagerank graph: %d nodes, %d edges, %d dangling", stats.nodes, stats.edges, stats.dangling)
    scores, iterations, residual = power_iteration(stats.nodes, src, dst, damping, tolerance, max_iterations)
    return RankVector(nodes, scores, damping, iterations, residual)


def store_ranks(store: Store, vector: RankVector) -> None:
    store.clear("pagerank")
    for nid, score in zip(vector.ids.tolist(), vector.scores.tolist()):
        store.put("pagerank", pack_id(nid), pack_double(score))
    if vector.scores.size:
        store.meta_put("pagerank_min", repr(float(vector.scores.min())))
        store.meta_put("pagerank_max", repr(float(vector.scores.max())))
    store.meta_put("pagerank_damping", repr(vector.damping))
    store.meta_put("pagerank_iterations", vector.iterations_run)
    store.meta_put("pagerank_residual", repr(vector.residual))
    store.commit()


def get_rank(store: Store, entity_id: str) -> float:
    nid = resolve(store, entity_id)
    value = None if nid is None else store.get("pagerank", pack_id(nid))
    if value is None:
        raise UnknownEntity(f"{entity_id} has no pagerank")
    return unpack_double(value)


def rank_bounds(store: Store):
    lo, hi = store.meta_get("pagerank_min"), store.meta_get("pagerank_max")
    if lo is None or hi is None:
        return None
    return float(lo), float(hi)
