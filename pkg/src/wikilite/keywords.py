"""Keyword entity search over labels and aliases.

Candidates come from a symmetric-delete dictionary (every term is stored
under each string obtainable by deleting up to ``D`` of its first
``prefix_cap`` characters), verified by true Damerau-Levenshtein distance.
Candidates are then scored with Okapi BM25, fuzzy similarity and PageRank
and fused linearly.

Tables: ``terms`` (term -> document frequency), ``postings_kw`` (term ->
posting list of entities), ``deletes`` (delete form -> newline-joined
terms).  The empty delete form is keyed ``b"\\xff"``.
"""

from __future__ import annotations

import math
import struct
import unicodedata
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Iterator, Optional

import numpy as np
import regex

from .codec import decode_posting, decode_raw, encode_posting, pack_id, unpack_id
from .errors import EmptyQuery
from .rank import rank_bounds
from .spill import Grouper, IdCodec, TermCodec
from .store import Store

K1 = 1.2
B = 0.75
DEFAULT_WEIGHTS = (0.4, 0.4, 0.2)
MAX_TERM_BYTES = 480  # LMDB keys top out at 511 bytes

_SEPARATORS = regex.compile(r"[\s\x1c-\x1f\p{P}]+")
_DF = struct.Struct(">Q")
_EMPTY_FORM_KEY = b"\xff"


def normalize_text(text: str) -> list[str]:
    """NFKC-fold, lowercase and split on whitespace and punctuation."""
    folded = unicodedata.normalize("NFKC", text).lower()
    return [t for t in _SEPARATORS.split(folded) if t]


def indexable(term: str) -> bool:
    return len(term.encode()) <= MAX_TERM_BYTES


def document_tokens(texts: Iterable[str]) -> list[str]:
    return [t for s in texts for t in normalize_text(s) if indexable(t)]


def delete_forms(term: str, max_distance: int, prefix_cap: int = 10) -> set[str]:
    """All strings reachable from ``term[:prefix_cap]`` by up to ``max_distance`` deletions."""
    key = term[:prefix_cap]
    forms = {key}
    frontier = {key}
    for _ in range(max_distance):
        nxt = {w[:i] + w[i + 1:] for w in frontier for i in range(len(w))}
        nxt -= forms
        if not nxt:
            break
        forms |= nxt
        frontier = nxt
    return forms


def damerau_levenshtein(a: str, b: str) -> int:
    """Unrestricted Damerau-Levenshtein distance (Lowrance-Wagner).

    Unlike the optimal-string-alignment variant this is a true metric: a
    transposed pair may still be edited around, e.g. ``"ca" -> "abc"`` is 2.
    """
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if not la or not lb:
        return la or lb
    inf = la + lb
    d = [[inf] * (lb + 2)]
    d += [[inf, i] + [0] * lb for i in range(la + 1)]
    d[1] = [inf] + list(range(lb + 1))
    last_row: dict[str, int] = {}
    for i in range(1, la + 1):
        ca = a[i - 1]
        last_col = 0
        row, prev = d[i + 1], d[i]
        for j in range(1, lb + 1):
            cb = b[j - 1]
            k = last_row.get(cb, 0)
            l = last_col
            if ca == cb:
                cost = 0
                last_col = j
            else:
                cost = 1
            row[j + 1] = min(
                prev[j] + cost,
                row[j] + 1,
                prev[j + 1] + 1,
                d[k][l] + (i - k - 1) + 1 + (j - l - 1),
            )
        last_row[ca] = i
    return d[la + 1][lb + 1]


def similarity(token: str, term: str, distance: int) -> float:
    return 1.0 - distance / max(len(token), len(term))


def bm25(query_tokens: Iterable[str], tf: Counter, doc_len: int, df: dict[str, int],
         n_docs: int, avg_len: float, k1: float = K1, b: float = B) -> float:
    """Okapi BM25 of one document; tokens absent from the document add nothing."""
    score = 0.0
    norm = k1 * (1.0 - b + b * doc_len / avg_len) if avg_len > 0 else k1
    for t in query_tokens:
        f = tf.get(t, 0)
        if not f:
            continue
        n = df.get(t, 0)
        idf = math.log(1.0 + (n_docs - n + 0.5) / (n + 0.5))
        score += idf * f * (k1 + 1.0) / (f + norm)
    return score


def _delete_key(form: str) -> bytes:
    return form.encode() or _EMPTY_FORM_KEY


@dataclass
class TermIndexStats:
    terms: int
    delete_forms: int
    documents: int
    avg_length: float


@dataclass
class SearchHit:
    id: str
    fused_score: float
    bm25: float
    fuzzy_similarity: float
    pagerank_component: float

    def to_json(self) -> dict:
        return asdict(self)


# index build -----------------------------------------------------------------

def _entity_texts(raw: list) -> list[str]:
    texts = [v for _, v in raw[2]]
    for _, aliases in raw[4]:
        texts.extend(aliases)
    return texts


def collect_documents(store: Store, spill_dir=None, spill_limit: int = 2_000_000):
    """Tokenize every stored record; returns a grouper of term -> entity ids."""
    grouper = Grouper(IdCodec, spill_dir, spill_limit)
    n_docs = total = 0
    for batch in store.iter_batches("items"):
        for key, value in batch:
            tokens = document_tokens(_entity_texts(decode_raw(value)))
            if not tokens:
                continue
            n_docs += 1
            total += len(tokens)
            nid = unpack_id(key)
            for term in set(tokens):
                grouper.add(term.encode(), nid)
    return grouper, n_docs, total


def write_terms(store: Store, groups: Iterator[tuple[bytes, np.ndarray]]) -> int:
    count = 0
    for key, ids in groups:
        store.put("postings_kw", key, encode_posting(ids))
        store.put("terms", key, _DF.pack(len(ids)))
        count += 1
    store.commit()
    return count


def write_deletes(store: Store, max_distance: int, prefix_cap: int,
                  spill_dir=None, spill_limit: int = 2_000_000) -> int:
    grouper = Grouper(TermCodec, spill_dir, spill_limit)
    for batch in store.iter_batches("terms", 50_000):
        for key, _ in batch:
            term = key.decode()
            for form in delete_forms(term, max_distance, prefix_cap):
                grouper.add(_delete_key(form), term)
    count = 0
    for key, terms in grouper.groups():
        store.put("deletes", key, TermCodec.encode(terms))
        count += 1
    store.meta_put("kw_max_edit", max_distance)
    store.meta_put("kw_prefix_cap", prefix_cap)
    store.commit()
    return count


def build_term_index(store: Store, max_edit_distance: int = 2, prefix_cap: int = 10,
                     spill_dir=None, spill_limit: int = 2_000_000) -> TermIndexStats:
    for table in ("terms", "deletes", "postings_kw"):
        store.clear(table)
    grouper, n_docs, total = collect_documents(store, spill_dir, spill_limit)
    n_terms = write_terms(store, grouper.groups())
    n_forms = write_deletes(store, max_edit_distance, prefix_cap, spill_dir, spill_limit)
    avg = total / n_docs if n_docs else 0.0
    store.meta_put("kw_documents", n_docs)
    store.meta_put("kw_avg_length", repr(avg))
    store.commit()
    return TermIndexStats(n_terms, n_forms, n_docs, avg)


# queries -----------------------------------------------------------------------

class KeywordIndex:
    """Read access to the keyword tables of one store."""

    def __init__(self, store: Store):
        self.store = store
        self.max_edit = int(store.meta_get("kw_max_edit") or 0)
        self.prefix_cap = int(store.meta_get("kw_prefix_cap") or 10)
        self.n_docs = int(store.meta_get("kw_documents") or 0)
        self.avg_length = float(store.meta_get("kw_avg_length") or 0.0)

    def document_frequency(self, term: str) -> int:
        value = self.store.get("terms", term.encode()) if indexable(term) else None
        return 0 if value is None else _DF.unpack(value)[0]

    def postings(self, term: str) -> np.ndarray:
        value = self.store.get("postings_kw", term.encode()) if indexable(term) else None
        return decode_posting(value or b"")

    def fuzzy_lookup(self, token: str, max_distance: int) -> list[tuple[str, int]]:
        """Dictionary terms within ``max_distance`` of ``token``, by (distance, term)."""
        if max_distance > self.max_edit:
            raise ValueError(f"max distance {max_distance} exceeds the index's {self.max_edit}")
        forms = sorted(delete_forms(token, max_distance, self.prefix_cap))
        candidates = set()
        for value in self.store.get_many("deletes", [_delete_key(f) for f in forms]):
            if value is not None:
                candidates.update(TermCodec.decode(value))
        out = []
        for term in candidates:
            if abs(len(term) - len(token)) > max_distance:
                continue
            dist = damerau_levenshtein(token, term)
            if dist <= max_distance:
                out.append((term, dist))
        out.sort(key=lambda td: (td[1], td[0]))
        return out

    def entity_tokens(self, nid: int) -> list[str]:
        value = self.store.get("items", pack_id(nid))
        return [] if value is None else document_tokens(_entity_texts(decode_raw(value)))

    def bm25_score(self, query_tokens: list[str], nid: int) -> float:
        tokens = self.entity_tokens(nid)
        df = {t: self.document_frequency(t) for t in set(query_tokens)}
        return bm25(query_tokens, Counter(tokens), len(tokens), df, self.n_docs, self.avg_length)

    def search(self, query: str, limit: int = 10, max_distance: int = 2,
               weights: tuple[float, float, float] = DEFAULT_WEIGHTS) -> list[SearchHit]:
        from .catalog import unresolve

        alpha, beta, gamma = weights
        if min(weights) < 0 or abs(alpha + beta + gamma - 1.0) > 1e-9:
            raise ValueError("fusion weights must be non-negative and sum to 1")
        tokens = normalize_text(query)
        if not tokens:
            raise EmptyQuery("query has no searchable tokens")
        matches = {t: self.fuzzy_lookup(t, max_distance) for t in set(tokens)}
        terms = {term for found in matches.values() for term, _ in found}
        if not terms:
            return []
        candidates = np.unique(np.concatenate([self.postings(t) for t in sorted(terms)]))

        df = {t: self.document_frequency(t) for t in set(tokens)}
        bounds = rank_bounds(self.store)
        rows = []
        for nid in candidates.tolist():
            doc = self.entity_tokens(nid)
            tf = Counter(doc)
            score = bm25(tokens, tf, len(doc), df, self.n_docs, self.avg_length)
            fuzzy = sum(_best_similarity(t, matches[t], tf) for t in tokens) / len(tokens)
            rows.append((nid, score, fuzzy, self._rank_component(nid, bounds)))

        top = max(r[1] for r in rows)
        hits = []
        for nid, score, fuzzy, pr in rows:
            norm = score / top if top > 0 else 0.0
            fused = alpha * norm + beta * fuzzy + gamma * pr
            hits.append((fused, nid, score, fuzzy, pr))
        hits.sort(key=lambda h: (-h[0], h[1]))
        return [SearchHit(unresolve(self.store, nid), fused, score, fuzzy, pr)
                for fused, nid, score, fuzzy, pr in hits[:limit]]

    def _rank_component(self, nid: int, bounds) -> float:
        if bounds is None:
            return 0.0
        lo, hi = bounds
        value = self.store.get("pagerank", pack_id(nid))
        if value is None or not hi > lo > 0:
            return 0.0
        pr = struct.unpack(">d", value)[0]
        return (math.log(pr) - math.log(lo)) / (math.log(hi) - math.log(lo))


def _best_similarity(token: str, found: list[tuple[str, int]], tf: Counter) -> float:
    # found is sorted by distance, so the first hit present in the document is the best
    best = None
    for term, dist in found:
        if term in tf:
            if best is not None and dist > best[1]:
                break
            sim = similarity(token, term, dist)
            if best is None or sim > best[0]:
                best = (sim, dist)
    return 0.0 if best is None else best[0]


def fuzzy_lookup(store: Store, token: str, max_distance: int) -> list[tuple[str, int]]:
    return KeywordIndex(store).fuzzy_lookup(token, max_distance)


def search(store: Store, query: str, limit: int = 10, max_distance: int = 2,
           weights: tuple[float, float, float] = DEFAULT_WEIGHTS) -> list[SearchHit]:
    return KeywordIndex(store).search(query, limit, max_distance, weights)
