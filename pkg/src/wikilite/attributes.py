"""Boolean attribute search over the (property, value) inverted indexes.

A query is a list of clauses ``(op, property, value)``.  Each maximal run
of consecutive OR clauses is one disjunctive group, every AND clause is a
group on its own, and every NOT clause is a negative group.  The result is
the intersection of the positive groups minus the union of the negative
ones.  So the clause list

    (AND, P31, Q13442814), (OR, *, Q7430), (OR, *, Q12101244), (AND, *, Q123280)

means ``P31=Q13442814 and (Q7430 or Q12101244) and Q123280``.  A missing
property matches the value under any property.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .codec import count_posting, decode_posting, pack_id
from .errors import BadSyntax, EmptyQuery, NegativeOnlyQuery
from .model import ENTITY_ID_RE, PROPERTY_ID_RE, ItemRecord, entity_refs
from .store import Store

_EMPTY = np.empty(0, dtype=np.uint64)


class Op(str, enum.Enum):
    AND = "AND"
    OR = "OR"
    NOT = "NOT"


@dataclass(frozen=True)
class QueryClause:
    op: Op
    property: Optional[str]
    value: str

    def __post_init__(self):
        try:
            object.__setattr__(self, "op", Op(str(self.op).upper() if not isinstance(self.op, Op) else self.op))
        except ValueError:
            raise BadSyntax(f"unknown operator {self.op!r}") from None
        if self.property is not None and not PROPERTY_ID_RE.match(self.property):
            raise BadSyntax(f"bad property id {self.property!r}")
        if not isinstance(self.value, str) or not ENTITY_ID_RE.match(self.value):
            raise BadSyntax(f"bad entity id {self.value!r}")

    def __str__(self):
        return f"{self.op.value}:{self.property or '*'}={self.value}"


@dataclass(frozen=True)
class ClauseGroup:
    positive: bool
    clauses: tuple[QueryClause, ...]


ClauseLike = Union[QueryClause, Sequence]

_CLAUSE_RE = re.compile(r"(?P<op>[A-Za-z]+)\s*:\s*(?P<prop>\*|P[0-9]+)\s*=\s*(?P<value>[QP][0-9]+)\Z")


def parse_query(text: str) -> list[QueryClause]:
    """Parse ``"AND:P31=Q5; OR:*=Q7430"`` style query text."""
    parts = [p.strip() for p in text.split(";")]
    if parts and parts[-1] == "":
        parts.pop()
    if not parts or parts == [""]:
        raise EmptyQuery("query has no clauses")
    clauses = []
    for part in parts:
        m = _CLAUSE_RE.match(part)
        if not m:
            raise BadSyntax(f"cannot parse clause {part!r}; expected OP:PROP=VALUE")
        prop = None if m["prop"] == "*" else m["prop"]
        clauses.append(QueryClause(m["op"], prop, m["value"]))
    return clauses


def format_query(clauses: Iterable[QueryClause]) -> str:
    return "; ".join(str(c) for c in clauses)


def as_clauses(clauses: Iterable[ClauseLike]) -> list[QueryClause]:
    return [c if isinstance(c, QueryClause) else QueryClause(*c) for c in clauses]


def group_clauses(clauses: Iterable[ClauseLike]) -> list[ClauseGroup]:
    clauses = as_clauses(clauses)
    if not clauses:
        raise EmptyQuery("query has no clauses")
    groups: list[ClauseGroup] = []
    run: list[QueryClause] = []
    for clause in clauses:
        if clause.op is Op.OR:
            run.append(clause)
            continue
        if run:
            groups.append(ClauseGroup(True, tuple(run)))
            run = []
        groups.append(ClauseGroup(clause.op is Op.AND, (clause,)))
    if run:
        groups.append(ClauseGroup(True, tuple(run)))
    return groups


def index_item(record: ItemRecord) -> set[tuple[Optional[str], str, str]]:
    """Index entries ``(property or None, value, item)`` contributed by one record."""
    entries = set()
    for prop, value in entity_refs(record):
        entries.add((prop, value, record.id))
        entries.add((None, value, record.id))
    return entries


def raw_entity_refs(raw: list) -> list[tuple[str, str]]:
    """``entity_refs`` over an undecoded record (see ``codec.decode_raw``)."""
    out = []
    for prop, statements in raw[6]:
        for rank, snak, _quals, _refs in statements:
            dv = snak[3]
            if rank != 2 and dv is not None and dv[0] == 0:
                out.append((prop, dv[1]))
    return out


def posting_key(store: Store, prop: Optional[str], value: str) -> Optional[tuple[str, bytes]]:
    from .catalog import resolve

    vid = resolve(store, value)
    if vid is None:
        return None
    if prop is None:
        return "inv_v", pack_id(vid)
    pid = resolve(store, prop)
    if pid is None:
        return None
    return "inv_pv", pack_id(pid) + pack_id(vid)


def _raw_lookup(store: Store, prop: Optional[str], value: str) -> bytes:
    key = posting_key(store, prop, value)
    if key is None:
        return b""
    return store.get(*key) or b""


def lookup(store: Store, prop: Optional[str], value: str) -> np.ndarray:
    return decode_posting(_raw_lookup(store, prop, value))


def _group_set(store: Store, group: ClauseGroup) -> np.ndarray:
    sets = [lookup(store, c.property, c.value) for c in group.clauses]
    if len(sets) == 1:
        return sets[0]
    return np.unique(np.concatenate(sets))


def evaluate(store: Store, clauses: Iterable[ClauseLike], optimize: bool = True) -> np.ndarray:
    """Evaluate a clause list to a sorted uint64 array of numeric ids.

    With ``optimize`` the positive groups are intersected smallest first and
    evaluation stops as soon as the running result is empty.
    """
    groups = group_clauses(clauses)
    positive = [g for g in groups if g.positive]
    negative = [g for g in groups if not g.positive]
    if not positive:
        raise NegativeOnlyQuery("at least one AND or OR clause is required")

    if optimize:
        sets = sorted((_group_set(store, g) for g in positive), key=len)
        result = sets[0]
        for s in sets[1:]:
            if result.size == 0:
                return _EMPTY
            result = np.intersect1d(result, s, assume_unique=True)
    else:
        result = reduce(lambda acc, s: np.intersect1d(acc, s, assume_unique=True),
                        [_group_set(store, g) for g in positive])
    if result.size and negative:
        excluded = np.unique(np.concatenate([_group_set(store, g) for g in negative]))
        result = np.setdiff1d(result, excluded, assume_unique=True)
    return result.astype(np.uint64, copy=False)


def evaluate_count(store: Store, clauses: Iterable[ClauseLike]) -> int:
    clauses = as_clauses(clauses)
    if len(clauses) == 1 and clauses[0].op is not Op.NOT:
        # single positive clause: count varints straight off the stored bytes
        c = clauses[0]
        return count_posting(_raw_lookup(store, c.property, c.value))
    return int(evaluate(store, clauses).size)
