"""Build a database directory from an entity dump, and check one.

Stages run in a fixed order and each is checkpointed in ``meta``:

    records     stream + parse the dump, intern ids, write ``items``
    attributes  ``inv_pv`` / ``inv_v`` from the stored records
    keywords    ``terms`` / ``postings_kw`` / ``deletes``
    pagerank    ``pagerank``

The build-complete marker is written last.  Re-running a build on an
interrupted directory skips finished stages and redoes the first
unfinished one from scratch.
"""

from __future__ import annotations

import collections
import concurrent.futures
import itertools
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import keywords, rank
from .attributes import raw_entity_refs
from .catalog import PROPERTY_BIT
from .codec import decode_posting, decode_raw, encode_posting, encode_record, pack_id, unpack_id
from .dump import ParseFailure, Skipped, parse_entity, stream_entities
from .errors import CorruptPosting, StrictParseFailure, WikiliteError
from .model import ItemRecord, entity_refs
from .spill import Grouper, IdCodec
from .store import TABLES, Store

logger = logging.getLogger(__name__)

STAGES = ("records", "attributes", "keywords", "pagerank")
_STAGE_TABLES = {
    "records": ("items", "id_map", "id_map_rev"),
    "attributes": ("inv_pv", "inv_v"),
    "keywords": ("terms", "deletes", "postings_kw"),
    "pagerank": ("pagerank",),
}


@dataclass
class BuildOptions:
    languages: Optional[frozenset] = None
    strict: bool = False
    skip_pagerank: bool = False
    damping: float = 0.85
    pr_tolerance: float = 1e-6
    pr_max_iterations: int = 100
    max_edit_distance: int = 2
    prefix_cap: int = 10
    compression: str = "auto"
    workers: int = 1
    spill_limit: int = 2_000_000
    progress_every: int = 100_000


@dataclass
class BuildReport:
    entities_ok: int = 0
    entities_skipped: int = 0
    parse_failures: int = 0
    statements_dropped: int = 0
    stage_seconds: dict = field(default_factory=dict)
    table_bytes: dict = field(default_factory=dict)
    resumed_stages: list = field(default_factory=list)

    @property
    def lines(self) -> int:
        return self.entities_ok + self.entities_skipped + self.parse_failures

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class IdRegistry:
    """Assigns numeric ids in first-seen order and writes both id tables."""

    def __init__(self, store: Store):
        self.store = store
        self._ids: dict[str, int] = {}
        self._next = {"Q": 0, "P": 0}

    def __len__(self):
        return len(self._ids)

    def register(self, entity_id: str) -> int:
        nid = self._ids.get(entity_id)
        if nid is not None:
            return nid
        ns = entity_id[0]
        nid = self._next[ns]
        self._next[ns] = nid + 1
        if ns == "P":
            nid |= PROPERTY_BIT
        self._ids[entity_id] = nid
        key = pack_id(nid)
        self.store.put("id_map", entity_id.encode(), key)
        self.store.put("id_map_rev", key, entity_id.encode())
        return nid


# records stage -----------------------------------------------------------------

def _parse_line(line_number: int, data: bytes, languages):
    """Worker-side parse; returns picklable pieces only."""
    from .dump import RawEntityDoc

    result = parse_entity(RawEntityDoc(line_number, data), languages)
    if isinstance(result, ItemRecord):
        return ("ok", result.id, list(entity_refs(result)), encode_record(result), result.dropped_statements)
    if isinstance(result, Skipped):
        return ("skipped", result.entity_id, result.reason)
    return ("failed", result.line_number, result.reason)


def _parse_chunk(chunk, languages):
    return [_parse_line(n, data, languages) for n, data in chunk]


def _parsed_stream(docs, options: BuildOptions):
    """Parse results in dump order, optionally fanned out over processes."""
    if options.workers <= 1:
        for doc in docs:
            yield _parse_line(doc.line_number, doc.data, options.languages)
        return
    chunks = (list(c) for c in _chunked(((d.line_number, d.data) for d in docs), 2000))
    depth = options.workers * 2
    with concurrent.futures.ProcessPoolExecutor(options.workers) as pool:
        pending = collections.deque()
        for chunk in chunks:
            pending.append(pool.submit(_parse_chunk, chunk, options.languages))
            if len(pending) >= depth:
                yield from pending.popleft().result()
        while pending:
            yield from pending.popleft().result()


def _chunked(iterable, size):
    it = iter(iterable)
    while True:
        chunk = list(itertools.islice(it, size))
        if not chunk:
            return
        yield chunk


def ingest_records(store: Store, dump_path, options: BuildOptions, report: BuildReport) -> None:
    registry = IdRegistry(store)
    started = time.monotonic()
    docs = stream_entities(dump_path, options.compression)
    for result in _parsed_stream(docs, options):
        status = result[0]
        if status == "ok":
            _, eid, refs, payload, dropped = result
            nid = registry.register(eid)
            for prop, value in refs:
                registry.register(prop)
                registry.register(value)
            store.put("items", pack_id(nid), payload)
            report.entities_ok += 1
            report.statements_dropped += dropped
        elif status == "skipped":
            report.entities_skipped += 1
        else:
            _, line, reason = result
            report.parse_failures += 1
            if options.strict:
                raise StrictParseFailure(f"line {line}: {reason}")
            logger.warning("line %d: %s", line, reason)
        seen = report.lines
        if options.progress_every and seen % options.progress_every == 0:
            rate = seen / max(time.monotonic() - started, 1e-9)
            logger.info("records: %d entities (%.0f/s)", seen, rate)
    for name in ("entities_ok", "entities_skipped", "parse_failures", "statements_dropped"):
        store.meta_put(name, getattr(report, name))
    store.meta_put("entity_count", report.entities_ok)
    store.meta_put("registered_ids", len(registry))
    store.commit()


# attributes stage ----------------------------------------------------------------

def build_attribute_index(store: Store, spill_dir=None, spill_limit: int = 2_000_000) -> None:
    by_pair = Grouper(IdCodec, spill_dir, spill_limit)
    by_value = Grouper(IdCodec, spill_dir, spill_limit)
    ids: dict[str, bytes] = {}

    def key_of(entity_id: str) -> bytes:
        key = ids.get(entity_id)
        if key is None:
            key = store.get("id_map", entity_id.encode())
            ids[entity_id] = key
        return key

    for batch in store.iter_batches("items"):
        for item_key, value in batch:
            subject = unpack_id(item_key)
            seen = set()
            for prop, target in raw_entity_refs(decode_raw(value)):
                if (prop, target) in seen:
                    continue
                seen.add((prop, target))
                vkey = key_of(target)
                by_pair.add(key_of(prop) + vkey, subject)
                by_value.add(vkey, subject)
        if len(ids) > spill_limit:  # bound the id cache like the groupers
            ids.clear()
    for table, grouper in (("inv_pv", by_pair), ("inv_v", by_value)):
        for key, subjects in grouper.groups():
            store.put(table, key, encode_posting(subjects))
        store.commit()


# orchestration -------------------------------------------------------------------

def _dump_timestamp(dump_path) -> str:
    try:
        mtime = os.stat(dump_path).st_mtime
    except (OSError, TypeError):
        return ""
    return datetime.fromtimestamp(mtime, timezone.utc).isoformat(timespec="seconds")


def _run_stage(store: Store, name: str, report: BuildReport, fn) -> None:
    if store.stage_done(name):
        logger.info("stage %s already complete, skipping", name)
        report.resumed_stages.append(name)
        return
    logger.info("stage %s", name)
    for table in _STAGE_TABLES[name]:
        store.clear(table)
    started = time.monotonic()
    fn()
    report.stage_seconds[name] = round(time.monotonic() - started, 3)
    store.mark_stage(name)


def build(dump_path, out_dir, options: Optional[BuildOptions] = None) -> BuildReport:
    """Run every stage into ``out_dir`` and mark the build complete."""
    options = options or BuildOptions()
    report = BuildReport()
    spill_dir = Path(out_dir) / "spill"
    with Store.open(out_dir, "build") as store:
        _run_stage(store, "records", report,
                   lambda: ingest_records(store, dump_path, options, report))
        if "records" in report.resumed_stages:
            for name in ("entities_ok", "entities_skipped", "parse_failures", "statements_dropped"):
                setattr(report, name, int(store.meta_get(name) or 0))
        _run_stage(store, "attributes", report,
                   lambda: build_attribute_index(store, spill_dir, options.spill_limit))
        _run_stage(store, "keywords", report,
                   lambda: keywords.build_term_index(store, options.max_edit_distance, options.prefix_cap,
                                                     spill_dir, options.spill_limit))
        if not options.skip_pagerank and store.count("items") > 0:
            _run_stage(store, "pagerank", report, lambda: rank.store_ranks(
                store, rank.pagerank(store, options.damping, options.pr_tolerance, options.pr_max_iterations)))
        else:
            store.meta_put("pagerank", "skipped")

        store.meta_put("dump_path", os.fspath(dump_path) if isinstance(dump_path, (str, os.PathLike)) else "")
        store.meta_put("dump_timestamp", _dump_timestamp(dump_path))
        store.meta_put("languages", ",".join(sorted(options.languages)) if options.languages else "*")
        store.meta_put("built_at", datetime.now(timezone.utc).isoformat(timespec="seconds"))
        store.commit()
        report.table_bytes = {t: store.table_bytes(t) for t in TABLES}
        store.mark_complete()
    if spill_dir.exists():
        spill_dir.rmdir()
    return report


# verification --------------------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    check: str
    severity: str  # "error" or "info"
    message: str


def verify(out_dir) -> list[Finding]:
    """Consistency checks over a completed build; an empty list means consistent."""
    findings: list[Finding] = []
    with Store.open(out_dir, "read") as store:
        forward = 0
        for batch in store.iter_batches("id_map"):
            for eid, key in batch:
                forward += 1
                if store.get("id_map_rev", key) != eid:
                    findings.append(Finding("id_map", "error", f"{eid.decode()} does not round-trip"))
        if forward != store.count("id_map_rev"):
            findings.append(Finding("id_map", "error", "id_map and id_map_rev differ in size"))

        for table in ("inv_v", "postings_kw", "inv_pv"):
            for batch in store.iter_batches(table):
                for key, value in batch:
                    try:
                        ids = decode_posting(value)
                    except CorruptPosting as exc:
                        findings.append(Finding("monotonicity", "error", f"{table}[{key.hex()}]: {exc}"))
                        continue
                    if table == "inv_pv" and not _contained(store, ids, key[8:]):
                        findings.append(Finding("containment", "error",
                                                f"inv_pv[{key.hex()}] is not within inv_v"))

        if store.count("pagerank") == 0:
            findings.append(Finding("pagerank", "info", "pagerank absent"))
        else:
            values = [v for batch in store.iter_batches("pagerank") for _, v in batch]
            total = math.fsum(np.frombuffer(b"".join(values), dtype=">f8").tolist())
            if abs(total - 1.0) > 1e-9:
                findings.append(Finding("pagerank", "error", f"scores sum to {total!r}"))
    return findings


def _contained(store: Store, ids: np.ndarray, value_key: bytes) -> bool:
    try:
        container = decode_posting(store.get("inv_v", value_key) or b"")
    except CorruptPosting:
        return True  # already reported as a monotonicity finding
    return bool(np.isin(ids, container, assume_unique=True).all())
