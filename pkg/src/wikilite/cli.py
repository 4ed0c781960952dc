"""``wikilite`` command line.

Query commands read the database named by ``--db`` or ``$WIKILITE_DB``.
Results go to stdout; progress, timings and errors go to stderr.  Errors
are one JSON line ``{"error": <code>, "message": ...}``; exit status is 2
for usage errors and 1 for everything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from typing import Optional, Sequence

from . import api
from .build import BuildOptions, build, verify
from .errors import WikiliteError

DB_ENV = "WIKILITE_DB"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(line: str = "") -> None:
    sys.stdout.write(line + "\n")


def _emit_json(obj) -> None:
    _emit(api.dumps(obj))


def _fail(code: str, message: str, status: int) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message}, ensure_ascii=False) + "\n")
    return status


def _parser() -> _Parser:
    p = _Parser(prog="wikilite", description="Offline Wikidata-dump database.")
    p.add_argument("--db", help=f"database directory (default: ${DB_ENV})")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    p.add_argument("--timing", action="store_true", help="print elapsed time to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build", help="build a database from an entity dump")
    b.add_argument("dump")
    b.add_argument("out")
    b.add_argument("--lang", action="append", help="keep only these languages (repeatable or comma list)")
    b.add_argument("--strict", action="store_true", help="abort on the first parse failure")
    b.add_argument("--skip-pagerank", action="store_true")
    b.add_argument("--damping", type=float, default=0.85)
    b.add_argument("--pr-tol", type=float, default=1e-6)
    b.add_argument("--pr-max-iter", type=int, default=100)
    b.add_argument("--max-edit", type=int, default=2, help="keyword index edit distance")
    b.add_argument("--prefix-cap", type=int, default=10)
    b.add_argument("--compression", choices=("auto", "none", "gzip", "bzip2"), default="auto")
    b.add_argument("--workers", type=int, default=1, help="parse worker processes")

    v = sub.add_parser("verify", help="consistency-check a built database")
    v.add_argument("dir", nargs="?")
    v.add_argument("--json", action="store_true")

    g = sub.add_parser("get", help="labels, descriptions, aliases and sitelinks of an item")
    g.add_argument("id")
    g.add_argument("--lang")
    g.add_argument("--json", action="store_true")

    s = sub.add_parser("statements", help="statements of an item")
    s.add_argument("id")
    s.add_argument("--property")
    s.add_argument("--json", action="store_true")

    r = sub.add_parser("references", help="references of an item")
    r.add_argument("id")
    r.add_argument("--json", action="store_true")

    for name in ("search-attr", "count-attr"):
        a = sub.add_parser(name, help="boolean attribute search, e.g. 'AND:P31=Q5; NOT:*=Q6581072'")
        a.add_argument("query")
        a.add_argument("--json", action="store_true")
        if name == "search-attr":
            a.add_argument("--limit", type=int)
            a.add_argument("--count", action="store_true")

    k = sub.add_parser("search", help="fuzzy keyword search over labels and aliases")
    k.add_argument("text")
    k.add_argument("--limit", type=int, default=10)
    k.add_argument("--max-edit", type=int, default=2)
    k.add_argument("--lang")
    k.add_argument("--json", action="store_true")

    pr = sub.add_parser("pagerank", help="stored PageRank score of an entity")
    pr.add_argument("id")
    pr.add_argument("--json", action="store_true")

    st = sub.add_parser("stats", help="build metadata and table sizes")
    st.add_argument("--json", action="store_true")

    sv = sub.add_parser("serve", help="run the HTTP service")
    sv.add_argument("--bind", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    return p


def _db_path(args) -> str:
    path = args.db or os.environ.get(DB_ENV)
    if not path:
        raise UsageError(f"no database given: pass --db or set {DB_ENV}")
    return path


def _languages(values: Optional[list[str]]) -> Optional[frozenset]:
    if not values:
        return None
    return frozenset(code.strip() for v in values for code in v.split(",") if code.strip())


def _cmd_build(args) -> int:
    options = BuildOptions(
        languages=_languages(args.lang), strict=args.strict, skip_pagerank=args.skip_pagerank,
        damping=args.damping, pr_tolerance=args.pr_tol, pr_max_iterations=args.pr_max_iter,
        max_edit_distance=args.max_edit, prefix_cap=args.prefix_cap,
        compression=args.compression, workers=args.workers,
    )
    report = build(args.dump, args.out, options)
    _emit(report.to_json())
    return 0


def _cmd_verify(args) -> int:
    findings = verify(args.dir or _db_path(args))
    if args.json:
        _emit_json([f.__dict__ for f in findings])
    else:
        for f in findings:
            _emit(f"{f.severity}\t{f.check}\t{f.message}")
    return 1 if any(f.severity == "error" for f in findings) else 0


def _print_item(item: dict, lang: Optional[str]) -> None:
    def tag(kind, code):
        return kind if lang else f"{kind}[{code}]"

    for code, value in item["labels"].items():
        _emit(f"{tag('label', code)}: {value}")
    for code, value in item["descriptions"].items():
        _emit(f"{tag('description', code)}: {value}")
    for code, values in item["aliases"].items():
        for value in values:
            _emit(f"{tag('alias', code)}: {value}")
    for site, title in item["sitelinks"].items():
        _emit(f"sitelink[{site}]: {title}")
    if item["types"]:
        _emit(f"types: {' '.join(item['types'])}")


def _run_query(args, db: api.Database) -> int:
    cmd = args.command
    if cmd == "get":
        item = api.item_json(db, args.id, args.lang)
        _emit_json(item) if args.json else _print_item(item, args.lang)
    elif cmd == "statements":
        result = api.statements_json(db, args.id, args.property)
        if args.json:
            _emit_json(result)
        else:
            for st in result["statements"]:
                _emit_json(st)
    elif cmd == "references":
        result = api.references_json(db, args.id)
        if args.json:
            _emit_json(result)
        else:
            for ref in result["references"]:
                _emit_json(ref)
    elif cmd in ("search-attr", "count-attr"):
        count_only = cmd == "count-attr" or args.count
        result = api.attr_search_json(db, args.query, getattr(args, "limit", None), count_only)
        if args.json:
            _emit_json(result)
        elif count_only:
            _emit(str(result["count"]))
        else:
            for eid in result["ids"]:
                _emit(eid)
    elif cmd == "search":
        result = api.search_json(db, args.text, args.limit, args.max_edit, args.lang)
        if args.json:
            _emit_json(result)
        else:
            for hit in result["hits"]:
                _emit_json(hit)
    elif cmd == "pagerank":
        result = api.rank_json(db, args.id)
        _emit_json(result) if args.json else _emit(repr(result["pagerank"]))
    elif cmd == "stats":
        result = api.stats_json(db)
        if args.json:
            _emit_json(result)
        else:
            for key, value in result["meta"].items():
                _emit(f"{key}: {value}")
            for table, count in result["tables"].items():
                _emit(f"table {table}: {count}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except UsageError as exc:
        return _fail("Usage", str(exc), 2)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    started = time.perf_counter()
    try:
        if args.command == "build":
            status = _cmd_build(args)
        elif args.command == "verify":
            status = _cmd_verify(args)
        elif args.command == "serve":
            from .service import serve

            serve(_db_path(args), args.bind, args.port)
            status = 0
        else:
            db = api.Database.open(_db_path(args))
            try:
                status = _run_query(args, db)
            finally:
                db.close()
    except UsageError as exc:
        return _fail("Usage", str(exc), 2)
    except WikiliteError as exc:
        return _fail(exc.code, str(exc), 1)
    except (OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    if args.timing:
        sys.stderr.write(f"elapsed: {time.perf_counter() - started:.6f}s\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
