"""Read-only HTTP/JSON service over a built database.

Endpoints::

    GET  /items/{id}[?lang=xx]
    GET  /items/{id}/statements[?property=Pn]
    GET  /items/{id}/references
    GET  /items/{id}/rank
    GET  /search?q=...&limit=n[&max_edit=d][&lang=xx]
    POST /search/attributes   {"query": "...", "limit": n, "count_only": bool}
    GET  /stats

Errors are ``{"http_status": ..., "code": ..., "message": ...}``.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlsplit

from . import api
from .errors import BadSyntax, EmptyQuery, NegativeOnlyQuery, UnknownEntity, WikiliteError

logger = logging.getLogger(__name__)

_ITEM_ROUTE = re.compile(r"/items/(?P<id>[^/]+)(?:/(?P<sub>statements|references|rank))?\Z")
_STATUS = {UnknownEntity: 404, BadSyntax: 400, EmptyQuery: 400, NegativeOnlyQuery: 400}


class ApiError(Exception):
    def __init__(self, http_status: int, code: str, message: str):
        super().__init__(message)
        self.http_status = http_status
        self.code = code
        self.message = message

    def body(self) -> dict:
        return {"http_status": self.http_status, "code": self.code, "message": self.message}


def _int_param(params: dict, name: str, default: Optional[int]) -> Optional[int]:
    raw = params.get(name)
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ApiError(400, "BadSyntax", f"{name} must be an integer") from None
    if value < 0:
        raise ApiError(400, "BadSyntax", f"{name} must be non-negative")
    return value


class Service:
    """Routes requests to :mod:`wikilite.api`; independent of the socket layer."""

    def __init__(self, db: Optional[api.Database] = None):
        self.db = db

    def handle(self, method: str, target: str, body: bytes = b"") -> tuple[int, bytes]:
        try:
            status, payload = 200, self._dispatch(method, target, body)
        except ApiError as exc:
            status, payload = exc.http_status, exc.body()
        except WikiliteError as exc:
            status = next((s for cls, s in _STATUS.items() if isinstance(exc, cls)), 500)
            payload = ApiError(status, exc.code, str(exc)).body()
        except ValueError as exc:
            status, payload = 400, ApiError(400, "BadSyntax", str(exc)).body()
        except Exception as exc:
            logger.exception("unhandled error for %s %s", method, target)
            status, payload = 500, ApiError(500, "InternalError", str(exc)).body()
        return status, (api.dumps(payload) + "\n").encode()

    def _dispatch(self, method: str, target: str, body: bytes):
        if self.db is None:
            raise ApiError(503, "StoreUnavailable", "the database is not open yet")
        url = urlsplit(target)
        params = {k: v[-1] for k, v in parse_qs(url.query).items()}
        path = url.path.rstrip("/") or "/"
        m = _ITEM_ROUTE.match(path)
        if m and method == "GET":
            eid, sub = m["id"], m["sub"]
            if sub is None:
                return api.item_json(self.db, eid, params.get("lang"))
            if sub == "statements":
                return api.statements_json(self.db, eid, params.get("property"))
            if sub == "references":
                return api.references_json(self.db, eid)
            return api.rank_json(self.db, eid)
        if path == "/search" and method == "GET":
            return api.search_json(
                self.db, params.get("q", ""), _int_param(params, "limit", 10),
                _int_param(params, "max_edit", 2), params.get("lang"),
            )
        if path == "/search/attributes" and method == "POST":
            try:
                req = json.loads(body or b"{}")
            except ValueError:
                raise ApiError(400, "BadSyntax", "request body must be JSON") from None
            if not isinstance(req, dict) or not isinstance(req.get("query"), str):
                raise ApiError(400, "BadSyntax", "body needs a string 'query'")
            limit = req.get("limit")
            if limit is not None and (not isinstance(limit, int) or limit < 0):
                raise ApiError(400, "BadSyntax", "limit must be a non-negative integer")
            return api.attr_search_json(self.db, req["query"], limit, bool(req.get("count_only")))
        if path == "/stats" and method == "GET":
            return api.stats_json(self.db)
        if method not in ("GET", "POST"):
            raise ApiError(405, "MethodNotAllowed", f"{method} is not supported")
        raise ApiError(404, "NotFound", f"no route for {method} {url.path}")


class _Handler(BaseHTTPRequestHandler):
    service: Service
    protocol_version = "HTTP/1.1"

    def _respond(self):
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        status, payload = self.service.handle(self.command, self.path, body)
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    do_GET = do_POST = do_PUT = do_DELETE = do_PATCH = _respond

    def log_message(self, fmt, *args):
        logger.debug("%s - %s", self.address_string(), fmt % args)


def make_server(service: Service, bind: str = "127.0.0.1", port: int = 8000) -> ThreadingHTTPServer:
    handler = type("Handler", (_Handler,), {"service": service})
    server_cls = type("Server", (ThreadingHTTPServer,), {"request_queue_size": 256})  # default backlog is 5
    server = server_cls((bind, port), handler)
    server.daemon_threads = True
    return server


def serve(db_path, bind: str = "127.0.0.1", port: int = 8000) -> None:
    """Serve until interrupted.  Requests get 503 until the store is open."""
    service = Service()
    server = make_server(service, bind, port)
    host, real_port = server.server_address[:2]
    logger.info("serving %s on http://%s:%d", db_path, host, real_port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        service.db = api.Database.open(db_path)
        thread.join()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        if service.db is not None:
            service.db.close()
