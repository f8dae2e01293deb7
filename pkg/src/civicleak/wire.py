"""HTTP/JSON binding of the registry services.

Every operation is a ``POST`` of ``{"ctx": {...}, "query": {...}}`` to its
route; the response is a typed JSON body whose status code follows
:data:`civicleak.codec.STATUS`. :class:`RemoteRegistry` exposes the same call
interface as :class:`civicleak.registry.Registry`, so harvesters run
unchanged against either.
"""

from __future__ import annotations

import http.client
import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any
from urllib.parse import urlsplit

from .codec import (
    OPERATIONS,
    ROUTES,
    WIRE_VERSION,
    CodecError,
    ctx_from_json,
    ctx_to_json,
    query_from_json,
    query_to_json,
    result_from_json,
    result_to_json,
    status_of,
)
from .registry import Registry, RequestContext

log = logging.getLogger(__name__)


class TransportError(RuntimeError):
    """The service could not be reached or answered outside the protocol."""


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True  # headers and body go out as separate writes
    server: _Server

    def log_message(self, format: str, *args: Any) -> None:  # noqa: A002
        log.debug("%s " + format, self.address_string(), *args)

    def _send(self, status: int, body: dict[str, Any]) -> None:
        data = json.dumps(body, ensure_ascii=False, separators=(",", ":")).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self) -> None:  # noqa: N802
        if self.path == "/v1/health":
            self._send(200, {"type": "health", "status": "ok", "wire_version": WIRE_VERSION})
        else:
            self._send(404, {"type": "error", "error": "unknown-route", "detail": self.path})

    def do_POST(self) -> None:  # noqa: N802
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        op = ROUTES.get(self.path)
        if op is None:
            self._send(404, {"type": "error", "error": "unknown-route", "detail": self.path})
            return
        try:
            body = json.loads(raw)
            ctx = ctx_from_json(body.get("ctx"))
            args = query_from_json(op, body.get("query") or {})
        except (ValueError, AttributeError, TypeError) as exc:
            self._send(422, {"type": "error", "error": "invalid-format", "detail": f"malformed request: {exc}"})
            return
        result = getattr(self.server.registry, op)(ctx, **args)
        self._send(status_of(result), result_to_json(result))


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, addr: tuple[str, int], registry: Registry):
        self.registry = registry
        super().__init__(addr, _Handler)


class ServiceServer:
    """A running HTTP front end for one registry; usable as a context manager."""

    def __init__(self, registry: Registry, host: str = "127.0.0.1", port: int = 0):
        self._server = _Server((host, port), registry)
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> ServiceServer:
        self._thread = threading.Thread(target=self._server.serve_forever, name="civicleak-wire", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def close(self) -> None:
        if self._thread is not None:
            self._server.shutdown()
            self._thread.join()
            self._thread = None
        self._server.server_close()

    def __enter__(self) -> ServiceServer:
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.close()


class RemoteRegistry:
    """Client side of the binding with one keep-alive connection per thread."""

    def __init__(self, url: str, timeout: float = 10.0):
        parts = urlsplit(url)
        if parts.scheme != "http" or not parts.hostname:
            raise ValueError(f"expected an http:// URL, got {url!r}")
        self.host, self.port = parts.hostname, parts.port or 80
        self.timeout = timeout
        self._local = threading.local()

    def _conn(self) -> http.client.HTTPConnection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = self._local.conn = http.client.HTTPConnection(self.host, self.port, timeout=self.timeout)
        return conn

    def _drop(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None

    def _post(self, op: str, ctx: RequestContext, args: dict[str, Any]) -> Any:
        route, _ = OPERATIONS[op]
        payload = json.dumps({"ctx": ctx_to_json(ctx), "query": query_to_json(op, args)}, ensure_ascii=False)
        try:
            conn = self._conn()
            conn.request("POST", route, payload.encode(), {"Content-Type": "application/json"})
            resp = conn.getresponse()
            raw = resp.read()
        except (OSError, http.client.HTTPException) as exc:
            self._drop()
            raise TransportError(f"{op}: {exc}") from exc
        try:
            body = json.loads(raw)
            return result_from_json(body)
        except (ValueError, KeyError) as exc:
            raise TransportError(f"{op}: unexpected {resp.status} response {raw[:200]!r}") from exc

    def health(self) -> dict[str, Any]:
        try:
            conn = self._conn()
            conn.request("GET", "/v1/health")
            return json.loads(conn.getresponse().read())
        except (OSError, http.client.HTTPException, ValueError) as exc:
            self._drop()
            raise TransportError(str(exc)) from exc

    def close(self) -> None:
        self._drop()

    def trn_lookup(self, ctx: RequestContext, trn: str):
        return self._post("trn_lookup", ctx, {"trn": trn})

    def voter_search(self, ctx: RequestContext, first_prefix: str, last_name: str, father_prefix: str,
                     mother_prefix: str, birth_year: int):
        return self._post("voter_search", ctx, {
            "first_prefix": first_prefix, "last_name": last_name, "father_prefix": father_prefix,
            "mother_prefix": mother_prefix, "birth_year": birth_year,
        })

    def amka_search(self, ctx: RequestContext, first_name: str, last_name: str, father_name: str,
                    mother_name: str, dob, trn: str | None = None, id_card: str | None = None):
        return self._post("amka_search", ctx, {
            "first_name": first_name, "last_name": last_name, "father_name": father_name,
            "mother_name": mother_name, "dob": dob, "trn": trn, "id_card": id_card,
        })

    def doc_search(self, ctx: RequestContext, term: str):
        return self._post("doc_search", ctx, {"term": term})

    def doc_fetch(self, ctx: RequestContext, doc_id: str):
        return self._post("doc_fetch", ctx, {"doc_id": doc_id})


__all__ = ["CodecError", "RemoteRegistry", "ServiceServer", "TransportError"]
