"""Minimal JSON-over-HTTP routing on top of ``http.server``.

Both the tracker and the mock site host are small enough that a regex router
over ``ThreadingHTTPServer`` is all they need.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable
from urllib.parse import unquote, urlsplit

log = logging.getLogger(__name__)


class DropConnection(Exception):
    """Close the socket without a response, as an unreachable host would."""


@dataclass
class Response:
    status: int = 200
    body: Any = None
    content_type: str = "application/json"

    def encode(self) -> bytes:
        if self.content_type == "application/json":
            return json.dumps(self.body, sort_keys=True).encode("utf-8")
        return str(self.body).encode("utf-8")


class HTTPError(Exception):
    def __init__(self, status: int, body: Any):
        self.status = status
        self.body = body
        super().__init__(f"{status}: {body}")


Handler = Callable[..., Any]


class Router:
    def __init__(self):
        self._routes: list[tuple[str, re.Pattern, Handler]] = []

    def add(self, method: str, pattern: str, fn: Handler) -> None:
        self._routes.append((method, re.compile(f"^{pattern}$"), fn))

    def route(self, method: str, pattern: str):
        def deco(fn):
            self.add(method, pattern, fn)
            return fn
        return deco

    def dispatch(self, method: str, path: str, body: Any) -> Response:
        allowed = False
        for m, rx, fn in self._routes:
            match = rx.match(path)
            if not match:
                continue
            if m != method:
                allowed = True
                continue
            params = {k: unquote(v) for k, v in match.groupdict().items()}
            try:
                out = fn(body, **params) if method == "POST" else fn(**params)
            except HTTPError as exc:
                return Response(exc.status, exc.body)
            return out if isinstance(out, Response) else Response(200, out)
        if allowed:
            return Response(405, {"error_code": "METHOD_NOT_ALLOWED", "message": method})
        return Response(404, {"error_code": "NO_ROUTE", "message": path})


def _make_handler(router: Router):
    class _Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # noqa: D401 - silence default stderr logging
            log.debug("%s " + fmt, self.address_string(), *args)

        def _handle(self, method: str):
            path = urlsplit(self.path).path
            body = None
            if method == "POST":
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length) if length else b""
                try:
                    body = json.loads(raw) if raw else {}
                except json.JSONDecodeError:
                    self._send(Response(400, {"error_code": "BAD_JSON", "message": "body is not JSON"}))
                    return
                if not isinstance(body, dict):
                    self._send(Response(400, {"error_code": "BAD_JSON", "message": "body must be an object"}))
                    return
            try:
                resp = router.dispatch(method, path, body)
            except DropConnection:
                self.close_connection = True
                return
            except Exception as exc:  # pragma: no cover - last-resort guard
                log.exception("handler crashed")
                resp = Response(500, {"error_code": "INTERNAL", "message": str(exc)})
            self._send(resp)

        def _send(self, resp: Response):
            payload = resp.encode()
            self.send_response(resp.status)
            ctype = resp.content_type
            if not ctype.startswith("application/json"):
                ctype += "; charset=utf-8"
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def do_GET(self):
            self._handle("GET")

        def do_POST(self):
            self._handle("POST")

    return _Handler


def make_server(router: Router, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _make_handler(router))
    server.daemon_threads = True
    return server


def serve_in_thread(router: Router, host: str = "127.0.0.1", port: int = 0):
    """Start a server on a daemon thread; returns ``(server, base_url)``."""
    server = make_server(router, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    h, p = server.server_address[:2]
    return server, f"http://{h}:{p}"


def parse_bind(bind: str) -> tuple[str, int]:
    host, _, port = bind.rpartition(":")
    return (host or "127.0.0.1"), int(port)
