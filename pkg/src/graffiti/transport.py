"""Request transports shared by the client, the tracker proxy and the probe tool.

``HttpTransport`` talks to real sockets; ``RouterTransport`` dispatches the
same requests straight into in-process routers, which keeps unit tests fast
while exercising the identical wire format.
"""

from __future__ import annotations

import json
from typing import Any, Mapping

import requests

from .httpjson import DropConnection, Router
from .status import CONTENT, MISSING, UNREACHABLE, FetchOutcome


class Unreachable(ConnectionError):
    pass


class HttpTransport:
    def __init__(self, timeout: float = 10.0, session: requests.Session | None = None):
        self.timeout = timeout
        self.session = session or requests.Session()

    def get(self, url: str) -> tuple[int, str]:
        try:
            r = self.session.get(url, timeout=self.timeout)
        except requests.ConnectionError as exc:
            raise Unreachable(str(exc)) from None
        return r.status_code, r.text

    def post(self, url: str, body: Mapping[str, Any]) -> tuple[int, Any]:
        try:
            r = self.session.post(url, json=dict(body), timeout=self.timeout)
        except requests.ConnectionError as exc:
            raise Unreachable(str(exc)) from None
        try:
            return r.status_code, r.json()
        except ValueError:
            return r.status_code, {"message": r.text}


class RouterTransport:
    """Routes ``<base_url><path>`` to ``routers[base_url]`` without sockets."""

    def __init__(self, routers: Mapping[str, Router] | None = None):
        self.routers: dict[str, Router] = dict(routers or {})

    def mount(self, base_url: str, router: Router) -> None:
        self.routers[base_url.rstrip("/")] = router

    def _resolve(self, url: str) -> tuple[Router, str]:
        for base, router in self.routers.items():
            if url.startswith(base + "/"):
                return router, url[len(base):]
        raise Unreachable(f"no route to {url}")

    def get(self, url: str) -> tuple[int, str]:
        router, path = self._resolve(url)
        try:
            resp = router.dispatch("GET", path.split("?", 1)[0], None)
        except DropConnection:
            raise Unreachable(url) from None
        return resp.status, resp.encode().decode("utf-8")

    def post(self, url: str, body: Mapping[str, Any]) -> tuple[int, Any]:
        router, path = self._resolve(url)
        try:
            resp = router.dispatch("POST", path, json.loads(json.dumps(dict(body))))
        except DropConnection:
            raise Unreachable(url) from None
        return resp.status, json.loads(resp.encode())


def page_fetcher(transport) -> "callable":
    """A fetch function mapping transport results onto probe outcomes."""

    def fetch(url: str) -> FetchOutcome:
        try:
            status, text = transport.get(url)
        except Unreachable:
            return FetchOutcome(UNREACHABLE)
        if status == 404:
            return FetchOutcome(MISSING)
        if status != 200:
            return FetchOutcome(UNREACHABLE)
        return FetchOutcome(CONTENT, text)

    return fetch
