"""HTTP+JSON front end for a :class:`Tracker`."""

from __future__ import annotations

import base64
import binascii
import logging
from pathlib import Path

from .. import canonical
from ..errors import ProxyUnavailableError, ThrottledError, TrackerError
from ..httpjson import HTTPError, Response, Router
from ..status import FetchOutcome
from ..transport import HttpTransport, page_fetcher
from .core import RequestPair, Tracker

log = logging.getLogger(__name__)


def pair_to_wire(pair: RequestPair, tracker: Tracker) -> dict:
    site = tracker.sites.get(pair.upload_target)
    return {
        "pair_id": pair.pair_id,
        "phase": pair.phase,
        "issued_at": pair.issued_at,
        "download": pair.download.descriptor(),
        "upload": {
            "subpiece": {"piece": pair.upload_subpiece.piece_index, "index": pair.upload_subpiece.subpiece_index},
            "target_site": pair.upload_target,
            "target_hints": site.hints() if site else {},
        },
    }


class HttpProxy:
    """Fetch pages directly over HTTP; stands in for an anonymizing proxy."""

    def __init__(self, timeout: float = 10.0):
        self._fetch = page_fetcher(HttpTransport(timeout))

    def __call__(self, url: str) -> FetchOutcome:
        return self._fetch(url)


def snapshot_writer(path: str | Path):
    def write(tracker: Tracker) -> None:
        canonical.write_atomic(path, canonical.dump_bytes(tracker.snapshot()))
    return write


def _need(body: dict, *names: str) -> list:
    missing = [n for n in names if n not in body]
    if missing:
        raise HTTPError(400, {"error_code": "BAD_REQUEST", "message": f"missing fields: {missing}"})
    return [body[n] for n in names]


def build_router(tracker: Tracker) -> Router:
    r = Router()

    def call(fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except TrackerError as exc:
            raise HTTPError(exc.http_status, {"error_code": exc.code, "message": exc.message}) from None
        except ProxyUnavailableError as exc:
            raise HTTPError(503, {"error_code": "PROXY_UNAVAILABLE", "message": str(exc)}) from None

    def wire(pair):
        return pair_to_wire(pair, tracker) if pair is not None else None

    @r.route("POST", "/announce")
    def announce(body):
        info_hash, peer_id = _need(body, "info_hash", "peer_id")
        try:
            bits = base64.b64decode(body.get("have_pieces", ""), validate=True)
        except (binascii.Error, ValueError):
            raise HTTPError(400, {"error_code": "BAD_REQUEST", "message": "have_pieces is not base64"}) from None
        phase, pairs = call(tracker.announce, peer_id, info_hash, bits)
        return {"phase": phase, "pairs": [wire(p) for p in pairs]}

    @r.route("POST", "/request")
    def request(body):
        (peer_id,) = _need(body, "peer_id")
        phase, result = call(tracker.request_pairs, peer_id, body.get("info_hash"))
        if result.throttled and not result.pairs:
            raise HTTPError(429, {"error_code": ThrottledError.code, "message": "pair rate limit reached"})
        return {"phase": phase, "pairs": [wire(p) for p in result.pairs], "starved": result.starved,
                "exhausted": result.exhausted}

    @r.route("POST", "/report")
    def report(body):
        fields = _need(body, "peer_id", "pair_id", "location", "key", "checksum", "start_marker", "end_marker")
        res = call(tracker.report_replica, *fields)
        return {"accepted": res.accepted, "replica_id": res.record.replica_id, "next_pair": wire(res.next_pair),
                "phase": res.phase, "starved": res.starved}

    @r.route("POST", "/release")
    def release(body):
        peer_id, pair_id = _need(body, "peer_id", "pair_id")
        return {"pair": wire(call(tracker.release_pair, peer_id, pair_id))}

    @r.route("POST", "/retarget")
    def retarget(body):
        peer_id, pair_id = _need(body, "peer_id", "pair_id")
        return {"pair": wire(call(tracker.retarget, peer_id, pair_id, str(body.get("reason", ""))))}

    @r.route("GET", "/status")
    def status():
        return tracker.status()

    @r.route("GET", "/admin/replicas")
    def replicas():
        with tracker._lock:
            return {"info_hash": tracker.info_hash,
                    "replicas": [rec.to_dict() for rec in sorted(tracker.replicas.values(), key=lambda x: x.replica_id)]}

    return r
