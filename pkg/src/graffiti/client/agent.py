"""Peer-side session: announce, fetch, replicate, report, reassemble.

A session works through the tracker's request pairs in the order they were
issued. Downloads for a batch of pairs are fetched concurrently (bounded by
``Limits.max_parallel``); uploads and reports then run one at a time in pair
order, so every random draw and every tracker command happens in a fixed
sequence and a seeded session replays exactly.
"""

from __future__ import annotations

import base64
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .. import codec
from ..errors import (
    ERROR_CODES,
    FalseClaimError,
    GraffitiError,
    ProxyUnavailableError,
    StarvationError,
    TrackerError,
    UploadFailedError,
    UploadRefusedError,
)
from ..fileset import FilesetManifest, assemble, digest, encode_bitfield
from ..status import FetchOutcome, classify_probe, probe
from ..transport import HttpTransport, Unreachable
from .adapters import TitleTaken
from .words import random_title

log = logging.getLogger(__name__)

DEFAULT_NOTICE = (
    "The text below is an encrypted block stored by a research file-sharing "
    "prototype. It is meaningless without its key and can be safely deleted."
)
TITLE_ATTEMPTS = 5


@dataclass(frozen=True)
class Limits:
    max_parallel: int = 4
    retries: int = 3
    backoff: float = 1.0
    timeout: float = 10.0
    retarget_budget: int = 5
    release_budget: int = 3


class TrackerClient:
    """JSON client for the tracker's wire protocol; error codes come back as typed exceptions."""

    def __init__(self, base_url: str, transport=None):
        self.base_url = base_url.rstrip("/")
        self.transport = transport or HttpTransport()

    def _post(self, path: str, body: dict) -> dict:
        try:
            status, reply = self.transport.post(self.base_url + path, body)
        except Unreachable as exc:
            raise TrackerError(f"tracker unreachable: {exc}", "UNREACHABLE") from None
        if status < 400:
            return reply
        code = reply.get("error_code", "") if isinstance(reply, dict) else ""
        message = reply.get("message", "") if isinstance(reply, dict) else str(reply)
        if code == "PROXY_UNAVAILABLE":
            raise ProxyUnavailableError(message)
        cls = ERROR_CODES.get(code)
        if cls is not None:
            raise cls(message)
        raise TrackerError(message or f"HTTP {status}", code or f"HTTP_{status}")

    def announce(self, peer_id: str, info_hash: str, have_pieces: bytes) -> dict:
        return self._post("/announce", {"info_hash": info_hash, "peer_id": peer_id,
                                        "have_pieces": base64.b64encode(have_pieces).decode("ascii")})

    def request(self, peer_id: str, info_hash: str) -> dict:
        return self._post("/request", {"peer_id": peer_id, "info_hash": info_hash})

    def report(self, peer_id: str, pair_id: str, replica: "ProducedReplica") -> dict:
        return self._post("/report", {"peer_id": peer_id, "pair_id": pair_id, **replica.wire()})

    def release(self, peer_id: str, pair_id: str) -> dict | None:
        return self._post("/release", {"peer_id": peer_id, "pair_id": pair_id})["pair"]

    def retarget(self, peer_id: str, pair_id: str, reason: str) -> dict:
        return self._post("/retarget", {"peer_id": peer_id, "pair_id": pair_id, "reason": reason})["pair"]

    def status(self) -> dict:
        _, text = self.transport.get(self.base_url + "/status")
        return json.loads(text)


@dataclass(frozen=True)
class ProducedReplica:
    location: str
    key: str
    checksum: str
    start_marker: str
    end_marker: str
    title: str = ""
    title_attempts: int = 1

    def wire(self) -> dict:
        return {"location": self.location, "key": self.key, "checksum": self.checksum,
                "start_marker": self.start_marker, "end_marker": self.end_marker}


def _adapter_for_location(adapters: Sequence, location: str):
    for a in adapters:
        if a.handles(location):
            return a
    raise LookupError(f"no adapter handles {location}")


def _adapter_for_kind(adapters: Sequence, kind: str):
    for a in adapters:
        if a.name == kind:
            return a
    raise LookupError(f"no adapter for site kind {kind!r}")


def fetch_subpiece(descriptor: Mapping, adapter) -> tuple[FetchOutcome, bytes | None]:
    """Fetch one replica; bytes are returned only when they match the checksum."""
    return probe(adapter.fetch, descriptor["location"], descriptor["key"], descriptor["checksum"],
                 descriptor["start_marker"], descriptor["end_marker"])


def produce_replica(
    data: bytes,
    site_id: str,
    hints: Mapping,
    adapter,
    rng: random.Random,
    notice: str = DEFAULT_NOTICE,
    tracking_url: str = "",
) -> ProducedReplica:
    """Encode ``data`` under a fresh key, write it to a new page and read it back.

    Raises UploadRefusedError when the site's edit gate cannot be passed and
    UploadFailedError when no free title is found or the read-back does not
    reproduce ``data``.
    """
    key = codec.generate_key(rng)
    payload = codec.encode_payload(data, key, max_length=None)
    page = codec.wrap_page(payload, notice, tracking_url)
    for attempt in range(TITLE_ATTEMPTS):
        title = random_title(rng, attempt)
        try:
            location = adapter.create_page(site_id, dict(hints), title, page)
            break
        except TitleTaken:
            continue
    else:
        raise UploadFailedError(f"no free page title after {TITLE_ATTEMPTS} attempts")

    outcome, back = probe(adapter.fetch, location, key.hex(), payload.plaintext_checksum,
                          payload.start_marker, payload.end_marker)
    if back != data:
        raise UploadFailedError(f"read-back of {location} gave {classify_probe(outcome).value}")
    return ProducedReplica(location, key.hex(), payload.plaintext_checksum, payload.start_marker,
                           payload.end_marker, title, attempt + 1)


def have_bitfield(held: Mapping[int, bytes], manifest: FilesetManifest) -> bytes:
    """Pieces whose every sub-piece is held and whose piece checksum verifies."""
    complete = []
    for p, want in enumerate(manifest.piece_checksums):
        ords = [manifest.ordinal(r) for r in manifest.subpiece_layout() if r.piece_index == p]
        if all(o in held for o in ords) and digest(b"".join(held[o] for o in ords)) == want:
            complete.append(p)
    return encode_bitfield(complete, manifest.num_pieces)


@dataclass
class _PairLog:
    pair_id: str
    phase: str
    issued_at: float
    download_ordinal: int
    download_location: str
    upload_ordinal: int
    upload_site: str
    fetch_attempts: int = 0
    releases: int = 0
    retargets: int = 0
    outcome: str = "pending"
    replica_location: str | None = None
    replica_id: str | None = None
    title_attempts: int = 0
    step_started: int = 0
    step_finished: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SessionReport:
    peer_id: str
    info_hash: str
    seed: int
    phase: str = "initializing"
    complete: bool = False
    pairs: list[_PairLog] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    fileset_sha256: str | None = None
    steps: int = 0

    @property
    def replicas_produced(self) -> int:
        return sum(1 for p in self.pairs if p.outcome == "reported")

    @property
    def downloads(self) -> int:
        return sum(1 for p in self.pairs if p.outcome in ("reported", "fetched"))

    def to_dict(self) -> dict:
        by_phase: dict[str, int] = {}
        for p in self.pairs:
            if p.outcome == "reported":
                by_phase[p.phase] = by_phase.get(p.phase, 0) + 1
        return {
            "peer_id": self.peer_id,
            "info_hash": self.info_hash,
            "seed": self.seed,
            "phase": self.phase,
            "complete": self.complete,
            "fileset_sha256": self.fileset_sha256,
            "replicas_produced": self.replicas_produced,
            "replicas_by_phase": dict(sorted(by_phase.items())),
            "downloads": self.downloads,
            "steps": self.steps,
            "pairs": [p.to_dict() for p in self.pairs],
            "errors": self.errors,
        }


def _fail(exc: GraffitiError, report: SessionReport, blocks: dict[int, bytes]) -> GraffitiError:
    report.errors.append({"stage": "session", "error": type(exc).__name__, "detail": str(exc)})
    exc.report = report
    exc.blocks = dict(blocks)
    return exc


def run_session(
    manifest: FilesetManifest,
    tracker: TrackerClient,
    adapters: Sequence,
    limits: Limits = Limits(),
    seed: int = 0,
    *,
    peer_id: str | None = None,
    held: Mapping[int, bytes] | None = None,
    notice: str = DEFAULT_NOTICE,
    tracking_url: str | None = None,
    on_subpiece_complete: Callable[[int, bytes], None] | None = None,
) -> tuple[bytes, SessionReport]:
    """Download ``manifest``'s fileset while paying for every download with a new replica.

    The session ends when the tracker has no further pairs for this peer.
    Errors raised from here carry ``report`` and ``blocks`` attributes with
    the partial progress.
    """
    if not adapters:
        raise ValueError("at least one site adapter is required")
    rng = random.Random(seed)
    peer_id = peer_id or f"peer-{seed}"
    if tracking_url is None:
        tracking_url = f"{manifest.tracker_url.rstrip('/')}/status" if manifest.tracker_url else ""
    blocks: dict[int, bytes] = dict(held or {})
    report = SessionReport(peer_id, manifest.info_hash, seed)
    logs: dict[str, _PairLog] = {}

    def log_for(wire: dict) -> _PairLog:
        entry = logs.get(wire["pair_id"])
        if entry is None:
            d, u = wire["download"], wire["upload"]
            entry = _PairLog(
                wire["pair_id"], wire["phase"], wire["issued_at"],
                manifest.ordinal((d["subpiece"]["piece"], d["subpiece"]["index"])), d["location"],
                manifest.ordinal((u["subpiece"]["piece"], u["subpiece"]["index"])), u["target_site"],
            )
            logs[entry.pair_id] = entry
            report.pairs.append(entry)
        return entry

    def step() -> int:
        report.steps += 1
        return report.steps

    try:
        reply = tracker.announce(peer_id, manifest.info_hash, have_bitfield(blocks, manifest))
    except GraffitiError as exc:
        raise _fail(exc, report, blocks)
    report.phase = reply["phase"]
    queue: list[dict] = list(reply["pairs"])

    with ThreadPoolExecutor(max_workers=max(1, limits.max_parallel)) as pool:
        while True:
            if not queue:
                try:
                    reply = tracker.request(peer_id, manifest.info_hash)
                except GraffitiError as exc:
                    raise _fail(exc, report, blocks)
                report.phase = reply["phase"]
                queue = list(reply["pairs"])
                if not queue:
                    starved = [o for o in reply.get("starved", []) if o not in blocks]
                    if starved:
                        raise _fail(StarvationError(starved, have_bitfield(blocks, manifest)), report, blocks)
                    if reply.get("exhausted"):
                        raise _fail(TrackerError("no storage site left for an upload obligation",
                                                 "TARGET_EXHAUSTED"), report, blocks)
                    break

            batch, queue = queue[:limits.max_parallel], queue[limits.max_parallel:]
            entries = [log_for(w) for w in batch]
            fetched = list(pool.map(
                lambda w: fetch_subpiece(w["download"], _adapter_for_location(adapters, w["download"]["location"])),
                batch))

            for wire, entry, (outcome, data) in zip(batch, entries, fetched):
                entry.step_started = entry.step_started or step()
                entry.fetch_attempts += 1
                try:
                    follow = _work_pair(wire, entry, outcome, data, manifest, tracker, adapters, limits,
                                        rng, peer_id, blocks, notice, tracking_url, on_subpiece_complete, report)
                except GraffitiError as exc:
                    entry.outcome = "failed"
                    entry.step_finished = step()
                    raise _fail(exc, report, blocks)
                entry.step_finished = step()
                queue.extend(follow)

    missing = [manifest.ordinal(r) for r in manifest.subpiece_layout() if manifest.ordinal(r) not in blocks]
    if missing:
        raise _fail(StarvationError(missing, have_bitfield(blocks, manifest)), report, blocks)
    data = assemble({manifest.ref_for_ordinal(o): b for o, b in blocks.items()}, manifest)
    report.complete = True
    report.fileset_sha256 = digest(data)
    return data, report


def _work_pair(wire, entry, outcome, data, manifest, tracker, adapters, limits, rng, peer_id,
               blocks, notice, tracking_url, on_complete, report) -> list[dict]:
    """Finish one pair. Returns pairs to append to the work queue."""
    pair_id = wire["pair_id"]
    while data is None:
        status = classify_probe(outcome).value
        report.errors.append({"pair_id": pair_id, "stage": "fetch", "error": status,
                              "location": wire["download"]["location"]})
        if entry.releases >= limits.release_budget:
            raise UploadFailedError(f"pair {pair_id}: download kept failing")
        entry.releases += 1
        try:
            moved = tracker.release(peer_id, pair_id)
        except FalseClaimError:
            # the tracker reached the page; a transient fault on our side
            moved = wire
        if moved is None:
            entry.outcome = "voided"
            return []
        wire = moved
        entry.download_location = wire["download"]["location"]
        entry.fetch_attempts += 1
        outcome, data = fetch_subpiece(wire["download"], _adapter_for_location(adapters, entry.download_location))

    d_ord = entry.download_ordinal
    if d_ord not in blocks:
        blocks[d_ord] = data
        if on_complete is not None:
            on_complete(d_ord, data)
    entry.outcome = "fetched"

    upload = wire["upload"]
    while True:
        hints = upload["target_hints"]
        adapter = _adapter_for_kind(adapters, hints.get("kind", "mockwiki"))
        if not adapter.writable:
            raise UploadRefusedError("read_only_adapter")
        try:
            replica = produce_replica(blocks[entry.upload_ordinal], upload["target_site"], hints, adapter,
                                      rng, notice, tracking_url)
            break
        except (UploadRefusedError, UploadFailedError) as exc:
            reason = exc.reason if isinstance(exc, UploadRefusedError) else "upload_failed"
            report.errors.append({"pair_id": pair_id, "stage": "upload", "error": reason,
                                  "site": upload["target_site"]})
            if entry.retargets >= limits.retarget_budget:
                raise
            entry.retargets += 1
            upload = tracker.retarget(peer_id, pair_id, reason)["upload"]
            entry.upload_site = upload["target_site"]

    reply = tracker.report(peer_id, pair_id, replica)
    entry.outcome = "reported"
    entry.replica_location = replica.location
    entry.replica_id = reply["replica_id"]
    entry.title_attempts = replica.title_attempts
    report.phase = reply["phase"]
    return [reply["next_pair"]] if reply.get("next_pair") else []
