"""Tracker state machine for one fileset.

Peers announce, receive download/upload request pairs, and report the new
replicas they produce. Each peer holds at most ``aps_capacity`` unfulfilled
pairs (its active piece set), so a download location is only granted against
an outstanding upload obligation. Every announcement starts an initialization
phase in which the peer must place two replicas of each sub-piece in the
current initial piece set (IPS), which is shared by all peers announcing in
the same window and redrawn when the window ends.

All commands go through one lock, so state changes for the fileset form a
single serialized stream. Randomness comes from one seeded generator and
time from an injected clock, so a command sequence replays identically.
"""

from __future__ import annotations

import logging
import random
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from ..clock import HOUR, SimClock
from ..codec import MARKER_LEN
from ..errors import (
    BannedError,
    DuplicateLocationError,
    FalseClaimError,
    NotTrackedError,
    ProxyUnavailableError,
    StalePairError,
    TargetExhaustedError,
    UnknownPeerError,
    VerificationFailedError,
)
from ..fileset import FilesetManifest, SubPieceRef, decode_bitfield
from ..status import Fetch, ReplicaStatus, classify_probe, probe, record_transition_allowed
from .throttle import DEFAULT_PAIRS_PER_HOUR, TokenBucket

log = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1
IPS_REPLICAS = 2
WRITABLE_PROTECTIONS = ("anonymous", "registration", "puzzle")

INITIALIZING = "initializing"
NORMAL = "normal"


@dataclass(frozen=True)
class SiteInfo:
    site_id: str
    url: str
    protection: str = "anonymous"
    kind: str = "mockwiki"

    def page_prefix(self) -> str:
        return f"{self.url.rstrip('/')}/site/{self.site_id}/"

    def hints(self) -> dict:
        return {"base_url": self.url, "protection": self.protection, "kind": self.kind}

    def to_dict(self) -> dict:
        return {"site_id": self.site_id, "url": self.url, "protection": self.protection, "kind": self.kind}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SiteInfo":
        return cls(d["site_id"], d["url"], d.get("protection", "anonymous"), d.get("kind", "mockwiki"))


@dataclass
class ReplicaRecord:
    replica_id: str
    subpiece: SubPieceRef
    ordinal: int
    site_id: str
    location: str
    key: str
    checksum: str
    start_marker: str
    end_marker: str
    status: ReplicaStatus
    created_at: float
    last_checked: float | None = None
    reported_by: str = ""

    @property
    def live(self) -> bool:
        return self.status.live

    def set_status(self, new: ReplicaStatus, when: float) -> bool:
        self.last_checked = when
        if not record_transition_allowed(self.status, new):
            return False
        self.status = new
        return True

    def descriptor(self) -> dict:
        """What a peer needs to fetch this replica."""
        return {
            "location": self.location,
            "key": self.key,
            "checksum": self.checksum,
            "start_marker": self.start_marker,
            "end_marker": self.end_marker,
            "subpiece": {"piece": self.subpiece.piece_index, "index": self.subpiece.subpiece_index},
        }

    def to_dict(self) -> dict:
        return {
            "replica_id": self.replica_id,
            "piece": self.subpiece.piece_index,
            "index": self.subpiece.subpiece_index,
            "length": self.subpiece.length,
            "ordinal": self.ordinal,
            "site_id": self.site_id,
            "location": self.location,
            "key": self.key,
            "checksum": self.checksum,
            "start_marker": self.start_marker,
            "end_marker": self.end_marker,
            "status": self.status.value,
            "created_at": self.created_at,
            "last_checked": self.last_checked,
            "reported_by": self.reported_by,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ReplicaRecord":
        return cls(
            replica_id=d["replica_id"],
            subpiece=SubPieceRef(d["piece"], d["index"], d["length"], d["checksum"]),
            ordinal=d["ordinal"],
            site_id=d["site_id"],
            location=d["location"],
            key=d["key"],
            checksum=d["checksum"],
            start_marker=d["start_marker"],
            end_marker=d["end_marker"],
            status=ReplicaStatus(d["status"]),
            created_at=d["created_at"],
            last_checked=d.get("last_checked"),
            reported_by=d.get("reported_by", ""),
        )


@dataclass
class RequestPair:
    pair_id: str
    download: ReplicaRecord
    upload_subpiece: SubPieceRef
    upload_ordinal: int
    upload_target: str
    issued_at: float
    phase: str

    @property
    def download_ordinal(self) -> int:
        return self.download.ordinal


@dataclass
class ActivePieceSet:
    peer_id: str
    capacity: int
    pairs: dict[str, RequestPair] = field(default_factory=dict)

    @property
    def headroom(self) -> int:
        return self.capacity - len(self.pairs)

    def add(self, pair: RequestPair) -> None:
        if len(self.pairs) >= self.capacity:
            raise OverflowError("active piece set is full")
        self.pairs[pair.pair_id] = pair

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class InitialPieceSet:
    window_start: float
    window_length: float
    ordinals: tuple[int, ...]

    def contains(self, t: float) -> bool:
        return self.window_start <= t < self.window_start + self.window_length

    def to_dict(self) -> dict:
        return {"window_start": self.window_start, "window_length": self.window_length,
                "ordinals": list(self.ordinals)}


@dataclass
class PeerSession:
    peer_id: str
    phase: str
    ips: InitialPieceSet
    aps: ActivePieceSet
    have: set[int] = field(default_factory=set)
    downloaded: set[int] = field(default_factory=set)
    normal_downloaded: set[int] = field(default_factory=set)
    ips_progress: dict[int, int] = field(default_factory=dict)
    excluded_sites: set[str] = field(default_factory=set)
    grants: int = 0
    reports: int = 0
    started_at: float = 0.0

    @property
    def ips_complete(self) -> bool:
        return all(n >= IPS_REPLICAS for n in self.ips_progress.values())


@dataclass
class ScheduleResult:
    pairs: list[RequestPair]
    starved: list[int] = field(default_factory=list)
    throttled: bool = False
    exhausted: bool = False


@dataclass
class ReportResult:
    accepted: bool
    record: ReplicaRecord
    next_pair: RequestPair | None
    phase: str
    starved: list[int] = field(default_factory=list)


class Tracker:
    def __init__(
        self,
        manifest: FilesetManifest,
        sites: Iterable[SiteInfo] = (),
        *,
        aps_capacity: int = 4,
        ips_window: float = 24 * HOUR,
        verify_prob: float = 0.2,
        seed: int = 0,
        clock=None,
        proxy: Fetch | None = None,
        site_reuse: bool = False,
        pairs_per_hour: float = DEFAULT_PAIRS_PER_HOUR,
        ban_threshold: int = 3,
        pair_expiry: float = HOUR,
        on_change: Callable[["Tracker"], None] | None = None,
    ):
        if aps_capacity < 1:
            raise ValueError("APS capacity must be positive")
        if not 0.0 <= verify_prob <= 1.0:
            raise ValueError("verification probability must lie in [0, 1]")
        self.manifest = manifest
        self.layout = manifest.subpiece_layout()
        self.sites: dict[str, SiteInfo] = {s.site_id: s for s in sites}
        self.aps_capacity = aps_capacity
        self.ips_window = float(ips_window)
        self.verify_prob = verify_prob
        self.seed = seed
        self.rng = random.Random(seed)
        self.clock = clock or SimClock(step=1.0)
        self.proxy = proxy
        self.site_reuse = site_reuse
        self.pairs_per_hour = pairs_per_hour
        self.ban_threshold = ban_threshold
        self.pair_expiry = pair_expiry
        self.on_change = on_change

        self.subpiece_checksums: dict[int, str] = {}
        self.replicas: dict[str, ReplicaRecord] = {}
        self.sessions: dict[str, PeerSession] = {}
        self.buckets: dict[str, TokenBucket] = {}
        self.strikes: dict[str, int] = {}
        self.banned: set[str] = set()
        self.blocked_sites: set[str] = set()
        self.used_sites: set[str] = set()
        self.recheck: set[str] = set()
        self.ips_history: list[InitialPieceSet] = []
        self.events: list[dict] = []
        self._next_replica = 1
        self._next_pair = 1
        self._lock = threading.RLock()

    # views ------------------------------------------------------------------

    @property
    def info_hash(self) -> str:
        return self.manifest.info_hash

    @property
    def ips(self) -> InitialPieceSet | None:
        return self.ips_history[-1] if self.ips_history else None

    def live_replicas(self, ordinal: int) -> list[ReplicaRecord]:
        return [r for r in self.replicas.values() if r.ordinal == ordinal and r.live]

    def live_counts(self) -> dict[int, int]:
        counts = {self.manifest.ordinal(r): 0 for r in self.layout}
        for r in self.replicas.values():
            if r.live:
                counts[r.ordinal] += 1
        return counts

    def outstanding_pairs(self) -> list[RequestPair]:
        return [p for s in self.sessions.values() for p in s.aps.pairs.values()]

    def upload_view(self) -> dict[int, int]:
        """Replica counts the scheduler ranks uploads by: live plus already-assigned uploads."""
        counts = self.live_counts()
        for p in self.outstanding_pairs():
            counts[p.upload_ordinal] += 1
        return counts

    def _ref(self, ordinal: int) -> SubPieceRef:
        ref = self.manifest.ref_for_ordinal(ordinal)
        return SubPieceRef(ref.piece_index, ref.subpiece_index, ref.length, self.subpiece_checksums.get(ordinal))

    def _event(self, kind: str, **kw) -> None:
        self.events.append({"t": self.clock.now(), "kind": kind, **kw})

    def _changed(self) -> None:
        if self.on_change is not None:
            self.on_change(self)

    # seeding ----------------------------------------------------------------

    def add_replica(
        self,
        ordinal: int,
        site_id: str,
        location: str,
        key: str,
        checksum: str,
        start_marker: str,
        end_marker: str,
        status: ReplicaStatus = ReplicaStatus.AVAILABLE,
        reported_by: str = "seed",
    ) -> ReplicaRecord:
        """Register a replica placed outside the request-pair protocol (initial seeding)."""
        with self._lock:
            known = self.subpiece_checksums.get(ordinal)
            if known is not None and known != checksum:
                raise ValueError(f"checksum for sub-piece {ordinal} conflicts with tracked value")
            if any(r.location == location and r.live for r in self.replicas.values()):
                raise DuplicateLocationError(location)
            self.subpiece_checksums[ordinal] = checksum
            rec = self._new_record(ordinal, site_id, location, key, checksum, start_marker,
                                   end_marker, status, reported_by, self.clock.now())
            self._changed()
            return rec

    def _new_record(self, ordinal, site_id, location, key, checksum, start, end, status, by, now):
        rid = f"r{self._next_replica:06d}"
        self._next_replica += 1
        rec = ReplicaRecord(rid, self._ref(ordinal), ordinal, site_id, location, key, checksum,
                            start, end, ReplicaStatus(status), now, None, by)
        if status == ReplicaStatus.AVAILABLE:
            rec.last_checked = now
        self.replicas[rid] = rec
        self.used_sites.add(site_id)
        return rec

    # initial piece set ------------------------------------------------------

    def _draw_ips(self, window_start: float) -> InitialPieceSet:
        counts = self.live_counts()
        eligible = sorted(o for o, n in counts.items() if n > 0)
        size = min(self.aps_capacity, len(eligible))
        chosen = tuple(sorted(self.rng.sample(eligible, size)))
        return InitialPieceSet(window_start, self.ips_window, chosen)

    def rotate_ips(self, now: float | None = None) -> InitialPieceSet:
        """Current IPS, redrawn if ``now`` has passed the end of its window."""
        with self._lock:
            now = self.clock.now() if now is None else now
            current = self.ips
            if current is None:
                self.ips_history.append(self._draw_ips(now))
            elif now >= current.window_start + current.window_length:
                elapsed = int((now - current.window_start) // current.window_length)
                start = current.window_start + elapsed * current.window_length
                self.ips_history.append(self._draw_ips(start))
                self._event("ips_rotated", ordinals=list(self.ips.ordinals))
            return self.ips

    # throttling -------------------------------------------------------------

    def _bucket(self, peer_id: str) -> TokenBucket:
        if peer_id not in self.buckets:
            self.buckets[peer_id] = TokenBucket(self.pairs_per_hour, self.pairs_per_hour / HOUR)
        return self.buckets[peer_id]

    def throttle(self, peer_id: str, now: float | None = None) -> bool:
        """Spend one pair token for ``peer_id``; False means refused."""
        now = self.clock.now() if now is None else now
        return self._bucket(peer_id).consume(now)

    # housekeeping -----------------------------------------------------------

    def _strike(self, peer_id: str, why: str) -> None:
        self.strikes[peer_id] = self.strikes.get(peer_id, 0) + 1
        self._event("strike", peer=peer_id, reason=why, strikes=self.strikes[peer_id])
        if self.strikes[peer_id] >= self.ban_threshold:
            self.banned.add(peer_id)
            self._drop_session(peer_id, "banned")

    def _drop_session(self, peer_id: str, why: str) -> None:
        session = self.sessions.pop(peer_id, None)
        if session is not None:
            for pid in list(session.aps.pairs):
                self._event("pair_expired", peer=peer_id, pair=pid, reason=why)
            session.aps.pairs.clear()

    def expire(self, now: float) -> list[str]:
        """Drop sessions holding a pair older than the expiry horizon."""
        dropped = []
        for peer_id, session in list(self.sessions.items()):
            if any(now - p.issued_at >= self.pair_expiry for p in session.aps.pairs.values()):
                self._drop_session(peer_id, "expired")
                dropped.append(peer_id)
        return dropped

    def _begin(self) -> float:
        now = self.clock.tick()
        self.expire(now)
        self.rotate_ips(now)
        return now

    def _check_banned(self, peer_id: str) -> None:
        if peer_id in self.banned:
            raise BannedError(f"peer {peer_id} is banned")

    def _check_peer(self, peer_id: str) -> PeerSession:
        if peer_id in self.banned:
            raise BannedError(f"peer {peer_id} is banned")
        session = self.sessions.get(peer_id)
        if session is None:
            raise UnknownPeerError(f"peer {peer_id} has no session; announce first")
        return session

    # pair construction ------------------------------------------------------

    def _eligible_targets(self, ordinal: int, exclude: Iterable[str] = ()) -> list[str]:
        reserved = {p.upload_target for p in self.outstanding_pairs()}
        hosting = {r.site_id for r in self.replicas.values() if r.ordinal == ordinal and r.live}
        out = []
        for sid, site in self.sites.items():
            if site.protection not in WRITABLE_PROTECTIONS or sid in self.blocked_sites:
                continue
            if sid in reserved or sid in hosting or sid in exclude:
                continue
            if not self.site_reuse and sid in self.used_sites:
                continue
            out.append(sid)
        return sorted(out)

    def _make_pair(self, session: PeerSession, download_ordinal: int, upload_ordinal: int, now: float) -> RequestPair | None:
        sources = sorted(self.live_replicas(download_ordinal), key=lambda r: r.replica_id)
        targets = self._eligible_targets(upload_ordinal, session.excluded_sites)
        if not sources or not targets:
            return None
        pair = RequestPair(
            pair_id=f"p{self._next_pair:06d}",
            download=self.rng.choice(sources),
            upload_subpiece=self._ref(upload_ordinal),
            upload_ordinal=upload_ordinal,
            upload_target=self.rng.choice(targets),
            issued_at=now,
            phase=session.phase,
        )
        self._next_pair += 1
        session.aps.add(pair)
        session.grants += 1
        return pair

    def _fill_ips(self, session: PeerSession, limit: int, now: float) -> ScheduleResult:
        out = ScheduleResult([])
        pending: dict[int, int] = {}
        for p in session.aps.pairs.values():
            pending[p.upload_ordinal] = pending.get(p.upload_ordinal, 0) + 1
        for o in session.ips.ordinals:
            while len(out.pairs) < limit and session.aps.headroom > 0 \
                    and session.ips_progress[o] + pending.get(o, 0) < IPS_REPLICAS:
                pair = self._make_pair(session, o, o, now)
                if pair is None:
                    if not self.live_replicas(o):
                        out.starved.append(o)
                    else:
                        out.exhausted = True
                    break
                pending[o] = pending.get(o, 0) + 1
                out.pairs.append(pair)
        return out

    def schedule_pairs(self, session: PeerSession, k: int, now: float | None = None) -> ScheduleResult:
        """Issue up to ``k`` normal-phase pairs, rarest sub-pieces first.

        The download is the rarest sub-piece the peer still lacks; the upload
        obligation is the rarest sub-piece the peer has already downloaded,
        falling back to the pair's own download when it has none. Ties go to
        the lowest ordinal.
        """
        now = self.clock.now() if now is None else now
        out = ScheduleResult([])
        k = min(k, session.aps.headroom)
        for _ in range(k):
            counts = self.live_counts()
            in_flight = {p.download_ordinal for p in session.aps.pairs.values()}
            lacking = [o for o in counts
                       if o not in session.have and o not in session.normal_downloaded and o not in in_flight]
            candidates = [o for o in lacking if counts[o] > 0]
            out.starved = sorted(o for o in lacking if counts[o] == 0)
            if not candidates:
                break
            if not self._bucket(session.peer_id).peek(now):
                out.throttled = True
                break
            down = min(candidates, key=lambda o: (counts[o], o))
            view = self.upload_view()
            held = session.downloaded | session.have
            up = min(held, key=lambda o: (view[o], o)) if held else down
            pair = self._make_pair(session, down, up, now)
            if pair is None:
                out.exhausted = True
                break
            self.throttle(session.peer_id, now)
            out.pairs.append(pair)
        return out

    def _fill(self, session: PeerSession, limit: int, now: float) -> ScheduleResult:
        limit = min(limit, session.aps.headroom)
        if limit <= 0:
            return ScheduleResult([])
        if session.phase == INITIALIZING:
            return self._fill_ips(session, limit, now)
        return self.schedule_pairs(session, limit, now)

    # protocol commands ------------------------------------------------------

    def announce(self, peer_id: str, info_hash: str, have_pieces: bytes = b"") -> tuple[str, list[RequestPair]]:
        """Start a fresh session in the initialization phase and fill its APS."""
        with self._lock:
            if info_hash != self.info_hash:
                raise NotTrackedError(f"info hash {info_hash} is not tracked here")
            if peer_id in self.banned:
                raise BannedError(f"peer {peer_id} is banned")
            now = self._begin()
            self._drop_session(peer_id, "re-announced")
            pieces = decode_bitfield(have_pieces, self.manifest.num_pieces)
            session = PeerSession(
                peer_id=peer_id,
                phase=INITIALIZING,
                ips=self.ips,
                aps=ActivePieceSet(peer_id, self.aps_capacity),
                have={self.manifest.ordinal(r) for r in self.layout if r.piece_index in pieces},
                ips_progress={o: 0 for o in self.ips.ordinals},
                started_at=now,
            )
            if session.ips_complete:
                session.phase = NORMAL
            self.sessions[peer_id] = session
            result = self._fill(session, self.aps_capacity, now)
            self._event("announce", peer=peer_id, issued=[p.pair_id for p in result.pairs])
            self._changed()
            return session.phase, result.pairs

    def request_pairs(self, peer_id: str, info_hash: str | None = None) -> tuple[str, ScheduleResult]:
        """Top the peer's APS back up to capacity (empty result when it is full)."""
        with self._lock:
            if info_hash is not None and info_hash != self.info_hash:
                raise NotTrackedError(f"info hash {info_hash} is not tracked here")
            self._check_peer(peer_id)
            now = self._begin()
            session = self._check_peer(peer_id)
            result = self._fill(session, session.aps.headroom, now)
            if result.pairs:
                self._changed()
            return session.phase, result

    def report_replica(
        self,
        peer_id: str,
        pair_id: str,
        location: str,
        key: str,
        checksum: str,
        start_marker: str,
        end_marker: str,
    ) -> ReportResult:
        with self._lock:
            self._check_banned(peer_id)
            now = self._begin()
            session = self.sessions.get(peer_id)
            if session is None or pair_id not in session.aps.pairs:
                raise StalePairError(f"pair {pair_id} is not outstanding for {peer_id}")
            pair = session.aps.pairs[pair_id]
            site = self.sites.get(pair.upload_target)

            problem = None
            if checksum != self.subpiece_checksums.get(pair.upload_ordinal, checksum):
                problem = "checksum does not match the assigned sub-piece"
            elif len(start_marker) != MARKER_LEN or len(end_marker) != MARKER_LEN:
                problem = "markers must be 16 characters"
            elif site is not None and not location.startswith(site.page_prefix()):
                problem = "replica is not on the assigned storage site"
            else:
                try:
                    bytes.fromhex(key)
                except ValueError:
                    problem = "key is not hex"
            if problem:
                self._strike(peer_id, problem)
                self._changed()
                raise VerificationFailedError(problem)
            if any(r.location == location and r.live for r in self.replicas.values()):
                raise DuplicateLocationError(f"{location} already holds a live replica")

            status = ReplicaStatus.UNVERIFIED
            sampled = self.rng.random() < self.verify_prob
            if sampled and self.proxy is not None:
                try:
                    outcome, _ = probe(self.proxy, location, key, checksum, start_marker, end_marker)
                except ProxyUnavailableError:
                    outcome = None
                if outcome is None:
                    self.recheck.add(location)
                elif classify_probe(outcome) == ReplicaStatus.AVAILABLE:
                    status = ReplicaStatus.AVAILABLE
                else:
                    self._strike(peer_id, "sampled verification failed")
                    self._changed()
                    raise VerificationFailedError(f"replica at {location} did not verify")

            rec = self._new_record(pair.upload_ordinal, pair.upload_target, location, key, checksum,
                                   start_marker, end_marker, status, peer_id, now)
            self.subpiece_checksums.setdefault(pair.upload_ordinal, checksum)
            del session.aps.pairs[pair_id]
            session.reports += 1
            session.downloaded.add(pair.download_ordinal)
            if pair.phase == NORMAL:
                session.normal_downloaded.add(pair.download_ordinal)
            if session.phase == INITIALIZING and pair.upload_ordinal in session.ips_progress:
                session.ips_progress[pair.upload_ordinal] += 1
                if session.ips_complete:
                    session.phase = NORMAL
                    self._event("phase", peer=peer_id, phase=NORMAL)
            self._event("report", peer=peer_id, pair=pair_id, replica=rec.replica_id, status=status.value)
            result = self._fill(session, 1, now)
            self._changed()
            nxt = result.pairs[0] if result.pairs else None
            return ReportResult(True, rec, nxt, session.phase, result.starved)

    def release_pair(self, peer_id: str, pair_id: str) -> RequestPair | None:
        """The peer could not fetch a pair's download.

        The tracker re-checks the source through its proxy. A dead source is
        marked and the pair is re-pointed at another live replica (or voided
        when none is left); a source that checks out is a false claim.
        """
        with self._lock:
            self._check_banned(peer_id)
            now = self._begin()
            session = self.sessions.get(peer_id)
            if session is None or pair_id not in session.aps.pairs:
                raise StalePairError(f"pair {pair_id} is not outstanding for {peer_id}")
            pair = session.aps.pairs[pair_id]
            if self.proxy is None:
                raise ProxyUnavailableError("no verification proxy configured")
            status = self.verify_replica(pair.download, self.proxy, now)
            if status.live:
                self._strike(peer_id, "false download failure claim")
                self._changed()
                raise FalseClaimError(f"replica {pair.download.replica_id} is available")
            sources = sorted(self.live_replicas(pair.download_ordinal), key=lambda r: r.replica_id)
            if sources:
                pair.download = self.rng.choice(sources)
                self._changed()
                return pair
            del session.aps.pairs[pair_id]
            session.grants -= 1
            self._event("pair_voided", peer=peer_id, pair=pair_id)
            self._changed()
            return None

    def retarget(self, peer_id: str, pair_id: str, reason: str = "") -> RequestPair:
        """Give a pair a new upload site after the assigned one refused the write.

        The refusing site is excluded for this peer's session only; one
        peer's claim never takes a site away from the others.
        """
        with self._lock:
            self._check_banned(peer_id)
            self._begin()
            session = self.sessions.get(peer_id)
            if session is None or pair_id not in session.aps.pairs:
                raise StalePairError(f"pair {pair_id} is not outstanding for {peer_id}")
            pair = session.aps.pairs[pair_id]
            session.excluded_sites.add(pair.upload_target)
            self._event("site_refused", peer=peer_id, site=pair.upload_target, reason=reason)
            targets = self._eligible_targets(pair.upload_ordinal, session.excluded_sites)
            if not targets:
                self._changed()
                raise TargetExhaustedError("no storage site left for this sub-piece")
            pair.upload_target = self.rng.choice(targets)
            self._changed()
            return pair

    def block_site(self, site_id: str) -> None:
        """Operator action: stop assigning uploads to ``site_id``."""
        with self._lock:
            self.blocked_sites.add(site_id)
            self._changed()

    # verification -----------------------------------------------------------

    def verify_replica(self, record: ReplicaRecord, proxy: Fetch | None = None, now: float | None = None) -> ReplicaStatus:
        """Fetch a replica through the proxy and update its status.

        If the proxy itself is unreachable the status is left unchanged and
        the replica is queued for a later check.
        """
        with self._lock:
            proxy = proxy or self.proxy
            now = self.clock.now() if now is None else now
            try:
                outcome, _ = probe(proxy, record.location, record.key, record.checksum,
                                   record.start_marker, record.end_marker)
            except ProxyUnavailableError:
                self.recheck.add(record.location)
                return record.status
            self.recheck.discard(record.location)
            new = classify_probe(outcome)
            if record.set_status(new, now) and new != ReplicaStatus.AVAILABLE:
                self._event("replica_failed", replica=record.replica_id, status=new.value)
            return record.status

    def verify_pending(self, proxy: Fetch | None = None) -> dict[str, str]:
        with self._lock:
            out = {}
            for rec in sorted(self.replicas.values(), key=lambda r: r.replica_id):
                if rec.location in self.recheck:
                    out[rec.replica_id] = self.verify_replica(rec, proxy).value
            return out

    # reporting and persistence ---------------------------------------------

    def status(self) -> dict:
        with self._lock:
            ips = self.ips
            return {
                "fileset": {"name": self.manifest.name, "info_hash": self.info_hash,
                            "subpieces": len(self.layout)},
                "replica_counts": {str(o): n for o, n in sorted(self.live_counts().items())},
                "peers": {pid: {"phase": s.phase, "aps": len(s.aps), "grants": s.grants, "reports": s.reports}
                          for pid, s in sorted(self.sessions.items())},
                "ips_window": ips.to_dict() if ips else None,
                "now": self.clock.now(),
            }

    def snapshot(self) -> dict:
        with self._lock:
            state = self.rng.getstate()
            return {
                "version": SNAPSHOT_VERSION,
                "info_hash": self.info_hash,
                "manifest": self.manifest.to_dict(),
                "config": {
                    "aps_capacity": self.aps_capacity, "ips_window": self.ips_window,
                    "verify_prob": self.verify_prob, "seed": self.seed, "site_reuse": self.site_reuse,
                    "pairs_per_hour": self.pairs_per_hour, "ban_threshold": self.ban_threshold,
                    "pair_expiry": self.pair_expiry,
                },
                "clock": self.clock.now(),
                "sites": [s.to_dict() for s in sorted(self.sites.values(), key=lambda s: s.site_id)],
                "subpiece_checksums": {str(o): c for o, c in sorted(self.subpiece_checksums.items())},
                "replicas": [r.to_dict() for r in sorted(self.replicas.values(), key=lambda r: r.replica_id)],
                "ips_history": [i.to_dict() for i in self.ips_history],
                "strikes": dict(sorted(self.strikes.items())),
                "banned": sorted(self.banned),
                "blocked_sites": sorted(self.blocked_sites),
                "used_sites": sorted(self.used_sites),
                "counters": {"replica": self._next_replica, "pair": self._next_pair},
                "rng_state": [state[0], list(state[1]), state[2]],
            }

    @classmethod
    def from_snapshot(cls, snap: Mapping, **overrides) -> "Tracker":
        """Rebuild a tracker. Peer sessions are not persisted; peers re-announce."""
        if snap.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {snap.get('version')}")
        manifest = FilesetManifest.from_dict(snap["manifest"])
        config = {**snap["config"], **overrides}
        clock = config.pop("clock", None) or SimClock(start=snap["clock"], step=1.0)
        t = cls(manifest, [SiteInfo.from_dict(s) for s in snap["sites"]], clock=clock, **config)
        t.subpiece_checksums = {int(o): c for o, c in snap["subpiece_checksums"].items()}
        for d in snap["replicas"]:
            rec = ReplicaRecord.from_dict(d)
            t.replicas[rec.replica_id] = rec
        t.ips_history = [InitialPieceSet(i["window_start"], i["window_length"], tuple(i["ordinals"]))
                         for i in snap["ips_history"]]
        t.strikes = dict(snap["strikes"])
        t.banned = set(snap["banned"])
        t.blocked_sites = set(snap["blocked_sites"])
        t.used_sites = set(snap["used_sites"])
        t._next_replica = snap["counters"]["replica"]
        t._next_pair = snap["counters"]["pair"]
        if "seed" not in overrides:
            v, internal, gauss = snap["rng_state"]
            t.rng.setstate((v, tuple(internal), gauss))
        return t
