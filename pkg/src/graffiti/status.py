"""Replica status taxonomy and probe classification."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

from . import codec
from .errors import PayloadError


class ReplicaStatus(str, Enum):
    AVAILABLE = "available"
    REMOVED = "removed"
    CHANGED = "changed"
    NOT_FOUND = "not_found"
    UNVERIFIED = "unverified"

    def __str__(self) -> str:
        return self.value

    @property
    def live(self) -> bool:
        return self in (ReplicaStatus.AVAILABLE, ReplicaStatus.UNVERIFIED)


FAILURE_STATUSES = (ReplicaStatus.REMOVED, ReplicaStatus.CHANGED, ReplicaStatus.NOT_FOUND)

# Tracker records: once a replica fails it stays failed.
_RECORD_TRANSITIONS = {
    ReplicaStatus.UNVERIFIED: {ReplicaStatus.AVAILABLE, *FAILURE_STATUSES},
    ReplicaStatus.AVAILABLE: set(FAILURE_STATUSES),
}
# Daily probe view: a removed page also turns not_found when its site dies.
_PROBE_TRANSITIONS = {
    ReplicaStatus.AVAILABLE: set(FAILURE_STATUSES),
    ReplicaStatus.REMOVED: {ReplicaStatus.NOT_FOUND},
}


def record_transition_allowed(old: ReplicaStatus, new: ReplicaStatus) -> bool:
    return old == new or new in _RECORD_TRANSITIONS.get(old, ())


def probe_transition_allowed(old: ReplicaStatus, new: ReplicaStatus) -> bool:
    return old == new or new in _PROBE_TRANSITIONS.get(old, ())


CONTENT = "content"
MISSING = "http-404-with-live-site"
MISMATCH = "checksum-mismatch"
UNREACHABLE = "unreachable"
OUTCOME_KINDS = (CONTENT, MISSING, MISMATCH, UNREACHABLE)


@dataclass(frozen=True)
class FetchOutcome:
    kind: str
    text: str = ""

    def __post_init__(self):
        if self.kind not in OUTCOME_KINDS:
            raise ValueError(f"unknown fetch outcome {self.kind!r}")


Fetch = Callable[[str], FetchOutcome]

_CLASSIFY = {
    CONTENT: ReplicaStatus.AVAILABLE,
    MISSING: ReplicaStatus.REMOVED,
    MISMATCH: ReplicaStatus.CHANGED,
    UNREACHABLE: ReplicaStatus.NOT_FOUND,
}


def classify_probe(outcome: FetchOutcome | str) -> ReplicaStatus:
    kind = outcome.kind if isinstance(outcome, FetchOutcome) else outcome
    try:
        return _CLASSIFY[kind]
    except KeyError:
        raise ValueError(f"unknown fetch outcome {kind!r}") from None


def probe(fetch: Fetch, location: str, key: str | codec.ReplicaKey, checksum: str,
          start_marker: str, end_marker: str) -> tuple[FetchOutcome, bytes | None]:
    """Fetch a replica and check it end to end.

    A page that is served but whose payload cannot be recovered against the
    checksum is reported as ``checksum-mismatch``.
    """
    raw = fetch(location)
    if raw.kind != CONTENT:
        return raw, None
    if isinstance(key, str):
        key = codec.ReplicaKey.from_hex(key)
    try:
        data = codec.recover(raw.text, key, checksum, start_marker, end_marker)
    except PayloadError:
        return FetchOutcome(MISMATCH, raw.text), None
    return raw, data
