"""Initial placement of a fileset's first replicas.

A fresh tracker knows no replicas, so nobody could ever download anything.
The publisher writes one replica per sub-piece itself and registers each one
directly, outside the request-pair protocol.
"""

from __future__ import annotations

import random

from ..client.agent import DEFAULT_NOTICE, produce_replica
from ..errors import TargetExhaustedError, UploadFailedError, UploadRefusedError
from ..fileset import split
from .core import ReplicaRecord, Tracker


def seed_fileset(
    tracker: Tracker,
    data: bytes,
    adapter,
    rng: random.Random,
    copies: int = 1,
    notice: str = DEFAULT_NOTICE,
    tracking_url: str = "",
) -> list[ReplicaRecord]:
    """Write ``copies`` replicas of every sub-piece and register them as available.

    Sites that refuse the write are skipped for the rest of the run.
    """
    refused: set[str] = set()
    placed = []
    for ref, block in split(data, tracker.manifest):
        ordinal = tracker.manifest.ordinal(ref)
        for _ in range(copies):
            while True:
                with tracker._lock:
                    targets = [s for s in tracker._eligible_targets(ordinal) if s not in refused]
                if not targets:
                    raise TargetExhaustedError(f"no site left for sub-piece {ordinal}")
                site = tracker.sites[rng.choice(targets)]
                try:
                    rep = produce_replica(block, site.site_id, site.hints(), adapter, rng, notice, tracking_url)
                except (UploadRefusedError, UploadFailedError):
                    refused.add(site.site_id)
                    continue
                break
            placed.append(tracker.add_replica(ordinal, site.site_id, rep.location, rep.key, rep.checksum,
                                              rep.start_marker, rep.end_marker))
    return placed
