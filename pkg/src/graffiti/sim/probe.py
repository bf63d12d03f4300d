"""Daily probe tool: fetch every replica a tracker knows about and classify it."""

from __future__ import annotations

import csv
import io
import json

from ..status import ReplicaStatus, classify_probe, probe, probe_transition_allowed
from ..transport import HttpTransport, page_fetcher

__all__ = ["classify_probe", "probe_tracker", "rows_to_csv"]

COLUMNS = ("replica_id", "ordinal", "site_id", "location", "recorded", "outcome", "status")


def probe_tracker(tracker_url: str, transport=None) -> list[dict]:
    """One probe pass over the tracker's replica table, in replica id order."""
    transport = transport or HttpTransport()
    status, text = transport.get(tracker_url.rstrip("/") + "/admin/replicas")
    if status != 200:
        raise RuntimeError(f"tracker replied HTTP {status}")
    fetch = page_fetcher(transport)
    rows = []
    for rec in sorted(json.loads(text)["replicas"], key=lambda r: r["replica_id"]):
        outcome, _ = probe(fetch, rec["location"], rec["key"], rec["checksum"],
                           rec["start_marker"], rec["end_marker"])
        observed = classify_probe(outcome)
        recorded = ReplicaStatus(rec["status"])
        # a replica the tracker already saw fail does not come back
        shown = observed if recorded.live or probe_transition_allowed(recorded, observed) else recorded
        rows.append({
            "replica_id": rec["replica_id"], "ordinal": rec["ordinal"], "site_id": rec["site_id"],
            "location": rec["location"], "recorded": recorded.value, "outcome": outcome.kind,
            "status": shown.value,
        })
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()

