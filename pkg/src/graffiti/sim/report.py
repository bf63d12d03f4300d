"""CSV and text renderings of an availability timeline."""

from __future__ import annotations

import csv
import io

import numpy as np

from .engine import STATUSES, AvailabilityTimeline

MILESTONE_DAYS = (7, 42, 100, 120, 324)
# expected timelines sum class curves over domain groups; equal curves can
# then differ in the last bits
_FLOAT_NOISE = 1e-9


def check_crossover(
    timeline: AvailabilityTimeline,
    first: str = "anonymous",
    second: str = "registration",
    margin: float = 0.0,
) -> int | None:
    """First day on which ``first`` has lost more of its replicas than ``second``.

    ``margin`` demands the lead exceed that many fraction points, which
    keeps sampling noise in a single run from registering as a crossover.
    """
    gap = timeline.missing_fraction(first) - timeline.missing_fraction(second)
    hits = np.nonzero(gap > margin + _FLOAT_NOISE)[0]
    return int(hits[0]) + 1 if len(hits) else None


def _fmt(x) -> str:
    if isinstance(x, (np.integer, int)):
        return str(int(x))
    return f"{float(x):.6f}"


def to_csv(timeline: AvailabilityTimeline) -> str:
    groups = [(f"{c}_", timeline.by_protection[c]) for c in sorted(timeline.by_protection)]
    groups += [(f"domain_{d}_", timeline.by_domain[d]) for d in timeline.by_domain]
    header = ["day", *STATUSES] + [prefix + s for prefix, _ in groups for s in STATUSES]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i, day in enumerate(timeline.days):
        row = [str(day)] + [_fmt(v) for v in timeline.counts[i]]
        for _, arr in groups:
            row += [_fmt(v) for v in arr[i]]
        w.writerow(row)
    return buf.getvalue()


def summary(timeline: AvailabilityTimeline, crossover_margin: float = 0.0) -> str:
    n = timeline.total
    lines = [
        f"replicas: {n}",
        f"days: {len(timeline.counts)}",
        f"seeds: {len(timeline.seeds) or 'expected value'}",
        "",
        f"{'day':>5} {'available':>10} {'missing':>8} {'removed':>8} {'changed':>8} {'not_found':>9}"
        + "".join(f" {c[:12] + ' miss':>17}" for c in sorted(timeline.by_protection)),
    ]
    for day in MILESTONE_DAYS:
        if day > len(timeline.counts):
            continue
        row = timeline.at(day)
        pct = {k: 100.0 * v / n for k, v in row.items()}
        line = (f"{day:>5} {pct['available']:>9.1f}% {100 - pct['available']:>7.1f}% {pct['removed']:>7.1f}%"
                f" {pct['changed']:>7.1f}% {pct['not_found']:>8.1f}%")
        for c in sorted(timeline.by_protection):
            line += f" {100 * timeline.missing_fraction(c)[day - 1]:>16.1f}%"
        lines.append(line)
    if {"anonymous", "registration"} <= set(timeline.by_protection):
        day = check_crossover(timeline, margin=crossover_margin)
        lines += ["", f"crossover (anonymous missing > registration missing): {day if day else 'none'}"]
    return "\n".join(lines) + "\n"
