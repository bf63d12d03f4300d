"""Fit hazard parameters to availability milestones by grid search.

The search runs on the exact expected timeline, so it needs no random
numbers. Five quantities are fitted: the early removal hazard of anonymous
sites, how much faster registration sites remove in the first week (kept
above 1), the anonymous mid-phase hazard, the anonymous/registration
mid-phase ratio, and the slope of the site-death ramp. The remaining shape
is fixed up front: late-phase removal runs at ``LATE_TAPER`` of the
mid-phase rate and puzzle sites share the registration hazards.

Each round evaluates a full grid and then narrows every axis around the
best point.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from ..sitehost.model import EXPERIMENT_COUNTS
from .hazard import EARLY_END, MID_END, HazardModel

DEFAULT_TARGETS = {
    "missing_day7": 0.20,
    "missing_day42": 0.30,
    "available_day324": 0.40,
    "crossover_day": 120,
}
LATE_TAPER = 0.2
RECENT_MULTIPLIER = 3.0
CROSSOVER_SCALE = 300.0  # 30 days off weighs as much as 10 points off

# (low, high) start ranges for: anon early, registration/anon early ratio,
# anon mid, anon/registration mid ratio, death slope
START_RANGES = ((0.005, 0.05), (1.0, 3.0), (0.001, 0.01), (1.0, 2.5), (0.0, 2e-5))
FLOORS = (1e-6, 1.0, 1e-6, 1.0, 0.0)


@dataclass(frozen=True)
class Fit:
    hazard: HazardModel
    loss: float
    milestones: dict


def build(early: float, early_ratio: float, mid: float, ratio: float, slope: float) -> HazardModel:
    """Assemble a model from the fitted quantities (early is the effective in-window rate)."""
    anon = {"early": early / RECENT_MULTIPLIER, "mid": mid, "late": mid * LATE_TAPER}
    reg_mid = mid / ratio
    reg = {"early": min(1.0, early * early_ratio) / RECENT_MULTIPLIER, "mid": reg_mid, "late": reg_mid * LATE_TAPER}
    return HazardModel(removal={"anonymous": anon, "registration": reg},
                       recent_multiplier=RECENT_MULTIPLIER, death_start=MID_END, death_slope=slope)


def _class_curves(h: HazardModel, days: int) -> dict[str, np.ndarray]:
    """Expected available fraction per class (no mutation, no domain multipliers)."""
    d = np.arange(1, days + 1)
    death = np.minimum(h.death_max, np.clip(h.death_slope * (d - h.death_start), 0.0, None))
    site = np.cumprod(1.0 - death)
    out = {}
    for cls in ("anonymous", "registration"):
        p = h.removal[cls]
        r = np.where(d <= EARLY_END, p["early"] * h.recent_multiplier, np.where(d <= MID_END, p["mid"], p["late"]))
        out[cls] = site * np.cumprod(1.0 - np.minimum(1.0, r))
    return out


def milestones(h: HazardModel, weights: Mapping[str, float], days: int = 324) -> dict:
    curves = _class_curves(h, days)
    w_anon = weights["anonymous"]
    w_reg = weights["registration"] + weights.get("puzzle", 0.0)
    total = w_anon + w_reg
    avail = (w_anon * curves["anonymous"] + w_reg * curves["registration"]) / total
    gap = curves["registration"] - curves["anonymous"]  # = anon missing - reg missing
    above = np.nonzero(gap > 0)[0]
    return {
        "missing_day7": float(1 - avail[6]),
        "missing_day42": float(1 - avail[41]),
        "available_day324": float(avail[min(days, 324) - 1]),
        "crossover_day": int(above[0] + 1) if len(above) else None,
    }


def loss(m: Mapping, targets: Mapping) -> float:
    err = sum((m[k] - targets[k]) ** 2 for k in ("missing_day7", "missing_day42", "available_day324"))
    if m["crossover_day"] is None:
        return err + 1.0
    return err + ((m["crossover_day"] - targets["crossover_day"]) / CROSSOVER_SCALE) ** 2


def calibrate(
    targets: Mapping | None = None,
    weights: Mapping[str, float] | None = None,
    points: int = 5,
    rounds: int = 10,
    shrink: float = 0.4,
) -> Fit:
    targets = {**DEFAULT_TARGETS, **(targets or {})}
    weights = dict(EXPERIMENT_COUNTS if weights is None else weights)
    ranges = [list(r) for r in START_RANGES]
    best = None
    for _ in range(rounds):
        axes = [np.linspace(lo, hi, points) for lo, hi in ranges]
        for params in itertools.product(*axes):
            m = milestones(build(*params), weights)
            value = loss(m, targets)
            if best is None or value < best[0]:
                best = (value, params, m)
        _, centre, _ = best
        new = []
        for (lo, hi), c, floor in zip(ranges, centre, FLOORS):
            half = (hi - lo) * shrink / 2
            new.append([max(floor, c - half), c + half])
        ranges = new
    value, params, m = best
    h = build(*params)
    meta = {
        "method": "grid search on expected timeline",
        "points_per_axis": points, "rounds": rounds, "shrink": shrink,
        "targets": targets, "weights": weights, "loss": value, "fitted_milestones": m,
        "fixed": {"late_taper": LATE_TAPER, "recent_multiplier": RECENT_MULTIPLIER},
        "acceptance_tolerances": {"missing_day7": 0.03, "missing_day42": 0.04, "available_day324": 0.05,
                                  "crossover_day": 30},
    }
    return Fit(HazardModel.from_dict({**h.to_dict(), "meta": meta}), value, m)


def load_targets(path: str | Path) -> dict:
    return {**DEFAULT_TARGETS, **json.loads(Path(path).read_text("utf-8"))}
