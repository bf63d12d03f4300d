"""Daily replica-survival simulation.

Every replica is written on day 0, one page per writable site (or more with
``replicas_per_site``). Each simulated day first decides site deaths, then
page removals and owner edits on the surviving sites, then probes every
replica and records its status.

Two engines are provided. The internal engine is vectorised with numpy and
draws the same random numbers every day regardless of state, so for a fixed
seed raising any hazard can only make each replica fail earlier. The
integration engine writes real pages to a :class:`SiteHost`, lets
``SiteHost.moderate`` act on them and classifies each replica with the same
probe the tracker uses.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .. import codec
from ..client.puzzle import solve_arithmetic_puzzle
from ..clock import DAY, DEFAULT_EPOCH, SimClock
from ..sitehost.model import (
    DOMAIN_CLASSES,
    RECENT_WINDOW_DAYS,
    WRITABLE,
    PageNotFound,
    SiteHost,
    SiteUnreachable,
    create_population,
)
from ..status import (
    CONTENT,
    MISSING,
    UNREACHABLE,
    FetchOutcome,
    ReplicaStatus,
    classify_probe,
    probe,
    probe_transition_allowed,
)
from .hazard import HazardModel, phase_of

STATUSES = ("available", "removed", "changed", "not_found")
AVAILABLE, REMOVED, CHANGED, NOT_FOUND = range(4)
_INDEX = {s: i for i, s in enumerate(STATUSES)}


@dataclass(frozen=True)
class PopulationSpec:
    counts: Mapping[str, int]
    domain_mix: Mapping[str, float] | None = None
    replicas_per_site: int = 1

    @classmethod
    def from_dict(cls, d: Mapping) -> "PopulationSpec":
        return cls(dict(d["counts"]), d.get("domain_mix"), int(d.get("replicas_per_site", 1)))

    def to_dict(self) -> dict:
        return {"counts": dict(self.counts), "domain_mix": self.domain_mix,
                "replicas_per_site": self.replicas_per_site}

    def sites(self, seed: int):
        return [s for s in create_population(self.counts, seed, self.domain_mix, now=DEFAULT_EPOCH)
                if s.protection in WRITABLE]


@dataclass
class AvailabilityTimeline:
    """Per-day status counts, in total and broken down by site class.

    Rows are days 1..N; columns follow ``STATUSES``. Seed-averaged timelines
    hold float counts.
    """

    counts: np.ndarray
    by_protection: dict[str, np.ndarray]
    by_domain: dict[str, np.ndarray]
    total: int
    seeds: tuple[int, ...] = ()
    params: dict = field(default_factory=dict)

    @property
    def days(self) -> np.ndarray:
        return np.arange(1, len(self.counts) + 1)

    def column(self, status: str, group: np.ndarray | None = None) -> np.ndarray:
        arr = self.counts if group is None else group
        return arr[:, _INDEX[status]]

    def fraction(self, status: str, cls: str | None = None) -> np.ndarray:
        arr = self.counts if cls is None else self.by_protection[cls]
        n = arr[0].sum()
        return arr[:, _INDEX[status]] / n if n else np.zeros(len(arr))

    def available_fraction(self, cls: str | None = None) -> np.ndarray:
        return self.fraction("available", cls)

    def missing_fraction(self, cls: str | None = None) -> np.ndarray:
        return 1.0 - self.available_fraction(cls)

    def at(self, day: int) -> dict[str, float]:
        row = self.counts[day - 1]
        return {s: float(row[i]) for i, s in enumerate(STATUSES)}

    @classmethod
    def mean(cls, timelines: Sequence["AvailabilityTimeline"]) -> "AvailabilityTimeline":
        if not timelines:
            raise ValueError("no timelines to average")
        first = timelines[0]
        return cls(
            counts=np.mean([t.counts for t in timelines], axis=0),
            by_protection={k: np.mean([t.by_protection[k] for t in timelines], axis=0) for k in first.by_protection},
            by_domain={k: np.mean([t.by_domain[k] for t in timelines], axis=0) for k in first.by_domain},
            total=first.total,
            seeds=tuple(s for t in timelines for s in t.seeds),
            params=first.params,
        )


def _tally(status: np.ndarray, groups: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.bincount(status[mask], minlength=4) for k, mask in groups.items()}


class _Recorder:
    def __init__(self, days: int, protections: np.ndarray, domains: np.ndarray):
        self.counts = np.zeros((days, 4), dtype=np.int64)
        self.prot_masks = {c: protections == c for c in sorted(set(protections.tolist()))}
        self.dom_masks = {d: domains == d for d in DOMAIN_CLASSES if (domains == d).any()}
        self.by_prot = {c: np.zeros((days, 4), dtype=np.int64) for c in self.prot_masks}
        self.by_dom = {d: np.zeros((days, 4), dtype=np.int64) for d in self.dom_masks}

    def record(self, day: int, status: np.ndarray) -> None:
        self.counts[day - 1] = np.bincount(status, minlength=4)
        for c, row in _tally(status, self.prot_masks).items():
            self.by_prot[c][day - 1] = row
        for d, row in _tally(status, self.dom_masks).items():
            self.by_dom[d][day - 1] = row

    def timeline(self, seed: int, params: dict) -> AvailabilityTimeline:
        return AvailabilityTimeline(self.counts, self.by_prot, self.by_dom, int(self.counts[0].sum()),
                                    (seed,), params)


def _page_arrays(spec: PopulationSpec, seed: int):
    sites = spec.sites(seed)
    k = spec.replicas_per_site
    protections = np.repeat(np.array([s.protection for s in sites], dtype=object), k)
    domains = np.repeat(np.array([s.domain_class for s in sites], dtype=object), k)
    return sites, protections, domains


def run_sim(
    spec: PopulationSpec | Mapping,
    hazard: HazardModel,
    days: int,
    seed: int = 0,
    mode: str = "internal",
) -> AvailabilityTimeline:
    if days < 1:
        raise ValueError("days must be at least 1")
    if not isinstance(spec, PopulationSpec):
        spec = PopulationSpec.from_dict(spec)
    if mode == "internal":
        return _run_internal(spec, hazard, days, seed)
    if mode == "integration":
        return _run_integration(spec, hazard, days, seed)
    raise ValueError(f"unknown mode {mode!r}")


def _run_internal(spec: PopulationSpec, hazard: HazardModel, days: int, seed: int) -> AvailabilityTimeline:
    sites, protections, domains = _page_arrays(spec, seed)
    k = spec.replicas_per_site
    n_sites, n = len(sites), len(protections)
    rng = np.random.default_rng(seed)
    rec = _Recorder(days, protections, domains)

    # per-page base hazard for each phase, domain multipliers folded in
    dom_mult = np.array([hazard.domain_multipliers.get(d, 1.0) for d in domains], dtype=float)
    base = {ph: np.array([hazard._base(p, day) for p in protections], dtype=float) * dom_mult
            for ph, day in (("early", 1), ("mid", 8), ("late", 101))}
    window = sites[0].recent_changes_window_days if sites else RECENT_WINDOW_DAYS

    status = np.zeros(n, dtype=np.int64)
    present = np.ones(n, dtype=bool)
    last_edit = np.zeros(n)  # day offset of each page's latest revision
    alive = np.ones(n_sites, dtype=bool)

    for day in range(1, days + 1):
        u_death = rng.random(n_sites)
        u = rng.random((n_sites, k, 3)).reshape(n, 3)
        offset = day - 1

        dying = alive & (u_death < hazard.death_prob("", day))
        alive &= ~dying
        dead_pages = np.repeat(dying, k)
        status[dead_pages & ((status == AVAILABLE) | (status == REMOVED))] = NOT_FOUND

        active = np.repeat(alive, k) & present
        visible = (offset - last_edit) < window
        h = base[phase_of(day)]
        h = np.minimum(1.0, np.where(visible, h * hazard.recent_multiplier, h))
        removed = active & (u[:, 0] < h)
        present &= ~removed
        status[removed & (status == AVAILABLE)] = REMOVED
        mutated = active & ~removed & (u[:, 1] < hazard.mutation_prob("", day))
        status[mutated & (status == AVAILABLE)] = CHANGED
        last_edit[mutated] = offset

        rec.record(day, status)
    return rec.timeline(seed, {"mode": "internal", "days": days, **spec.to_dict()})


def _run_integration(spec: PopulationSpec, hazard: HazardModel, days: int, seed: int) -> AvailabilityTimeline:
    sites = spec.sites(seed)
    clock = SimClock(start=DEFAULT_EPOCH)
    host = SiteHost(sites, clock=clock, seed=seed)
    rng = random.Random(seed)

    replicas = []  # (site_id, title, key, checksum, start, end)
    for site in sites:
        token = host.register(site.site_id, "sim") if site.protection == "registration" else None
        for j in range(spec.replicas_per_site):
            data = rng.randbytes(32)
            key = codec.generate_key(rng)
            payload = codec.encode_payload(data, key)
            page = codec.wrap_page(payload, "simulated replica")
            answer = pid = None
            if site.protection == "puzzle":
                pid, question = host.challenge(site.site_id)
                answer = solve_arithmetic_puzzle(question)
            title = f"Replica{j}"
            host.edit_page(site.site_id, title, page, token=token, puzzle_id=pid, puzzle_answer=answer)
            replicas.append((site.site_id, title, key.hex(), payload.plaintext_checksum,
                             payload.start_marker, payload.end_marker))

    protections = np.array([host.site(r[0]).protection for r in replicas], dtype=object)
    domains = np.array([host.site(r[0]).domain_class for r in replicas], dtype=object)
    rec = _Recorder(days, protections, domains)
    current = [ReplicaStatus.AVAILABLE] * len(replicas)

    def fetch(location: str) -> FetchOutcome:
        site_id, title = location.split("/", 1)
        try:
            return FetchOutcome(CONTENT, host.get_page(site_id, title))
        except SiteUnreachable:
            return FetchOutcome(UNREACHABLE)
        except PageNotFound:
            return FetchOutcome(MISSING)

    order = sorted(s.site_id for s in sites)
    for day in range(1, days + 1):
        now = DEFAULT_EPOCH + (day - 1) * DAY
        clock.set(now)
        for site_id in order:
            host.moderate(site_id, now, rng, hazard)
        for i, (site_id, title, key, checksum, start, end) in enumerate(replicas):
            outcome, _ = probe(fetch, f"{site_id}/{title}", key, checksum, start, end)
            new = classify_probe(outcome)
            if probe_transition_allowed(current[i], new):
                current[i] = new
        rec.record(day, np.array([_INDEX[s.value] for s in current], dtype=np.int64))
    return rec.timeline(seed, {"mode": "integration", "days": days, **spec.to_dict()})


def run_many(spec, hazard: HazardModel, days: int, seeds: Sequence[int], mode: str = "internal") -> AvailabilityTimeline:
    """Seed-averaged timeline (a single seed gives that run's integer counts)."""
    seeds = list(seeds)
    if len(seeds) == 1:
        return run_sim(spec, hazard, days, seeds[0], mode)
    return AvailabilityTimeline.mean([run_sim(spec, hazard, days, s, mode) for s in seeds])


def expected_timeline(spec: PopulationSpec | Mapping, hazard: HazardModel, days: int, seed: int = 0) -> AvailabilityTimeline:
    """Exact expected counts for the internal engine, computed class by class.

    ``seed`` only fixes the population's domain assignment.
    """
    if not isinstance(spec, PopulationSpec):
        spec = PopulationSpec.from_dict(spec)
    _, protections, domains = _page_arrays(spec, seed)
    window = RECENT_WINDOW_DAYS
    groups: dict[tuple[str, str], int] = {}
    for p, d in zip(protections.tolist(), domains.tolist()):
        groups[(p, d)] = groups.get((p, d), 0) + 1

    counts = np.zeros((days, 4))
    by_prot = {c: np.zeros((days, 4)) for c in sorted(set(protections.tolist()))}
    by_dom = {d: np.zeros((days, 4)) for d in DOMAIN_CLASSES if d in set(domains.tolist())}
    for (p, d), n in sorted(groups.items()):
        site_alive, avail, removed_cond, changed = 1.0, 1.0, 0.0, 0.0
        for day in range(1, days + 1):
            site_alive *= 1.0 - hazard.death_prob(p, day, d)
            # an available page has never been edited, so it is visible exactly in the first window
            r = hazard.removal_prob(p, day, (day - 1) < window, d)
            m = hazard.mutation_prob(p, day)
            changed += site_alive * avail * (1.0 - r) * m
            removed_cond += avail * r
            avail *= (1.0 - r) * (1.0 - m)
            row = n * np.array([site_alive * avail, site_alive * removed_cond, changed, 0.0])
            row[NOT_FOUND] = n - row[:3].sum()
            counts[day - 1] += row
            by_prot[p][day - 1] += row
            by_dom[d][day - 1] += row
    return AvailabilityTimeline(counts, by_prot, by_dom, len(protections), (),
                                {"mode": "expected", "days": days, **spec.to_dict()})
