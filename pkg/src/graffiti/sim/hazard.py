"""Piecewise-constant daily hazards for replica removal and site death.

Removal hazards are set per protection class for three phases: early
(days 1-7), mid (8-100) and late (after 100). A page whose latest revision
is still inside the recent-changes window has its removal hazard multiplied
by ``recent_multiplier``. Site death is zero until ``death_start`` and then
rises linearly by ``death_slope`` per day up to ``death_max``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

from .. import canonical

EARLY_END = 7
MID_END = 100
PHASES = ("early", "mid", "late")
# puzzle sites are scored with the registration hazards
CLASS_ALIASES = {"puzzle": "registration"}


def phase_of(day: int) -> str:
    if day <= EARLY_END:
        return "early"
    return "mid" if day <= MID_END else "late"


@dataclass(frozen=True)
class HazardModel:
    removal: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    recent_multiplier: float = 1.0
    death_start: int = MID_END
    death_slope: float = 0.0
    death_max: float = 1.0
    mutation: float = 0.0
    domain_multipliers: Mapping[str, float] = field(default_factory=dict)
    # calibration provenance, carried along but unused by the model itself
    meta: Mapping[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for cls, phases in self.removal.items():
            for ph, h in phases.items():
                if ph not in PHASES:
                    raise ValueError(f"unknown phase {ph!r} for class {cls!r}")
                if not 0.0 <= h <= 1.0:
                    raise ValueError(f"hazard {cls}/{ph}={h} outside [0, 1]")
        for name in ("death_slope", "death_max", "mutation"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} outside [0, 1]")
        if self.recent_multiplier < 0 or any(m < 0 for m in self.domain_multipliers.values()):
            raise ValueError("multipliers must be non-negative")

    # scalar interface used by SiteHost.moderate --------------------------------

    def _base(self, protection: str, day: int) -> float:
        phases = self.removal.get(protection) or self.removal.get(CLASS_ALIASES.get(protection, ""), {})
        return phases.get(phase_of(day), 0.0)

    def removal_prob(self, protection: str, day: int, visible: bool, domain_class: str = "com") -> float:
        h = self._base(protection, day) * self.domain_multipliers.get(domain_class, 1.0)
        if visible:
            h *= self.recent_multiplier
        return min(1.0, h)

    def death_prob(self, protection: str = "", day: int = 0, domain_class: str = "com") -> float:
        if day <= self.death_start:
            return 0.0
        return min(self.death_max, self.death_slope * (day - self.death_start))

    def mutation_prob(self, protection: str = "", day: int = 0) -> float:
        return self.mutation

    # construction and persistence -------------------------------------------

    @classmethod
    def constant(cls, h: float, classes=("anonymous", "registration", "puzzle")) -> "HazardModel":
        """The same removal hazard every day for every class; no site death."""
        return cls(removal={c: {ph: h for ph in PHASES} for c in classes})

    @classmethod
    def zero(cls) -> "HazardModel":
        return cls()

    def scaled(self, factor: float) -> "HazardModel":
        return replace(self, removal={c: {ph: min(1.0, h * factor) for ph, h in phases.items()}
                                      for c, phases in self.removal.items()})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["removal"] = {c: dict(p) for c, p in self.removal.items()}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "HazardModel":
        return cls(
            removal={c: {ph: float(h) for ph, h in p.items()} for c, p in d.get("removal", {}).items()},
            recent_multiplier=float(d.get("recent_multiplier", 1.0)),
            death_start=int(d.get("death_start", MID_END)),
            death_slope=float(d.get("death_slope", 0.0)),
            death_max=float(d.get("death_max", 1.0)),
            mutation=float(d.get("mutation", 0.0)),
            domain_multipliers={k: float(v) for k, v in d.get("domain_multipliers", {}).items()},
            meta=dict(d.get("meta", {})),
        )

    def save(self, path: str | Path) -> None:
        canonical.write_atomic(path, canonical.dump_bytes(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "HazardModel":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))


def calibrated() -> HazardModel:
    """The committed calibration artifact."""
    text = resources.files("graffiti").joinpath("data/calibrated_hazards.json").read_text("utf-8")
    return HazardModel.from_dict(json.loads(text))
