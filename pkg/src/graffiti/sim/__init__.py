"""Replica churn simulation, calibration and the daily probe tool."""

from .calibrate import DEFAULT_TARGETS, calibrate
from .engine import STATUSES, AvailabilityTimeline, PopulationSpec, expected_timeline, run_many, run_sim
from .hazard import HazardModel, calibrated
from .probe import classify_probe, probe_tracker, rows_to_csv
from .report import MILESTONE_DAYS, check_crossover, summary, to_csv

__all__ = [
    "DEFAULT_TARGETS", "MILESTONE_DAYS", "STATUSES", "AvailabilityTimeline", "HazardModel", "PopulationSpec",
    "calibrate", "calibrated", "check_crossover", "classify_probe", "expected_timeline", "probe_tracker",
    "rows_to_csv", "run_many", "run_sim", "summary", "to_csv",
]
