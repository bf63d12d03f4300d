"""Peer client: site adapters, replica production and the download session."""

from .adapters import MockWikiAdapter, TitleTaken
from .agent import (
    DEFAULT_NOTICE,
    Limits,
    ProducedReplica,
    SessionReport,
    TrackerClient,
    fetch_subpiece,
    have_bitfield,
    produce_replica,
    run_session,
)
from .puzzle import solve_arithmetic_puzzle

__all__ = [
    "DEFAULT_NOTICE", "Limits", "MockWikiAdapter", "ProducedReplica", "SessionReport", "TitleTaken",
    "TrackerClient", "fetch_subpiece", "have_bitfield", "produce_replica", "run_session", "solve_arithmetic_puzzle",
]
