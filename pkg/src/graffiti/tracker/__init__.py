"""Replica tracker: request pairs, initial piece sets, verification."""

from .core import (
    INITIALIZING,
    IPS_REPLICAS,
    NORMAL,
    ActivePieceSet,
    InitialPieceSet,
    PeerSession,
    ReplicaRecord,
    ReportResult,
    RequestPair,
    ScheduleResult,
    SiteInfo,
    Tracker,
)
from .server import HttpProxy, build_router, pair_to_wire, snapshot_writer
from .throttle import TokenBucket

__all__ = [
    "INITIALIZING", "IPS_REPLICAS", "NORMAL", "ActivePieceSet", "HttpProxy", "InitialPieceSet",
    "PeerSession", "ReplicaRecord", "ReportResult", "RequestPair", "ScheduleResult", "SiteInfo",
    "TokenBucket", "Tracker", "build_router", "pair_to_wire", "snapshot_writer",
]
