"""Randomized tracker command sequences with an outside-in ledger.

The fuzzer plays several peers against one tracker and keeps its own
account of what each peer was handed and what the tracker accepted, so the
checked bounds do not rest on the tracker's internal counters.
"""

import functools
import random
from dataclasses import dataclass, field

from graffiti.client import produce_replica
from graffiti.clock import HOUR
from graffiti.errors import TrackerError
from graffiti.fileset import encode_bitfield, split
from graffiti.tracker import Tracker

from conftest import make_network

HONEST, LIAR, SILENT = "honest", "liar", "silent"


@functools.lru_cache(maxsize=None)
def base():
    # 36 sub-pieces of 1 KiB in 9 pieces
    net = make_network(size=36 * 1024, piece=4096, subpiece=1024)
    blocks = {net.manifest.ordinal(ref): b for ref, b in split(net.data, net.manifest)}
    return net, net.tracker.snapshot(), blocks


@dataclass
class PeerLedger:
    kind: str
    issued: set = field(default_factory=set)
    voided: set = field(default_factory=set)
    accepted: int = 0
    # ordinals handed out, keyed by the IPS window they were handed out in
    by_window: dict = field(default_factory=dict)


@dataclass
class FuzzResult:
    seed: int
    events: int
    violations: list
    ledgers: dict
    tracker: Tracker


def run_sequence(seed: int, events: int = 80, peers: int = 3, ledger_cap: int | None = None,
                 **overrides) -> FuzzResult:
    """Play one sequence. ``ledger_cap`` lets a test check the checker against a mismatched tracker."""
    net, snap, blocks = base()
    rng = random.Random(seed)
    config = {"seed": seed, "ips_window": HOUR, "site_reuse": True, **overrides}
    tracker = Tracker.from_snapshot(snap, **config)
    tracker.proxy = net.tracker.proxy
    adapter = net.adapter()
    cap = tracker.aps_capacity if ledger_cap is None else ledger_cap
    kinds = [rng.choice((HONEST, LIAR, SILENT)) for _ in range(peers)]
    kinds[rng.randrange(peers)] = SILENT  # at least one free rider per sequence
    ledgers = {f"peer{i}": PeerLedger(k) for i, k in enumerate(kinds)}
    outstanding = {pid: {} for pid in ledgers}
    violations = []
    fake = 0

    def take(pid, pairs):
        led = ledgers[pid]
        window = tracker.ips.window_start
        for p in pairs:
            if p is None:
                continue
            outstanding[pid][p.pair_id] = p
            led.issued.add(p.pair_id)
            led.by_window.setdefault(window, set()).add(p.download_ordinal)

    def check(step):
        for pid, led in ledgers.items():
            got = len(led.issued) - len(led.voided)
            if got > led.accepted + cap:
                violations.append((step, pid, f"issued {got} > accepted {led.accepted} + {cap}"))
            if led.kind == SILENT:
                for window, ords in led.by_window.items():
                    if len(ords) > cap:
                        violations.append((step, pid, f"silent peer saw {len(ords)} sub-pieces in window {window}"))
        for s in tracker.sessions.values():
            if len(s.aps) > cap:
                violations.append((step, s.peer_id, "APS over capacity"))

    for step in range(events):
        pid = rng.choice(sorted(ledgers))
        led = ledgers[pid]
        roll = rng.random()
        try:
            if roll < 0.06 or pid not in tracker.sessions:
                have = {p for p in range(tracker.manifest.num_pieces) if rng.random() < 0.3}
                _, pairs = tracker.announce(pid, tracker.info_hash, encode_bitfield(have, tracker.manifest.num_pieces))
                # a fresh session: the old pairs are gone and the count restarts
                ledgers[pid] = led = PeerLedger(led.kind, by_window=led.by_window)
                outstanding[pid] = {}
                take(pid, pairs)
            elif roll < 0.2:
                _, res = tracker.request_pairs(pid)
                take(pid, res.pairs)
            elif roll < 0.85 and outstanding[pid] and led.kind != SILENT:
                pair = outstanding[pid][rng.choice(sorted(outstanding[pid]))]
                site = tracker.sites[pair.upload_target]
                if led.kind == HONEST:
                    rep = produce_replica(blocks[pair.upload_ordinal], site.site_id, site.hints(), adapter, rng)
                    args = (rep.location, rep.key, rep.checksum, rep.start_marker, rep.end_marker)
                else:
                    fake += 1
                    args = (f"{site.page_prefix()}wiki/Fake{seed}_{fake}", "00" * 16,
                            tracker.subpiece_checksums[pair.upload_ordinal], "A" * 16, "B" * 16)
                res = tracker.report_replica(pid, pair.pair_id, *args)
                del outstanding[pid][pair.pair_id]
                led.accepted += 1
                take(pid, [res.next_pair])
            elif roll < 0.88 and outstanding[pid]:
                pair_id = rng.choice(sorted(outstanding[pid]))
                if tracker.release_pair(pid, pair_id) is None:
                    led.voided.add(pair_id)
                    outstanding[pid].pop(pair_id)
            else:
                tracker.clock.advance(rng.choice((60.0, 300.0, 600.0, 1800.0, 2 * HOUR)))
        except TrackerError:
            # refusals are part of the game; the ledger only moves on success
            pass
        check(step)

    return FuzzResult(seed, events, violations, ledgers, tracker)
