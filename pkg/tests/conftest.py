import random
from dataclasses import dataclass

import pytest

from graffiti.client import MockWikiAdapter, TrackerClient, produce_replica
from graffiti.fileset import FilesetManifest, build_manifest, split
from graffiti.sitehost import DESK_COUNTS, SiteHost
from graffiti.sitehost import build_router as site_router
from graffiti.tracker import SiteInfo, Tracker
from graffiti.tracker import build_router as tracker_router
from graffiti.tracker.seeding import seed_fileset
from graffiti.transport import RouterTransport, page_fetcher

SITES_URL = "http://sites.test"
TRACKER_URL = "http://tracker.test"


@dataclass
class Network:
    host: SiteHost
    tracker: Tracker
    transport: RouterTransport
    manifest: FilesetManifest
    data: bytes

    def adapter(self, **kw) -> MockWikiAdapter:
        kw.setdefault("backoff", 0.0)
        return MockWikiAdapter(self.transport, **kw)

    def client(self) -> TrackerClient:
        return TrackerClient(TRACKER_URL, self.transport)

    def block(self, ordinal: int) -> bytes:
        return {self.manifest.ordinal(ref): b for ref, b in split(self.data, self.manifest)}[ordinal]

    def honest_report(self, peer_id: str, pair, rng=None):
        """Do what an honest peer does for ``pair`` and report it."""
        site = self.tracker.sites[pair.upload_target]
        rep = produce_replica(self.block(pair.upload_ordinal), site.site_id, site.hints(), self.adapter(),
                              rng or random.Random(0))
        return self.tracker.report_replica(peer_id, pair.pair_id, rep.location, rep.key, rep.checksum,
                                           rep.start_marker, rep.end_marker)


def make_network(
    size: int = 1572864,
    counts=None,
    site_seed: int = 7,
    tracker_seed: int = 3,
    seed_copies: int = 1,
    seeded: bool = True,
    data_seed: int = 1,
    piece: int = 524288,
    subpiece: int = 65536,
    **tracker_kw,
) -> Network:
    host = SiteHost.with_population(DESK_COUNTS if counts is None else counts, seed=site_seed)
    transport = RouterTransport()
    transport.mount(SITES_URL, site_router(host))
    data = random.Random(data_seed).randbytes(size)
    manifest = build_manifest([("file.bin", data)], piece, subpiece, tracker_url=TRACKER_URL)
    sites = [SiteInfo(s.site_id, SITES_URL, s.protection) for s in host.sites.values()]
    tracker = Tracker(manifest, sites, proxy=page_fetcher(transport), seed=tracker_seed, **tracker_kw)
    if seeded:
        seed_fileset(tracker, data, MockWikiAdapter(transport, backoff=0.0), random.Random(5), copies=seed_copies)
    transport.mount(TRACKER_URL, tracker_router(tracker))
    return Network(host, tracker, transport, manifest, data)


@pytest.fixture
def network():
    return make_network()


@pytest.fixture
def small_network():
    # 4 sub-pieces of 4 KiB in 2 pieces: fast protocol tests
    return make_network(size=16384, piece=8192, subpiece=4096)


def pytest_terminal_summary(terminalreporter):
    import sys

    acceptance = sys.modules.get("test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance.RESULTS:
            terminalreporter.write_line(line)
