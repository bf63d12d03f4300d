"""A small swarm: every download is paid for with a new replica.

Run: python demos/02_swarm.py

Two hundred mock sites, a tracker seeded with one replica per sub-piece of a
1.5 MiB fileset, then three peers joining one after another. Each peer
leaves 32 new replicas behind, so the fileset gets harder to kill the more
it is downloaded. A fourth peer refuses to upload and never gets past the
initial piece set.
"""

import random

from graffiti.client import Limits, MockWikiAdapter, TrackerClient, run_session
from graffiti.errors import UploadRefusedError
from graffiti.fileset import build_manifest
from graffiti.sitehost import SiteHost
from graffiti.sitehost import build_router as site_router
from graffiti.tracker import SiteInfo, Tracker
from graffiti.tracker import build_router as tracker_router
from graffiti.tracker.seeding import seed_fileset
from graffiti.transport import RouterTransport, page_fetcher

SITES, TRACKER = "http://sites.local", "http://tracker.local"

host = SiteHost.with_population({"anonymous": 130, "registration": 55, "puzzle": 15}, seed=7)
net = RouterTransport()
net.mount(SITES, site_router(host))

data = random.Random(1).randbytes(3 * 512 * 1024)
manifest = build_manifest([("talk.mp4", data)], 512 * 1024, 64 * 1024, tracker_url=TRACKER)
sites = [SiteInfo(s.site_id, SITES, s.protection) for s in host.sites.values()]
tracker = Tracker(manifest, sites, proxy=page_fetcher(net), seed=3)
seed_fileset(tracker, data, MockWikiAdapter(net, backoff=0.0), random.Random(5))
net.mount(TRACKER, tracker_router(tracker))
print(f"seeded {len(tracker.replicas)} replicas of {manifest.num_subpieces} sub-pieces on {len(sites)} sites")

limits = Limits(backoff=0.0)
for seed in (1, 2, 3):
    got, report = run_session(manifest, TrackerClient(TRACKER, net), [MockWikiAdapter(net, backoff=0.0)],
                              limits, seed=seed)
    counts = tracker.live_counts()
    print(f"peer-{seed}: intact={got == data}, produced {report.replicas_produced} "
          f"{report.to_dict()['replicas_by_phase']}; tracker now holds {len(tracker.replicas)} replicas, "
          f"rarest sub-piece has {min(counts.values())}")

# a peer that never uploads can hold at most the initial piece set
try:
    run_session(manifest, TrackerClient(TRACKER, net), [MockWikiAdapter(net, backoff=0.0, writable=False)],
                limits, seed=99)
except UploadRefusedError as exc:
    print(f"free rider: stopped with {len(exc.blocks)} of {manifest.num_subpieces} sub-pieces ({exc.reason})")
