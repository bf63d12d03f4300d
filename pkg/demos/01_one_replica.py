"""One sub-piece, one wiki page, and back again.

Run: python demos/01_one_replica.py

Encrypts a 64 KiB block, writes it into a page on an in-process mock wiki,
reads the page back and pulls the block out by its markers. Then the page
is vandalised and the checksum catches it.
"""

import random

from graffiti.client import MockWikiAdapter, fetch_subpiece, produce_replica
from graffiti.sitehost import SiteHost, build_router
from graffiti.transport import RouterTransport

rng = random.Random(7)
block = rng.randbytes(64 * 1024)

host = SiteHost.with_population({"anonymous": 1}, seed=7)
transport = RouterTransport()
transport.mount("http://sites.local", build_router(host))
adapter = MockWikiAdapter(transport, backoff=0.0)
(site_id,) = host.sites
hints = {"base_url": "http://sites.local", "protection": "anonymous", "kind": "mockwiki"}

rep = produce_replica(block, site_id, hints, adapter, rng)
page = host.get_page(site_id, rep.title)
print(f"page {rep.title!r} on {site_id}: {len(page)} characters")
print(f"  key      {rep.key}")
print(f"  markers  {rep.start_marker} ... {rep.end_marker}")
print(f"  checksum {rep.checksum[:16]}...")

outcome, data = fetch_subpiece(rep.wire(), adapter)
print(f"fetch: {outcome.kind}, identical={data == block}")

# someone edits the page; a single changed character is enough
host.mutate_page(site_id, rep.title, random.Random(1))
outcome, data = fetch_subpiece(rep.wire(), adapter)
print(f"after an edit: {outcome.kind}, data={data}")

host.delete_page(site_id, rep.title)
outcome, _ = fetch_subpiece(rep.wire(), adapter)
print(f"after deletion: {outcome.kind}")
