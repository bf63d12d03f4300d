"""Command line entry point.

    graffiti manifest create FILE... --out M.graffiti.json
    graffiti sitehost serve --bind 127.0.0.1:8100 --seed 7
    graffiti tracker seed --manifest M --data FILE --sitehost URL --state S.json
    graffiti tracker serve --manifest M --bind 127.0.0.1:8000 --state S.json
    graffiti client run --manifest M --out DIR --report R.json
    graffiti sim run|calibrate|probe ...

Exit status is 0 on success, 1 on a domain error and 2 on a usage error.
Every random choice is drawn from ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from pathlib import Path

from . import __version__, canonical
from .errors import GraffitiError

log = logging.getLogger("graffiti")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps({"level": record.levelname, "logger": record.name, "message": record.getMessage()},
                          sort_keys=True)


def _setup_logging(args) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter() if args.log_json else logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.WARNING if args.quiet else logging.INFO)


def _say(args, text: str) -> None:
    """Human-facing progress line on stdout, silenced by --quiet."""
    if not args.quiet:
        print(text, flush=True)


def _write(path: str | None, data: bytes | str) -> None:
    if path is None:
        return
    canonical.write_atomic(path, data.encode("utf-8") if isinstance(data, str) else data)


def _counts(text: str) -> dict[str, int]:
    try:
        return {k: int(v) for k, v in (item.split("=", 1) for item in text.split(",") if item)}
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected class=count[,class=count...], got {text!r}") from None


def _serve_until_stopped(server, on_stop=None) -> None:
    stop = threading.Event()

    def handle(signum, frame):
        stop.set()

    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, handle)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        stop.wait()
    finally:
        server.shutdown()
        server.server_close()
        if on_stop is not None:
            on_stop()


# manifest -------------------------------------------------------------------

def cmd_manifest_create(args) -> int:
    from .fileset import build_manifest, read_files

    files = read_files(args.files)
    m = build_manifest(files, args.piece, args.subpiece, args.tracker, args.name)
    if args.out:
        m.save(args.out)
        _say(args, f"{args.out}: {m.num_pieces} pieces, {m.num_subpieces} sub-pieces, info_hash {m.info_hash}")
    else:
        sys.stdout.write(m.to_json().decode("utf-8") + "\n")
    return EXIT_OK


# sitehost -------------------------------------------------------------------

def cmd_sitehost_serve(args) -> int:
    from .httpjson import make_server, parse_bind
    from .sitehost import SiteHost, build_router

    counts = args.counts
    mix = None
    if args.population:
        spec = json.loads(Path(args.population).read_text("utf-8"))
        counts, mix = spec["counts"], spec.get("domain_mix")
    host = SiteHost.with_population(counts, seed=args.seed, domain_mix=mix,
                                    lockdown_after_days=args.lockdown_after_days)
    server = make_server(build_router(host), *parse_bind(args.bind))
    h, p = server.server_address[:2]
    log.info("sitehost: %d sites", len(host.sites))
    _say(args, f"listening on http://{h}:{p}")
    _serve_until_stopped(server)
    return EXIT_OK


# tracker --------------------------------------------------------------------

def _fetch_sites(sitehost_url: str, timeout: float):
    from .tracker import SiteInfo
    from .transport import HttpTransport

    status, text = HttpTransport(timeout).get(sitehost_url.rstrip("/") + "/admin/state")
    if status != 200:
        raise GraffitiError(f"site host replied HTTP {status}")
    return [SiteInfo(s["site_id"], sitehost_url.rstrip("/"), s["protection"]) for s in json.loads(text)["sites"]]


def _tracker_config(args) -> dict:
    from .clock import HOUR

    return {
        "aps_capacity": args.aps_capacity,
        "ips_window": args.ips_window * HOUR,
        "verify_prob": args.verify_prob,
        "seed": args.seed,
        "site_reuse": args.site_reuse,
        "pairs_per_hour": args.pairs_per_hour,
        "pair_expiry": args.pair_expiry * HOUR,
    }


def cmd_tracker_seed(args) -> int:
    import random

    from .client import MockWikiAdapter
    from .fileset import FilesetManifest, read_files
    from .tracker import Tracker, snapshot_writer
    from .tracker.seeding import seed_fileset
    from .transport import HttpTransport

    manifest = FilesetManifest.load(args.manifest)
    data = b"".join(content for _, content in read_files(args.data))
    tracker = Tracker(manifest, _fetch_sites(args.sitehost, args.timeout), **_tracker_config(args))
    adapter = MockWikiAdapter(HttpTransport(args.timeout), retries=3, backoff=0.2)
    placed = seed_fileset(tracker, data, adapter, random.Random(args.seed), copies=args.copies)
    snapshot_writer(args.state)(tracker)
    _say(args, f"{args.state}: {len(placed)} replicas placed")
    return EXIT_OK


def cmd_tracker_serve(args) -> int:
    from .fileset import FilesetManifest
    from .httpjson import make_server, parse_bind
    from .tracker import HttpProxy, Tracker, build_router, snapshot_writer

    manifest = FilesetManifest.load(args.manifest)
    config = _tracker_config(args)
    proxy = HttpProxy(args.timeout)
    state = Path(args.state) if args.state else None
    if state is not None and state.exists():
        snap = json.loads(state.read_text("utf-8"))
        if snap.get("info_hash") != manifest.info_hash:
            raise GraffitiError(f"{state} belongs to a different fileset")
        tracker = Tracker.from_snapshot(snap, **config)
        tracker.proxy = proxy
    else:
        sites = _fetch_sites(args.sitehost, args.timeout) if args.sitehost else []
        tracker = Tracker(manifest, sites, proxy=proxy, **config)
    if state is not None:
        tracker.on_change = snapshot_writer(state)
    server = make_server(build_router(tracker), *parse_bind(args.bind))
    h, p = server.server_address[:2]
    log.info("tracker: %d sites, %d replicas", len(tracker.sites), len(tracker.replicas))
    _say(args, f"listening on http://{h}:{p}")
    _serve_until_stopped(server, on_stop=(lambda: tracker.on_change(tracker)) if state else None)
    return EXIT_OK


# client ---------------------------------------------------------------------

def cmd_client_run(args) -> int:
    from .client import Limits, MockWikiAdapter, TrackerClient, run_session
    from .fileset import FilesetManifest, files_from_bytes
    from .transport import HttpTransport

    manifest = FilesetManifest.load(args.manifest)
    tracker_url = args.tracker or manifest.tracker_url
    if not tracker_url:
        raise UsageError("no tracker URL: pass --tracker or put one in the manifest")
    limits = Limits(max_parallel=args.limit_parallel, retries=args.retries, backoff=args.backoff,
                    timeout=args.timeout)
    transport = HttpTransport(args.timeout)
    adapters = []
    for name in args.adapters.split(","):
        if name != "mockwiki":
            raise UsageError(f"unknown adapter {name!r} (only 'mockwiki' is available)")
        adapters.append(MockWikiAdapter(transport, retries=args.retries, backoff=args.backoff))
    try:
        data, report = run_session(manifest, TrackerClient(tracker_url, transport), adapters, limits,
                                   args.seed, peer_id=args.peer_id)
    except GraffitiError as exc:
        if args.report and getattr(exc, "report", None) is not None:
            _write(args.report, canonical.dump_bytes(exc.report.to_dict()))
        raise
    if args.out:
        out = Path(args.out)
        for path, content in files_from_bytes(data, manifest):
            target = out / path
            target.parent.mkdir(parents=True, exist_ok=True)
            canonical.write_atomic(target, content)
    _write(args.report, canonical.dump_bytes(report.to_dict()))
    _say(args, f"complete: {report.replicas_produced} replicas produced, {report.downloads} downloads")
    return EXIT_OK


# sim ------------------------------------------------------------------------

def cmd_sim_run(args) -> int:
    from .sim import HazardModel, PopulationSpec, calibrated, run_many, summary, to_csv
    from .sitehost import EXPERIMENT_COUNTS

    spec = (PopulationSpec.from_dict(json.loads(Path(args.population).read_text("utf-8")))
            if args.population else PopulationSpec(EXPERIMENT_COUNTS))
    hazard = HazardModel.load(args.hazards) if args.hazards else calibrated()
    seeds = range(args.seed, args.seed + args.seeds)
    timeline = run_many(spec, hazard, args.days, seeds, args.mode)
    _write(args.csv, to_csv(timeline))
    text = summary(timeline)
    _write(args.summary, text)
    if not args.summary:
        _say(args, text.rstrip("\n"))
    return EXIT_OK


def cmd_sim_calibrate(args) -> int:
    from .sim.calibrate import calibrate, load_targets

    targets = load_targets(args.targets) if args.targets else None
    fit = calibrate(targets, points=args.points, rounds=args.rounds)
    fit.hazard.save(args.out)
    _say(args, f"{args.out}: loss {fit.loss:.3g}, milestones {json.dumps(fit.milestones, sort_keys=True)}")
    return EXIT_OK


def cmd_sim_probe(args) -> int:
    from .sim.probe import probe_tracker, rows_to_csv
    from .transport import HttpTransport

    rows = probe_tracker(args.tracker, HttpTransport(args.timeout))
    _write(args.csv, rows_to_csv(rows))
    counts: dict[str, int] = {}
    for r in rows:
        counts[r["status"]] = counts.get(r["status"], 0) + 1
    _say(args, f"probed {len(rows)} replicas: {json.dumps(counts, sort_keys=True)}")
    return EXIT_OK


# parser ---------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_flags(suppress: bool) -> argparse.ArgumentParser:
    # Leaf copies suppress their defaults so a flag given before the verb survives.
    def default(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=default(0), help="seed for every random choice (default 0)")
    common.add_argument("--log-json", action="store_true", default=default(False), help="log to stderr as JSON lines")
    common.add_argument("--quiet", action="store_true", default=default(False), help="only warnings and errors")
    common.add_argument("--config", default=default(None),
                        help="JSON file of flag values (keys are flag names with underscores)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags(suppress=True)
    parser = _Parser(prog="graffiti", description="Replica file sharing over mock wiki storage sites.",
                     parents=[_common_flags(suppress=False)])
    parser.add_argument("--version", action="version", version=f"graffiti {__version__}")
    verbs = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def group(name, help):
        p = verbs.add_parser(name, help=help, description=help)
        return p.add_subparsers(dest="action", required=True, parser_class=_Parser)

    def leaf(sub, name, fn, help):
        p = sub.add_parser(name, help=help, description=help, parents=[common])
        p.set_defaults(func=fn)
        return p

    # manifest
    m = group("manifest", "fileset manifests")
    p = leaf(m, "create", cmd_manifest_create, "build a manifest for one or more files")
    p.add_argument("files", nargs="+", help="files in fileset order")
    p.add_argument("--piece", type=int, default=524288, help="piece length in bytes (default 524288)")
    p.add_argument("--subpiece", type=int, default=65536, help="sub-piece length in bytes (default 65536)")
    p.add_argument("--tracker", default="", help="tracker URL recorded in the manifest")
    p.add_argument("--name", help="fileset name (default: first file name)")
    p.add_argument("--out", help="manifest path (default: print to stdout)")

    # tracker
    t = group("tracker", "tracker service")

    def tracker_flags(p):
        p.add_argument("--manifest", required=True, help="manifest file")
        p.add_argument("--aps-capacity", type=int, default=4, help="active piece set capacity (default 4)")
        p.add_argument("--ips-window", type=float, default=24.0, help="initial piece set window in hours (default 24)")
        p.add_argument("--verify-prob", type=float, default=0.2, help="share of reports verified (default 0.2)")
        p.add_argument("--pairs-per-hour", type=float, default=30.0, help="pair rate limit per peer (default 30)")
        p.add_argument("--pair-expiry", type=float, default=1.0, help="hours before an unreported pair expires (default 1)")
        p.add_argument("--site-reuse", action="store_true", help="allow several replicas per site")
        p.add_argument("--state", help="state snapshot file")
        p.add_argument("--sitehost", help="site host base URL to take the site list from")
        p.add_argument("--timeout", type=float, default=10.0, help="HTTP timeout in seconds (default 10)")

    p = leaf(t, "serve", cmd_tracker_serve, "run the tracker over HTTP")
    tracker_flags(p)
    p.add_argument("--bind", default="127.0.0.1:8000", help="address:port (default 127.0.0.1:8000)")
    p = leaf(t, "seed", cmd_tracker_seed, "place the first replicas of a fileset and write a state snapshot")
    tracker_flags(p)
    p.add_argument("--data", nargs="+", required=True, help="the fileset's files, in manifest order")
    p.add_argument("--copies", type=int, default=1, help="replicas per sub-piece (default 1)")

    # client
    c = group("client", "peer client")
    p = leaf(c, "run", cmd_client_run, "download a fileset, paying for each download with a new replica")
    p.add_argument("--manifest", required=True, help="manifest file")
    p.add_argument("--tracker", help="tracker URL (default: the manifest's)")
    p.add_argument("--adapters", default="mockwiki", help="comma-separated site adapters (default mockwiki)")
    p.add_argument("--limit-parallel", type=int, default=4, help="concurrent fetches (default 4)")
    p.add_argument("--retries", type=int, default=3, help="attempts per network operation (default 3)")
    p.add_argument("--backoff", type=float, default=1.0, help="first retry delay in seconds (default 1)")
    p.add_argument("--timeout", type=float, default=10.0, help="HTTP timeout in seconds (default 10)")
    p.add_argument("--peer-id", help="peer id (default: derived from --seed)")
    p.add_argument("--out", help="directory to write the fileset into")
    p.add_argument("--report", help="session report path")

    # sitehost
    s = group("sitehost", "mock storage sites")
    p = leaf(s, "serve", cmd_sitehost_serve, "serve a mock site population over HTTP")
    p.add_argument("--bind", default="127.0.0.1:8100", help="address:port (default 127.0.0.1:8100)")
    p.add_argument("--counts", type=_counts, default=None,
                   help="sites per protection class, e.g. anonymous=40,registration=15,puzzle=5 (the default)")
    p.add_argument("--population", help="JSON population spec {counts, domain_mix}")
    p.add_argument("--lockdown-after-days", type=float, default=None, help="refuse edits after owner inactivity")

    # sim
    sm = group("sim", "churn simulation")
    p = leaf(sm, "run", cmd_sim_run, "simulate replica survival")
    p.add_argument("--population", help="JSON population spec (default: experiment-scale counts)")
    p.add_argument("--hazards", help="hazard parameter file (default: bundled calibration)")
    p.add_argument("--days", type=int, default=324, help="days to simulate (default 324)")
    p.add_argument("--seeds", type=int, default=1, help="average over this many seeds from --seed (default 1)")
    p.add_argument("--mode", choices=("internal", "integration"), default="internal",
                   help="internal vectorised engine or drive the mock site host (default internal)")
    p.add_argument("--csv", help="per-day CSV output")
    p.add_argument("--summary", help="milestone summary output (default: stdout)")
    p = leaf(sm, "calibrate", cmd_sim_calibrate, "fit hazards to availability milestones")
    p.add_argument("--targets", help="JSON milestone targets (default: built-in)")
    p.add_argument("--out", required=True, help="hazard parameter file to write")
    p.add_argument("--points", type=int, default=5, help="grid points per axis (default 5)")
    p.add_argument("--rounds", type=int, default=10, help="refinement rounds (default 10)")
    p = leaf(sm, "probe", cmd_sim_probe, "probe every replica a tracker knows about")
    p.add_argument("--tracker", required=True, help="tracker URL")
    p.add_argument("--csv", help="CSV output")
    p.add_argument("--timeout", type=float, default=10.0, help="HTTP timeout in seconds (default 10)")
    return parser


def _apply_config(parser, args, argv) -> None:
    if not args.config:
        return
    try:
        config = json.loads(Path(args.config).read_text("utf-8"))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    explicit = {a.split("=", 1)[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, value in config.items():
        key = key.replace("-", "_")
        if not hasattr(args, key) or key in ("func", "verb", "action", "config"):
            raise UsageError(f"config key {key!r} is not a flag of this command")
        if key not in explicit:
            setattr(args, key, value)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(parser, args, argv)
    except UsageError as exc:
        print(f"graffiti: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _setup_logging(args)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"graffiti: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraffitiError, OSError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
