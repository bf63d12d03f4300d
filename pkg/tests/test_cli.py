import json
import random

import pytest

from graffiti.cli import main
from graffiti.fileset import FilesetManifest
from graffiti.httpjson import serve_in_thread
from graffiti.sitehost import SiteHost
from graffiti.sitehost import build_router as site_router
from graffiti.tracker import HttpProxy, Tracker, build_router, snapshot_writer

MIB = 1 << 20


@pytest.fixture
def blob(tmp_path):
    path = tmp_path / "blob.bin"
    path.write_bytes(random.Random(1).randbytes(MIB + MIB // 2))
    return path


def test_manifest_create(tmp_path, blob):
    out = tmp_path / "m.json"
    assert main(["manifest", "create", str(blob), "--out", str(out), "--tracker", "http://t"]) == 0
    m = FilesetManifest.load(out)
    assert (m.num_pieces, m.num_subpieces) == (3, 24)
    first = out.read_bytes()
    assert main(["manifest", "create", str(blob), "--out", str(out), "--tracker", "http://t"]) == 0
    assert out.read_bytes() == first


def test_manifest_to_stdout(blob, capsys):
    assert main(["--quiet", "manifest", "create", str(blob)]) == 0
    assert json.loads(capsys.readouterr().out)["piece_length"] == 524288


def test_missing_file_is_a_domain_error(tmp_path):
    assert main(["manifest", "create", str(tmp_path / "absent")]) == 1


def test_bad_geometry_is_a_domain_error(blob):
    assert main(["manifest", "create", str(blob), "--piece", "1000", "--subpiece", "300"]) == 1


@pytest.mark.parametrize("argv", [["frobnicate"], ["sim"], ["sim", "run", "--days", "soon"],
                                  ["sitehost", "serve", "--counts", "anonymous"]])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


@pytest.mark.parametrize("argv", [[], ["manifest"], ["manifest", "create"], ["tracker"], ["tracker", "serve"],
                                  ["tracker", "seed"], ["client", "run"], ["sitehost", "serve"],
                                  ["sim"], ["sim", "run"], ["sim", "calibrate"], ["sim", "probe"]])
def test_help_everywhere(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main([*argv, "--help"])
    assert exc.value.code == 0
    assert "usage:" in capsys.readouterr().out


def test_client_without_tracker_url(tmp_path, blob):
    out = tmp_path / "m.json"
    main(["manifest", "create", str(blob), "--out", str(out)])
    assert main(["client", "run", "--manifest", str(out)]) == 2


@pytest.fixture
def population(tmp_path):
    path = tmp_path / "pop.json"
    path.write_text(json.dumps({"counts": {"anonymous": 60, "registration": 40, "puzzle": 4}}))
    return path


def test_sim_run_is_reproducible(tmp_path, population):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert main(["sim", "run", "--population", str(population), "--days", "60", "--seed", "3",
                     "--seeds", "2", "--csv", str(p), "--summary", str(p) + ".txt"]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert len(paths[0].read_text().splitlines()) == 61
    main(["sim", "run", "--population", str(population), "--days", "60", "--seed", "4", "--csv", str(paths[1])])
    assert paths[0].read_bytes() != paths[1].read_bytes()


def test_seed_before_or_after_the_verb(tmp_path, population):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["--seed", "9", "sim", "run", "--population", str(population), "--days", "30", "--csv", str(a)])
    main(["sim", "run", "--seed", "9", "--population", str(population), "--days", "30", "--csv", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_config_file(tmp_path, population):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"days": 12, "seed": 9, "population": str(population)}))
    out = tmp_path / "c.csv"
    assert main(["sim", "run", "--config", str(cfg), "--csv", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 13
    # an explicit flag beats the file
    assert main(["sim", "run", "--config", str(cfg), "--days", "5", "--csv", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 6


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["sim", "run", "--config", str(cfg)]) == 2
    assert main(["sim", "run", "--config", str(tmp_path / "absent.json")]) == 2


def test_calibrate_writes_hazards(tmp_path):
    out = tmp_path / "h.json"
    assert main(["--quiet", "sim", "calibrate", "--out", str(out), "--points", "3", "--rounds", "1"]) == 0
    assert "removal" in json.loads(out.read_text())


def test_json_logging(tmp_path, capsys):
    assert main(["--log-json", "manifest", "create", str(tmp_path / "absent")]) == 1
    line = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(line)["level"] == "ERROR"


def test_seed_serve_and_download_over_http(tmp_path, blob):
    """The seed, client and probe verbs against live loopback servers."""
    host = SiteHost.with_population({"anonymous": 40, "registration": 15, "puzzle": 5}, seed=7)
    site_server, site_url = serve_in_thread(site_router(host))
    manifest, state = tmp_path / "m.json", tmp_path / "state.json"
    try:
        main(["manifest", "create", str(blob), "--out", str(manifest)])
        assert main(["tracker", "seed", "--manifest", str(manifest), "--data", str(blob), "--sitehost", site_url,
                     "--state", str(state), "--ips-window", "1", "--seed", "3"]) == 0
        snap = json.loads(state.read_text())
        assert len(snap["replicas"]) == 24
        tracker = Tracker.from_snapshot(snap)
        tracker.proxy = HttpProxy(10.0)
        tracker.on_change = snapshot_writer(state)
        tracker_server, tracker_url = serve_in_thread(build_router(tracker))
        try:
            report = tmp_path / "report.json"
            assert main(["client", "run", "--manifest", str(manifest), "--tracker", tracker_url, "--backoff", "0",
                         "--out", str(tmp_path / "out"), "--report", str(report), "--seed", "5"]) == 0
            assert (tmp_path / "out" / "blob.bin").read_bytes() == blob.read_bytes()
            r = json.loads(report.read_text())
            assert r["complete"] and r["replicas_produced"] >= 32
            probe = tmp_path / "probe.csv"
            assert main(["sim", "probe", "--tracker", tracker_url, "--csv", str(probe)]) == 0
            rows = probe.read_text().splitlines()[1:]
            assert len(rows) == len(tracker.replicas) and all(r.endswith(",available") for r in rows)
        finally:
            tracker_server.shutdown()
            tracker_server.server_close()
    finally:
        site_server.shutdown()
        site_server.server_close()
