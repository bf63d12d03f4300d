import json
import random
from collections import Counter
from urllib.parse import quote

import pytest

from graffiti.client import solve_arithmetic_puzzle
from graffiti.clock import DAY
from graffiti.sim import HazardModel
from graffiti.sitehost import (
    DESK_COUNTS,
    EXPERIMENT_COUNTS,
    REFUSAL_REASONS,
    EditRefused,
    PageNotFound,
    SiteHost,
    SiteUnreachable,
    create_population,
)
from graffiti.sitehost import build_router
from graffiti.transport import RouterTransport, Unreachable

NOW = 1_300_000_000.0


def _host(*protections, **kw) -> SiteHost:
    counts = Counter(protections)
    host = SiteHost.with_population(dict(counts), seed=0, **kw)
    return host


def _first(host, protection):
    return next(s.site_id for s in host.sites.values() if s.protection == protection)


# population -----------------------------------------------------------------

def test_experiment_population_size():
    sites = create_population(EXPERIMENT_COUNTS, seed=1, now=NOW)
    by_class = Counter(s.protection for s in sites)
    assert by_class == {"anonymous": 3161, "registration": 2347, "puzzle": 138}
    assert len(sites) == 5646


def test_domain_mix_matches_default_shares():
    sites = create_population(EXPERIMENT_COUNTS, seed=1, now=NOW)
    shares = {"com": 0.425, "edu": 0.032, "org": 0.241, "us_other": 0.140, "non_us_other": 0.161}
    total = sum(shares.values())  # the published shares add up to 99.9%
    got = Counter(s.domain_class for s in sites)
    for dom, share in shares.items():
        assert abs(got[dom] - share / total * 5646) <= 1


def test_desk_population_reproducible():
    a = create_population(DESK_COUNTS, seed=7, now=NOW)
    b = create_population(DESK_COUNTS, seed=7, now=NOW)
    c = create_population(DESK_COUNTS, seed=8, now=NOW)
    assert len(a) == 60
    assert [s.summary() for s in a] == [s.summary() for s in b]
    assert [s.summary() for s in a] != [s.summary() for s in c]


def test_population_rejects_bad_counts():
    with pytest.raises(ValueError):
        create_population({"anonymous": -1})
    with pytest.raises(ValueError):
        create_population({"wiki": 3})


def test_protection_is_immutable():
    site = create_population({"anonymous": 1}, now=NOW)[0]
    with pytest.raises(AttributeError):
        site.protection = "closed"
    with pytest.raises(AttributeError):
        site.domain_class = "edu"


# gates --------------------------------------------------------------------

def test_anonymous_edit_first_revision():
    host = _host("anonymous")
    assert host.edit_page("s00000", "Page", "hello") == 1
    assert "hello" in host.get_page("s00000", "Page")


def test_registration_gate():
    host = _host("registration")
    with pytest.raises(EditRefused) as exc:
        host.edit_page("s00000", "Page", "x")
    assert exc.value.reason == "needs_account"
    token = host.register("s00000", "bob")
    assert host.edit_page("s00000", "Page", "x", token=token) == 1
    assert host.get_history("s00000", "Page")[0].author == "bob"


def test_puzzle_gate():
    host = _host("puzzle")
    pid, question = host.challenge("s00000")
    answer = solve_arithmetic_puzzle(question)
    assert host.edit_page("s00000", "A", "x", puzzle_id=pid, puzzle_answer=answer) == 1
    pid, question = host.challenge("s00000")
    with pytest.raises(EditRefused) as exc:
        host.edit_page("s00000", "B", "x", puzzle_id=pid, puzzle_answer=solve_arithmetic_puzzle(question) + 1)
    assert exc.value.reason == "wrong_puzzle"
    # each challenge answers one edit only
    with pytest.raises(EditRefused):
        host.edit_page("s00000", "C", "x", puzzle_id=pid, puzzle_answer=answer)


def test_puzzle_expires():
    host = _host("puzzle")
    pid, question = host.challenge("s00000")
    host.clock.advance(601)
    with pytest.raises(EditRefused) as exc:
        host.edit_page("s00000", "A", "x", puzzle_id=pid, puzzle_answer=solve_arithmetic_puzzle(question))
    assert exc.value.reason == "wrong_puzzle"


@pytest.mark.parametrize("protection,reason", [("captcha", "captcha_required"), ("closed", "closed")])
def test_unwritable_classes_always_refuse(protection, reason):
    host = _host(protection)
    with pytest.raises(EditRefused) as exc:
        host.edit_page("s00000", "Page", "x")
    assert exc.value.reason == reason
    with pytest.raises(EditRefused):
        host.register("s00000", "bob")


@pytest.mark.parametrize("idle_days,refused", [(120, True), (60, False)])
def test_lockdown(idle_days, refused):
    host = _host("anonymous", lockdown_after_days=90)
    site = host.site("s00000")
    site.last_owner_activity = host.clock.now() - idle_days * DAY
    if refused:
        with pytest.raises(EditRefused) as exc:
            host.edit_page("s00000", "Page", "x")
        assert exc.value.reason == "locked_down"
    else:
        assert host.edit_page("s00000", "Page", "x") == 1


def test_every_edit_gets_revision_or_documented_reason():
    host = SiteHost.with_population({p: 2 for p in ("anonymous", "registration", "puzzle", "captcha", "closed")}, seed=3)
    rng = random.Random(0)
    for _ in range(200):
        site_id = rng.choice(sorted(host.sites))
        kw = {}
        if rng.random() < 0.5:
            kw["token"] = rng.choice([None, "bogus"])
        if rng.random() < 0.5:
            kw["puzzle_id"], kw["puzzle_answer"] = "nope", rng.randint(-5, 5)
        try:
            rev = host.edit_page(site_id, f"T{rng.randint(0, 3)}", "c", **kw)
            assert isinstance(rev, int)
        except EditRefused as exc:
            assert exc.reason in REFUSAL_REASONS


# reads and history ----------------------------------------------------------

def test_history_and_revert():
    host = _host("anonymous")
    host.edit_page("s00000", "P", "one")
    host.edit_page("s00000", "P", "two")
    hist = host.get_history("s00000", "P")
    assert [r.content for r in hist] == ["one", "two"]
    assert [r.revision_id for r in hist] == [1, 2]
    host.revert_latest("s00000", "P")
    hist = host.get_history("s00000", "P")
    assert len(hist) == 2
    assert [r.is_reverted for r in hist] == [False, True]
    assert "one" in host.get_page("s00000", "P")
    assert "two" not in host.get_page("s00000", "P")


def test_fresh_page_has_single_revision():
    host = _host("anonymous")
    host.edit_page("s00000", "P", "one")
    assert len(host.get_history("s00000", "P")) == 1


def test_deleted_page_is_missing():
    host = _host("anonymous")
    host.edit_page("s00000", "P", "one")
    host.delete_page("s00000", "P")
    with pytest.raises(PageNotFound):
        host.get_page("s00000", "P")


def test_dead_site_refuses_everything():
    host = _host("anonymous")
    host.edit_page("s00000", "P", "one")
    host.kill_site("s00000")
    with pytest.raises(SiteUnreachable):
        host.get_page("s00000", "P")
    with pytest.raises(SiteUnreachable):
        host.edit_page("s00000", "Q", "two")


@pytest.mark.parametrize("age_days,window,listed", [(3, 7, True), (8, 7, False), (0, 0, False)])
def test_recent_changes_window(age_days, window, listed):
    host = _host("anonymous")
    host.site("s00000").recent_changes_window_days = window
    host.edit_page("s00000", "P", "one")
    now = host.clock.now() + age_days * DAY
    titles = [t for t, _, _ in host.recent_changes("s00000", now)]
    assert (titles == ["P"]) is listed


# moderation -----------------------------------------------------------------

def _populated(n_sites=50, pages=4, seed=0):
    host = SiteHost.with_population({"anonymous": n_sites}, seed=seed)
    for sid in sorted(host.sites):
        for i in range(pages):
            host.edit_page(sid, f"T{i}", "payload " * 10)
    return host


def test_zero_hazard_removes_nothing():
    host = _populated()
    rng = random.Random(1)
    for day in range(1, 366):
        now = host.clock.now() + day * DAY
        for sid in sorted(host.sites):
            assert host.moderate(sid, now, rng, HazardModel.zero()) == []
    assert sum(len(s.pages) for s in host.sites.values()) == 200


def test_recent_window_raises_removal():
    hz = HazardModel(removal={"anonymous": {"early": 0.05, "mid": 0.05}}, recent_multiplier=3.0)
    assert hz.removal_prob("anonymous", 5, True) > hz.removal_prob("anonymous", 5, False)

    def removed_on_day(age_days):
        host = _populated(n_sites=400, pages=1, seed=2)
        rng = random.Random(9)
        now = host.clock.now() + age_days * DAY
        return sum(len(host.moderate(sid, now, rng, hz)) for sid in sorted(host.sites))

    # early and mid share a base hazard, so only the window separates days 2 and 8
    inside, outside = removed_on_day(2), removed_on_day(8)
    assert inside > outside


def test_moderate_is_deterministic():
    hz = HazardModel(removal={"anonymous": {"early": 0.1, "mid": 0.05, "late": 0.01}},
                     recent_multiplier=2.0, death_start=5, death_slope=0.01)

    def log():
        host = _populated(n_sites=20, seed=4)
        rng = random.Random(11)
        events = []
        for day in range(1, 60):
            now = host.clock.now() + day * DAY
            for sid in sorted(host.sites):
                events += host.moderate(sid, now, rng, hz)
        return events

    first = log()
    assert first and first == log()


def test_site_death_after_pages_removed():
    host = _populated(n_sites=1, pages=1)
    host.delete_page("s00000", "T0")
    hz = HazardModel(death_start=0, death_slope=1.0)
    host.moderate("s00000", host.clock.now() + DAY, random.Random(0), hz)
    assert not host.site("s00000").alive


# HTTP ---------------------------------------------------------------------

@pytest.fixture
def http():
    host = SiteHost.with_population({"anonymous": 1, "registration": 1, "puzzle": 1, "captcha": 1}, seed=0)
    t = RouterTransport()
    t.mount("http://h", build_router(host))
    return host, t


def test_http_edit_and_read(http):
    host, t = http
    anon = _first(host, "anonymous")
    status, body = t.post(f"http://h/site/{anon}/edit", {"title": "My Page", "content": "hi"})
    assert status == 200 and body["revision_id"] == 1
    status, html = t.get(f"http://h/site/{anon}/wiki/{quote('My Page')}")
    assert status == 200 and "hi" in html
    status, body = t.get(f"http://h/site/{anon}/history/{quote('My Page')}")
    assert status == 200
    status, body = t.get(f"http://h/site/{anon}/recent")
    assert status == 200


def test_http_refusals(http):
    host, t = http
    reg, cap = _first(host, "registration"), _first(host, "captcha")
    status, body = t.post(f"http://h/site/{reg}/edit", {"title": "P", "content": "x"})
    assert (status, body["refused"]) == (403, "needs_account")
    status, body = t.post(f"http://h/site/{reg}/register", {"username": "u"})
    token = body["token"]
    assert t.post(f"http://h/site/{reg}/edit", {"title": "P", "content": "x", "token": token})[0] == 200
    status, body = t.post(f"http://h/site/{cap}/edit", {"title": "P", "content": "x"})
    assert (status, body["refused"]) == (403, "captcha_required")


def test_http_puzzle_and_missing(http):
    host, t = http
    puz = _first(host, "puzzle")
    _, ch = t.post(f"http://h/site/{puz}/challenge", {})
    body = {"title": "P", "content": "x", "puzzle_id": ch["puzzle_id"],
            "puzzle_answer": solve_arithmetic_puzzle(ch["question"])}
    assert t.post(f"http://h/site/{puz}/edit", body)[0] == 200
    assert t.get(f"http://h/site/{puz}/wiki/Nope")[0] == 404
    assert t.get("http://h/site/zzz/wiki/P")[0] == 404


def test_http_dead_site_drops_connection(http):
    host, t = http
    anon = _first(host, "anonymous")
    t.post(f"http://h/site/{anon}/edit", {"title": "P", "content": "x"})
    assert t.post("http://h/admin/moderate", {"action": "kill", "site_id": anon})[0] == 200
    with pytest.raises(Unreachable):
        t.get(f"http://h/site/{anon}/wiki/P")


def test_http_admin(http):
    host, t = http
    before = host.clock.now()
    status, body = t.post("http://h/admin/tick", {"days": 2})
    assert status == 200 and body["now"] == before + 2 * DAY
    status, body = t.post("http://h/admin/population", {"counts": {"anonymous": 5}, "seed": 1})
    assert body == {"sites": 5}
    status, state = t.get("http://h/admin/state")
    assert len(json.loads(state)["sites"]) == 5
