"""HTTP front end multiplexing every mock site under ``/site/<id>/...``."""

from __future__ import annotations

from ..clock import DAY
from ..httpjson import DropConnection, HTTPError, Response, Router
from .model import (
    EditRefused,
    PageNotFound,
    SiteHost,
    SiteUnreachable,
    TitleExists,
    UnknownSite,
    create_population,
)

_SITE = r"/site/(?P<site_id>[^/]+)"
_TITLE = r"(?P<title>[^/]+)"


def build_router(host: SiteHost) -> Router:
    r = Router()

    def guard(fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except SiteUnreachable:
            raise DropConnection() from None
        except UnknownSite as exc:
            raise HTTPError(404, {"error": "unknown_site", "site_id": exc.args[0]}) from None
        except PageNotFound as exc:
            raise HTTPError(404, {"error": "page_not_found", "title": exc.args[0]}) from None
        except EditRefused as exc:
            raise HTTPError(403, {"refused": exc.reason}) from None
        except TitleExists as exc:
            raise HTTPError(409, {"error": "title_exists", "title": exc.args[0]}) from None

    @r.route("GET", _SITE + "/wiki/" + _TITLE)
    def page(site_id, title):
        return Response(200, guard(host.get_page, site_id, title), "text/html")

    @r.route("POST", _SITE + "/edit")
    def edit(body, site_id):
        if not body.get("title") or "content" not in body:
            raise HTTPError(400, {"error": "title and content required"})
        rev = guard(
            host.edit_page, site_id, body["title"], body["content"],
            token=body.get("token"), puzzle_id=body.get("puzzle_id"),
            puzzle_answer=body.get("puzzle_answer"), create_only=bool(body.get("create_only")),
        )
        return {"revision_id": rev, "title": body["title"]}

    @r.route("GET", _SITE + "/history/" + _TITLE)
    def history(site_id, title):
        return {"title": title, "revisions": [rev.to_dict() for rev in guard(host.get_history, site_id, title)]}

    @r.route("GET", _SITE + "/recent")
    def recent(site_id):
        changes = guard(host.recent_changes, site_id)
        return {"changes": [{"title": t, "revision_id": rid, "timestamp": ts} for t, rid, ts in changes]}

    @r.route("POST", _SITE + "/register")
    def register(body, site_id):
        return {"token": guard(host.register, site_id, str(body.get("username", "user")))}

    @r.route("POST", _SITE + "/challenge")
    def challenge(body, site_id):
        puzzle_id, question = guard(host.challenge, site_id)
        return {"puzzle_id": puzzle_id, "question": question}

    @r.route("POST", "/admin/population")
    def population(body):
        sites = create_population(
            body.get("counts"), int(body.get("seed", 0)), body.get("domain_mix"),
            now=host.clock.now(), lockdown_after_days=body.get("lockdown_after_days"),
        )
        host.load(sites)
        return {"sites": len(sites)}

    @r.route("POST", "/admin/tick")
    def tick(body):
        seconds = float(body.get("seconds", 0)) + float(body.get("days", 0)) * DAY
        try:
            return {"now": host.clock.advance(seconds)}
        except ValueError as exc:
            raise HTTPError(400, {"error": str(exc)}) from None

    @r.route("GET", "/admin/state")
    def state():
        return host.state()

    @r.route("POST", "/admin/moderate")
    def moderate(body):
        action, site_id, title = body.get("action"), body.get("site_id"), body.get("title")
        actions = {
            "delete": lambda: host.delete_page(site_id, title),
            "revert": lambda: host.revert_latest(site_id, title),
            "mutate": lambda: host.mutate_page(site_id, title),
            "kill": lambda: host.kill_site(site_id),
        }
        if action not in actions:
            raise HTTPError(400, {"error": f"unknown action {action!r}"})
        try:
            guard(actions[action])
        except DropConnection:
            raise HTTPError(410, {"error": "site_dead"}) from None
        return {"ok": True}

    return r
