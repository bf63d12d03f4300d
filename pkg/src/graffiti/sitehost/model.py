"""In-memory population of MediaWiki-like storage sites.

Every site has an edit gate (its protection scheme), a domain class used for
reporting, append-only page histories and a recent-changes view. Owners can
revert, delete, or abandon (kill) their sites; ``moderate`` applies those
actions stochastically under a hazard model supplied by the caller.
"""

from __future__ import annotations

import html
import random
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol

from ..clock import DAY, SimClock

PROTECTIONS = ("anonymous", "registration", "puzzle", "captcha", "closed")
WRITABLE = ("anonymous", "registration", "puzzle")
DOMAIN_CLASSES = ("com", "edu", "org", "us_other", "non_us_other")

DEFAULT_DOMAIN_MIX = {
    "com": 0.425,
    "edu": 0.032,
    "org": 0.241,
    "us_other": 0.140,
    "non_us_other": 0.161,
}
EXPERIMENT_COUNTS = {"anonymous": 3161, "registration": 2347, "puzzle": 138}
DESK_COUNTS = {"anonymous": 40, "registration": 15, "puzzle": 5}

REFUSAL_REASONS = ("needs_account", "wrong_puzzle", "captcha_required", "locked_down", "closed")
PUZZLE_TTL = 600.0
RECENT_WINDOW_DAYS = 7

_TLDS = {
    "com": ["com"],
    "edu": ["edu"],
    "org": ["org"],
    "us_other": ["net", "us", "info", "gov"],
    "non_us_other": ["de", "co.uk", "fr", "jp", "ru", "nl", "br"],
}

_OPS = {"+": lambda a, b: a + b, "−": lambda a, b: a - b, "×": lambda a, b: a * b}


class EditRefused(Exception):
    def __init__(self, reason: str):
        assert reason in REFUSAL_REASONS, reason
        self.reason = reason
        super().__init__(reason)


class PageNotFound(KeyError):
    pass


class SiteUnreachable(ConnectionError):
    pass


class TitleExists(Exception):
    pass


class UnknownSite(KeyError):
    pass


@dataclass(frozen=True)
class Revision:
    revision_id: int
    timestamp: float
    author: str
    content: str
    is_reverted: bool = False

    def to_dict(self) -> dict:
        return {
            "revision_id": self.revision_id,
            "timestamp": self.timestamp,
            "author": self.author,
            "content": self.content,
            "is_reverted": self.is_reverted,
        }


@dataclass
class SiteRecord:
    site_id: str
    hostname: str
    protection: str
    domain_class: str
    last_owner_activity: float
    lockdown_after_days: float | None = None
    recent_changes_window_days: float = RECENT_WINDOW_DAYS
    pages: dict[str, list[Revision]] = field(default_factory=dict)
    alive: bool = True
    users: dict[str, str] = field(default_factory=dict)
    challenges: dict[str, tuple[int, float]] = field(default_factory=dict)
    next_revision: int = 1
    first_edit: float | None = None

    def __setattr__(self, name, value):
        if name in ("protection", "domain_class") and name in self.__dict__:
            raise AttributeError(f"{name} is fixed at creation")
        super().__setattr__(name, value)

    def summary(self) -> dict:
        return {
            "site_id": self.site_id,
            "hostname": self.hostname,
            "protection": self.protection,
            "domain_class": self.domain_class,
            "alive": self.alive,
            "pages": len(self.pages),
            "last_owner_activity": self.last_owner_activity,
            "lockdown_after_days": self.lockdown_after_days,
        }


@dataclass(frozen=True)
class ModerationEvent:
    site_id: str
    title: str
    kind: str  # removed | changed | not_found
    timestamp: float


class HazardParams(Protocol):
    def removal_prob(self, protection: str, day: int, visible: bool, domain_class: str = "com") -> float: ...

    def death_prob(self, protection: str, day: int, domain_class: str = "com") -> float: ...

    def mutation_prob(self, protection: str, day: int) -> float: ...


def _apportion(total: int, mix: Mapping[str, float]) -> dict[str, int]:
    """Largest-remainder split of ``total`` items over the mix weights."""
    weight = sum(mix.values())
    raw = {k: total * v / weight for k, v in mix.items()}
    counts = {k: int(v) for k, v in raw.items()}
    short = total - sum(counts.values())
    for k in sorted(raw, key=lambda k: (-(raw[k] - counts[k]), k))[:short]:
        counts[k] += 1
    return counts


def create_population(
    counts: Mapping[str, int] | None = None,
    seed: int = 0,
    domain_mix: Mapping[str, float] | None = None,
    now: float | None = None,
    lockdown_after_days: float | None = None,
) -> list[SiteRecord]:
    """Deterministic site population.

    Domain classes are apportioned exactly (largest remainder) and then
    shuffled across sites, so shares match the mix to within one site.
    Owners were last active 90 to 730 days before ``now``.
    """
    counts = dict(DESK_COUNTS if counts is None else counts)
    unknown = set(counts) - set(PROTECTIONS)
    if unknown:
        raise ValueError(f"unknown protection classes: {sorted(unknown)}")
    if any(n < 0 for n in counts.values()):
        raise ValueError("site counts must be non-negative")
    mix = dict(DEFAULT_DOMAIN_MIX if domain_mix is None else domain_mix)
    if set(mix) - set(DOMAIN_CLASSES):
        raise ValueError(f"unknown domain classes: {sorted(set(mix) - set(DOMAIN_CLASSES))}")
    now = SimClock().now() if now is None else now
    rng = random.Random(seed)

    protections = [p for p in PROTECTIONS for _ in range(counts.get(p, 0))]
    domains = [d for d, n in sorted(_apportion(len(protections), mix).items()) for _ in range(n)]
    rng.shuffle(domains)

    sites = []
    for i, (prot, dom) in enumerate(zip(protections, domains)):
        tld = rng.choice(_TLDS[dom])
        sites.append(SiteRecord(
            site_id=f"s{i:05d}",
            hostname=f"wiki{i:05d}.example.{tld}",
            protection=prot,
            domain_class=dom,
            last_owner_activity=now - rng.uniform(90, 730) * DAY,
            lockdown_after_days=lockdown_after_days,
        ))
    return sites


def _html(title: str, content: str) -> str:
    return (
        "<!DOCTYPE html>\n<html><head><title>"
        + html.escape(title)
        + " - MockWiki</title></head>\n<body><div id=\"content\"><h1>"
        + html.escape(title)
        + "</h1>\n<div id=\"bodyContent\">"
        + html.escape(content, quote=False)
        + "</div></div>\n<div id=\"footer\">Powered by MockWiki</div></body></html>\n"
    )


class SiteHost:
    """A population of mock sites sharing one clock and one random stream."""

    def __init__(self, sites: Iterable[SiteRecord] = (), clock: SimClock | None = None, seed: int = 0):
        self.clock = clock or SimClock()
        self.rng = random.Random(seed)
        self.sites: dict[str, SiteRecord] = {}
        self._lock = threading.RLock()
        self.load(sites)

    def load(self, sites: Iterable[SiteRecord]) -> None:
        with self._lock:
            self.sites = {s.site_id: s for s in sites}

    @classmethod
    def with_population(cls, counts=None, seed: int = 0, domain_mix=None, **kw) -> "SiteHost":
        host = cls(seed=seed)
        host.load(create_population(counts, seed, domain_mix, now=host.clock.now(), **kw))
        return host

    def site(self, site_id: str) -> SiteRecord:
        try:
            return self.sites[site_id]
        except KeyError:
            raise UnknownSite(site_id) from None

    def _live_site(self, site_id: str) -> SiteRecord:
        site = self.site(site_id)
        if not site.alive:
            raise SiteUnreachable(site_id)
        return site

    # accounts and puzzles ---------------------------------------------------

    def register(self, site_id: str, username: str) -> str:
        with self._lock:
            site = self._live_site(site_id)
            if site.protection in ("captcha", "closed"):
                raise EditRefused("captcha_required" if site.protection == "captcha" else "closed")
            token = f"{self.rng.getrandbits(128):032x}"
            site.users[token] = username
            return token

    def challenge(self, site_id: str) -> tuple[str, str]:
        with self._lock:
            site = self._live_site(site_id)
            a, b = self.rng.randint(1, 20), self.rng.randint(1, 20)
            op = self.rng.choice(list(_OPS))
            puzzle_id = f"{self.rng.getrandbits(64):016x}"
            site.challenges[puzzle_id] = (_OPS[op](a, b), self.clock.now() + PUZZLE_TTL)
            return puzzle_id, f"What is {a} {op} {b}?"

    # editing ------------------------------------------------------------------

    def _gate(self, site: SiteRecord, token, puzzle_id, puzzle_answer) -> str:
        now = self.clock.now()
        if site.protection == "closed":
            raise EditRefused("closed")
        if site.protection == "captcha":
            raise EditRefused("captcha_required")
        if (
            site.lockdown_after_days is not None
            and now - site.last_owner_activity > site.lockdown_after_days * DAY
        ):
            raise EditRefused("locked_down")
        if site.protection == "registration":
            if token not in site.users:
                raise EditRefused("needs_account")
            return site.users[token]
        if site.protection == "puzzle":
            answer, expires = site.challenges.pop(puzzle_id, (None, 0.0))
            try:
                given = int(puzzle_answer)
            except (TypeError, ValueError):
                given = None
            if answer is None or now > expires or given != answer:
                raise EditRefused("wrong_puzzle")
        return site.users.get(token, "anonymous")

    def edit_page(
        self,
        site_id: str,
        title: str,
        content: str,
        token: str | None = None,
        puzzle_id: str | None = None,
        puzzle_answer: int | str | None = None,
        create_only: bool = False,
    ) -> int:
        """Append a revision; returns its id or raises :class:`EditRefused`."""
        with self._lock:
            site = self._live_site(site_id)
            author = self._gate(site, token, puzzle_id, puzzle_answer)
            if create_only and title in site.pages:
                raise TitleExists(title)
            rev = Revision(site.next_revision, self.clock.now(), author, content)
            site.next_revision += 1
            site.pages.setdefault(title, []).append(rev)
            if site.first_edit is None:
                site.first_edit = rev.timestamp
            return rev.revision_id

    # reading ------------------------------------------------------------------

    def _revisions(self, site_id: str, title: str) -> list[Revision]:
        site = self._live_site(site_id)
        try:
            return site.pages[title]
        except KeyError:
            raise PageNotFound(title) from None

    def page_content(self, site_id: str, title: str) -> str:
        with self._lock:
            for rev in reversed(self._revisions(site_id, title)):
                if not rev.is_reverted:
                    return rev.content
            return ""

    def get_page(self, site_id: str, title: str) -> str:
        return _html(title, self.page_content(site_id, title))

    def get_history(self, site_id: str, title: str) -> list[Revision]:
        with self._lock:
            return list(self._revisions(site_id, title))

    def recent_changes(self, site_id: str, now: float | None = None) -> list[tuple[str, int, float]]:
        with self._lock:
            site = self._live_site(site_id)
            now = self.clock.now() if now is None else now
            window = site.recent_changes_window_days * DAY
            out = [
                (title, rev.revision_id, rev.timestamp)
                for title, revs in site.pages.items()
                for rev in revs
                if 0 <= now - rev.timestamp < window
            ]
            return sorted(out, key=lambda x: (-x[2], -x[1]))

    # owner actions ------------------------------------------------------------

    def revert_latest(self, site_id: str, title: str) -> None:
        with self._lock:
            revs = self._revisions(site_id, title)
            for i in range(len(revs) - 1, -1, -1):
                if not revs[i].is_reverted:
                    old = revs[i]
                    revs[i] = Revision(old.revision_id, old.timestamp, old.author, old.content, True)
                    break
            self.site(site_id).last_owner_activity = self.clock.now()

    def delete_page(self, site_id: str, title: str) -> None:
        with self._lock:
            site = self._live_site(site_id)
            if site.pages.pop(title, None) is None:
                raise PageNotFound(title)
            site.last_owner_activity = self.clock.now()

    def mutate_page(self, site_id: str, title: str, rng: random.Random | None = None) -> int:
        """Owner edit that scrambles part of the latest content."""
        rng = rng or self.rng
        with self._lock:
            site = self._live_site(site_id)
            content = self.page_content(site_id, title)
            cut = rng.randrange(len(content)) if content else 0
            new = content[:cut] + "[edited by site owner]" + content[cut + 1:]
            rev = Revision(site.next_revision, self.clock.now(), "owner", new)
            site.next_revision += 1
            site.pages[title].append(rev)
            site.last_owner_activity = self.clock.now()
            return rev.revision_id

    def kill_site(self, site_id: str) -> None:
        with self._lock:
            self.site(site_id).alive = False

    # moderation ---------------------------------------------------------------

    def moderate(self, site_id: str, now: float, rng: random.Random, hazard: HazardParams) -> list[ModerationEvent]:
        """Apply one day of owner activity to ``site_id``.

        Site age counts from the site's first successful edit, so a site
        keeps its death hazard after its pages are gone. Random draws are
        consumed in a fixed order (site death, then per page in title order:
        removal, mutation, edit position) whether or not they fire, so that
        raising any hazard can only remove more pages under a fixed seed.
        """
        with self._lock:
            site = self.site(site_id)
            if not site.alive or site.first_edit is None:
                return []
            site_day = int((now - site.first_edit) // DAY) + 1
            window = site.recent_changes_window_days * DAY
            u_death = rng.random()
            draws = [(t, rng.random(), rng.random(), rng.random()) for t in sorted(site.pages)]
            if u_death < hazard.death_prob(site.protection, site_day, site.domain_class):
                site.alive = False
                return [ModerationEvent(site_id, t, "not_found", now) for t in sorted(site.pages)]
            events = []
            for title, u_rm, u_mut, u_cut in draws:
                revs = site.pages[title]
                day = int((now - revs[0].timestamp) // DAY) + 1
                visible = 0 <= now - revs[-1].timestamp < window
                if u_rm < hazard.removal_prob(site.protection, day, visible, site.domain_class):
                    del site.pages[title]
                    events.append(ModerationEvent(site_id, title, "removed", now))
                elif u_mut < hazard.mutation_prob(site.protection, day):
                    content = revs[-1].content
                    cut = int(u_cut * len(content))
                    revs.append(Revision(site.next_revision, now, "owner", content[:cut] + "~" + content[cut + 1:]))
                    site.next_revision += 1
                    events.append(ModerationEvent(site_id, title, "changed", now))
            return events

    def state(self) -> dict:
        with self._lock:
            return {"now": self.clock.now(), "sites": [s.summary() for s in self.sites.values()]}
