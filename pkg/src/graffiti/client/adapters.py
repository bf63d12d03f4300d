"""Storage-site adapters.

Only the bundled mock wiki is supported. An adapter fetches pages (with a
retry budget for network failures) and creates new pages, passing the site's
edit gate where it can: registration is automatic, arithmetic puzzles are
solved, CAPTCHA-gated and closed sites are refused.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from urllib.parse import quote

from ..errors import PuzzleParseError, UploadRefusedError
from ..status import CONTENT, MISSING, UNREACHABLE, FetchOutcome
from ..transport import HttpTransport, Unreachable
from .puzzle import solve_arithmetic_puzzle

log = logging.getLogger(__name__)


class TitleTaken(Exception):
    pass


@dataclass
class MockWikiAdapter:
    transport: object = field(default_factory=HttpTransport)
    retries: int = 3
    backoff: float = 1.0
    writable: bool = True
    username: str = "replica-client"
    name: str = "mockwiki"
    sleep: object = time.sleep
    _tokens: dict = field(default_factory=dict, repr=False)

    def handles(self, location: str) -> bool:
        return "/site/" in location and "/wiki/" in location

    def fetch(self, location: str) -> FetchOutcome:
        """GET a page; connection failures are retried before giving up as unreachable."""
        for attempt in range(max(1, self.retries)):
            try:
                status, text = self.transport.get(location)
            except Unreachable:
                status, text = None, ""
            if status == 200:
                return FetchOutcome(CONTENT, text)
            if status == 404:
                return FetchOutcome(MISSING)
            if attempt + 1 < self.retries:
                self.sleep(self.backoff * 2 ** attempt)
        return FetchOutcome(UNREACHABLE)

    def _post(self, url: str, body: dict) -> tuple[int, dict]:
        try:
            return self.transport.post(url, body)
        except Unreachable:
            raise UploadRefusedError("unreachable") from None

    def create_page(self, site_id: str, hints: dict, title: str, content: str) -> str:
        if not self.writable:
            raise UploadRefusedError("read_only_adapter")
        base = hints["base_url"].rstrip("/")
        site = f"{base}/site/{site_id}"
        protection = hints.get("protection", "anonymous")
        body = {"title": title, "content": content, "create_only": True}

        for _ in range(2):
            if protection == "registration":
                if site not in self._tokens:
                    status, reply = self._post(site + "/register", {"username": self.username})
                    if status != 200:
                        raise UploadRefusedError(reply.get("refused", f"register_http_{status}"))
                    self._tokens[site] = reply["token"]
                body["token"] = self._tokens[site]
            if protection == "puzzle":
                status, reply = self._post(site + "/challenge", {})
                if status != 200:
                    raise UploadRefusedError(reply.get("refused", f"challenge_http_{status}"))
                try:
                    body["puzzle_id"] = reply["puzzle_id"]
                    body["puzzle_answer"] = solve_arithmetic_puzzle(reply["question"])
                except PuzzleParseError:
                    raise UploadRefusedError("wrong_puzzle") from None

            status, reply = self._post(site + "/edit", body)
            if status == 200:
                return f"{site}/wiki/{quote(title)}"
            if status == 409:
                raise TitleTaken(title)
            reason = reply.get("refused", f"http_{status}")
            if reason == "needs_account" and site in self._tokens:
                # token lost (host restarted); register again once
                del self._tokens[site]
                protection = "registration"
                continue
            raise UploadRefusedError(reason)
        raise UploadRefusedError("needs_account")
