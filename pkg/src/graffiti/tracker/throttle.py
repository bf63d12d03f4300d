"""Per-peer token bucket."""

from __future__ import annotations

from dataclasses import dataclass

from ..clock import HOUR

DEFAULT_PAIRS_PER_HOUR = 30


@dataclass
class TokenBucket:
    capacity: float = DEFAULT_PAIRS_PER_HOUR
    refill_per_second: float = DEFAULT_PAIRS_PER_HOUR / HOUR
    tokens: float | None = None
    updated: float | None = None

    def _refill(self, now: float) -> None:
        if self.tokens is None or self.updated is None:
            self.tokens, self.updated = float(self.capacity), now
            return
        elapsed = max(0.0, now - self.updated)
        self.tokens = min(self.capacity, self.tokens + elapsed * self.refill_per_second)
        self.updated = now

    def peek(self, now: float) -> bool:
        self._refill(now)
        return self.tokens >= 1.0

    def consume(self, now: float, n: int = 1) -> bool:
        """Take ``n`` tokens if available; a refusal leaves the bucket unchanged."""
        self._refill(now)
        if self.tokens + 1e-9 < n:
            return False
        self.tokens -= n
        return True
