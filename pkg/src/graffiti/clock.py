"""Injectable clocks. All times are float seconds since the Unix epoch."""

from __future__ import annotations

import threading
import time

DAY = 86400.0
HOUR = 3600.0

# 2009-04-10T00:00:00Z, the day the original deployment started.
DEFAULT_EPOCH = 1239321600.0


class WallClock:
    def now(self) -> float:
        return time.time()

    def tick(self) -> float:
        return self.now()


class SimClock:
    """Manually advanced clock.

    ``tick()`` advances by ``step`` seconds and returns the new time; servers
    call it once per mutating command so their timestamps depend only on the
    command sequence.
    """

    def __init__(self, start: float = DEFAULT_EPOCH, step: float = 0.0):
        self._t = float(start)
        self.step = float(step)
        self._lock = threading.Lock()

    def now(self) -> float:
        return self._t

    def advance(self, seconds: float) -> float:
        if seconds < 0:
            raise ValueError("clock cannot run backwards")
        with self._lock:
            self._t += seconds
            return self._t

    def tick(self) -> float:
        return self.advance(self.step)

    def set(self, t: float) -> None:
        with self._lock:
            if t < self._t:
                raise ValueError("clock cannot run backwards")
            self._t = float(t)
