"""Simulated time: a logical clock advanced per event.

Runs are instantaneous and reproducible; every timestamp in a seeded run is
a pure function of the event order.
"""

from __future__ import annotations

EPOCH_MS = 1_735_689_600_000  # 2025-01-01T00:00:00Z
STEP_MS = 250


class LogicalClock:
    def __init__(self, start_ms: int = EPOCH_MS, step_ms: int = STEP_MS):
        self._now = start_ms
        self._step = step_ms

    def now_ms(self) -> int:
        return self._now

    def tick(self) -> int:
        """Advance one event step and return the new time."""
        self._now += self._step
        return self._now
