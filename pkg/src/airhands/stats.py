"""Node observability: windowed rates, latency median, link state."""

from __future__ import annotations

import statistics
import threading
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum

__all__ = ["LinkState", "NodeStats", "StatsTracker"]

RATE_WINDOW_S = 1.0
LATENCY_WINDOW = 30


class LinkState(Enum):
    CONNECTING = "connecting"
    UP = "up"
    DOWN = "down"


@dataclass(frozen=True)
class NodeStats:
    fps_in: float
    fps_out: float
    latency_ms: int
    frames_dropped: int
    link_state: LinkState

    def render(self, role_name: str) -> str:
        """One-per-second stdout line, fixed format."""
        return (f"stats role={role_name} link={self.link_state.value} "
                f"fps_in={self.fps_in:.1f} fps_out={self.fps_out:.1f} "
                f"latency_ms={self.latency_ms} dropped={self.frames_dropped}")


class StatsTracker:
    """Thread-safe accumulator behind NodeStats snapshots.

    fps_in / fps_out count frames over a 1 s sliding window; latency_ms
    is the median over the last 30 displayed frames of (local display
    clock - capture_ts). On loopback that difference is exact; across
    hosts it is a cross-clock estimate.
    """

    def __init__(self, clock=time.monotonic):
        self._clock = clock
        self._lock = threading.Lock()
        self._in_times: deque[float] = deque()
        self._out_times: deque[float] = deque()
        self._latencies: deque[int] = deque(maxlen=LATENCY_WINDOW)
        self._dropped = 0
        self._link = LinkState.CONNECTING

    def _prune(self, times: deque[float], now: float) -> None:
        cutoff = now - RATE_WINDOW_S
        while times and times[0] < cutoff:
            times.popleft()

    def mark_in(self) -> None:
        with self._lock:
            self._in_times.append(self._clock())

    def mark_out(self) -> None:
        with self._lock:
            self._out_times.append(self._clock())

    def mark_displayed(self, latency_ms: int) -> None:
        with self._lock:
            self._latencies.append(latency_ms)

    def mark_dropped(self, n: int = 1) -> None:
        with self._lock:
            self._dropped += n

    def set_link(self, state: LinkState) -> None:
        with self._lock:
            self._link = state

    @property
    def link(self) -> LinkState:
        with self._lock:
            return self._link

    def snapshot(self) -> NodeStats:
        with self._lock:
            now = self._clock()
            self._prune(self._in_times, now)
            self._prune(self._out_times, now)
            latency = int(statistics.median(self._latencies)) if self._latencies else 0
            return NodeStats(
                fps_in=len(self._in_times) / RATE_WINDOW_S,
                fps_out=len(self._out_times) / RATE_WINDOW_S,
                latency_ms=latency,
                frames_dropped=self._dropped,
                link_state=self._link,
            )
