"""Latest-wins single-slot mailbox.

Capacity is exactly one: a write replaces any unconsumed value and
bumps ``replaced_count``. Consumers therefore never see a backlog, only
the newest value, which bounds latency at the cost of drops. This is
the only channel between pipeline activities.
"""

from __future__ import annotations

import threading
from typing import Generic, Optional, TypeVar

T = TypeVar("T")

__all__ = ["LatestSlot"]


class LatestSlot(Generic[T]):
    def __init__(self):
        self._cond = threading.Condition()
        self._value: Optional[T] = None
        self._fresh = False
        self.replaced_count = 0

    def put(self, value: T) -> None:
        """Store a value, overwriting any unconsumed one."""
        with self._cond:
            if self._fresh:
                self.replaced_count += 1
            self._value = value
            self._fresh = True
            self._cond.notify_all()

    def take(self) -> Optional[T]:
        """Consume and return the newest unconsumed value, or None."""
        with self._cond:
            if not self._fresh:
                return None
            self._fresh = False
            return self._value

    def wait_take(self, timeout: float) -> Optional[T]:
        """Like take(), but blocks up to ``timeout`` seconds for a write."""
        with self._cond:
            if not self._fresh:
                self._cond.wait(timeout)
            if not self._fresh:
                return None
            self._fresh = False
            return self._value

    def peek(self) -> Optional[T]:
        """Newest value ever written, without consuming it."""
        with self._cond:
            return self._value

    def has_fresh(self) -> bool:
        with self._cond:
            return self._fresh

    def clear(self) -> None:
        with self._cond:
            self._value = None
            self._fresh = False
