"""Per-group live-entry counters that gate hole punching.

One 32-bit counter per OS page of translation entries. Bit 31 is a lock held
by an evictor while it decides whether to release the group's backing; the
low 31 bits count resident entries in the group. Faults wait for the lock bit
before incrementing, so no entry can become resident in a group that is being
punched.
"""

import threading
import time

import numpy as np

from .memory import SparseRegion
from .pid import ENTRY_BYTES

LOCK_BIT = 1 << 31
COUNT_MASK = LOCK_BIT - 1

_N_STRIPES = 64


def _yield() -> None:
    time.sleep(0)


class HolePunchArray:
    def __init__(self, n_entries: int, os_page_bytes: int, provider):
        self.entries_per_group = os_page_bytes // ENTRY_BYTES
        self.n_groups = -(-n_entries // self.entries_per_group)
        self.capacity_bytes = self.n_groups * 4
        length = -(-self.capacity_bytes // os_page_bytes) * os_page_bytes
        self._region = provider.reserve(length)
        self._c = self._region.view("I")
        self._stripes = [threading.Lock() for _ in range(_N_STRIPES)]
        # called on every busy-wait iteration; tests replace it to observe blocking
        self.spin = _yield

    def _cas(self, g: int, expected: int, new: int) -> bool:
        with self._stripes[g & (_N_STRIPES - 1)]:
            if self._c[g] != expected:
                return False
            self._c[g] = new
            return True

    def count(self, g: int) -> int:
        return self._c[g] & COUNT_MASK

    def is_locked(self, g: int) -> bool:
        return bool(self._c[g] & LOCK_BIT)

    def increment_refcount(self, g: int) -> None:
        while True:
            c = self._c[g]
            if c & LOCK_BIT:
                self.spin()
                continue
            assert c < COUNT_MASK, "group counter overflow"
            if self._cas(g, c, c + 1):
                return

    def lock_and_dec(self, g: int) -> int:
        """Set the lock bit and decrement in one step; returns the new count."""
        while True:
            c = self._c[g]
            if c & LOCK_BIT:
                self.spin()
                continue
            assert c >= 1, "group counter underflow"
            if self._cas(g, c, (c - 1) | LOCK_BIT):
                return c - 1

    def unlock(self, g: int) -> None:
        c = self._c[g]
        assert c & LOCK_BIT, "unlock of unlocked group counter"
        self._c[g] = c & COUNT_MASK

    def total_count(self) -> int:
        if isinstance(self._region, SparseRegion):
            view = self._c
            per = view._per_page
            return sum(
                view[n * per + i] & COUNT_MASK
                for n in self._region.resident_pages()
                for i in range(per)
            )
        arr = np.frombuffer(self._c, dtype=np.uint32, count=self.n_groups)
        return int((arr & COUNT_MASK).sum(dtype=np.uint64))

    def resident_bytes(self, snapshot: dict | None = None) -> int:
        return self._region.resident_bytes(snapshot)

    def close(self) -> None:
        self._region.close()
