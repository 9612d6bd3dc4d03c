"""Frame memory, per-frame descriptors, free list and CLOCK sweep.

Frame ids are 1-based (``0`` is ``INVALID_FRAME`` in translation entries), so
``views[f]`` is the memory of stored frame id ``f`` and ``views[0]`` is unused.
"""

import itertools
from collections import deque

from .entry import INVALID_FRAME
from .errors import PoolExhaustedError
from .memory import MmapProvider
from .pid import DEFAULT_OS_PAGE_BYTES


class FrameStore:
    def __init__(self, frame_count: int, page_size: int = 4096, huge: bool = True,
                 os_page_bytes: int = DEFAULT_OS_PAGE_BYTES):
        if frame_count < 1:
            raise ValueError("frame_count must be positive")
        if page_size < 64 or page_size & (page_size - 1):
            raise ValueError(f"page_size must be a power of two >= 64, got {page_size}")
        self.frame_count = frame_count
        self.page_size = page_size
        length = frame_count * page_size
        length = -(-length // os_page_bytes) * os_page_bytes
        self._region = MmapProvider(os_page_bytes).reserve(length, huge=huge)
        raw = self._region.view("B")
        self.views = [None] + [raw[i * page_size:(i + 1) * page_size] for i in range(frame_count)]
        self.owner: list[int | None] = [None] * (frame_count + 1)
        self.ref = bytearray(frame_count + 1)
        self.dirty = bytearray(frame_count + 1)
        # bumped whenever a frame changes occupant; optimistic readers compare it
        self.gen = [0] * (frame_count + 1)
        self._free = deque(range(frame_count, 0, -1))
        self._ticks = itertools.count()
        self.last_sweep_steps = 0

    def allocate_frame(self) -> int:
        try:
            return self._free.pop()
        except IndexError:
            return INVALID_FRAME

    def free_frame(self, f: int) -> None:
        self.owner[f] = None
        self.dirty[f] = 0
        self.ref[f] = 0
        self._free.append(f)

    def free_count(self) -> int:
        return len(self._free)

    def touch(self, f: int) -> None:
        self.ref[f] = 1

    def select_victim_page(self, claim):
        """CLOCK sweep for a victim.

        ``claim(frame, owner)`` tries to latch the owner's translation entry and
        returns a handle, or ``None`` if the page is pinned, mid-fault or no
        longer in that frame. Returns ``(frame, owner, handle)``.
        """
        n = self.frame_count
        owner_of = self.owner
        ref = self.ref
        ticks = self._ticks
        for step in range(2 * n):
            f = next(ticks) % n + 1
            owner = owner_of[f]
            if owner is None:
                continue
            if ref[f]:
                ref[f] = 0
                continue
            handle = claim(f, owner)
            if handle is not None:
                self.last_sweep_steps = step + 1
                return f, owner, handle
        raise PoolExhaustedError(f"no evictable frame among {n} after two sweeps")

    def close(self) -> None:
        for v in self.views[1:]:
            v.release()
        self.views = [None]
        self._region.close()
