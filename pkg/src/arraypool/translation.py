"""Two-level array translation: prefix index -> last-level arrays -> entries.

Each last-level array reserves ``2**suffix_width`` eight-byte entries of virtual
memory up front; physical memory follows the set of OS pages that hold
non-zero entries. An entry's group counter (``HolePunchArray``) lets the
evictor of the last resident page in a group release that OS page.

The table also owns the group-counter side of the fault and eviction
protocols (``reserve``/``unreserve``/``evict_entry``), so the pool can drive
array and hash translation through one interface.
"""

import threading
import time

from . import entry as te
from .hparray import HolePunchArray
from .memory import rss_snapshot
from .pid import ENTRY_BYTES, check_os_page_bytes, check_suffix_width

# nominal bytes per upper-index slot (prefix key + array pointer)
UPPER_SLOT_BYTES = 16


class LastLevelArray:
    def __init__(self, prefix: int, capacity: int, os_page_bytes: int, provider):
        self.prefix = prefix
        self.capacity = capacity
        length = -(-capacity * ENTRY_BYTES // os_page_bytes) * os_page_bytes
        self.region = provider.reserve(length)
        self.words = self.region.view("Q")
        self.hp = HolePunchArray(capacity, os_page_bytes, provider)

    def resident_bytes(self, snapshot: dict | None = None) -> int:
        return self.region.resident_bytes(snapshot) + self.hp.resident_bytes(snapshot)

    def close(self) -> None:
        self.words = None
        self.region.close()
        self.hp.close()


class _PathCache:
    __slots__ = ("prefix", "words", "array", "hits", "misses")

    def __init__(self):
        self.prefix = -1
        self.words = None
        self.array = None
        self.hits = 0
        self.misses = 0


class ArrayTranslation:
    kind = "array"

    def __init__(self, suffix_width: int, os_page_bytes: int, provider):
        self.suffix_width = check_suffix_width(suffix_width)
        self.os_page_bytes = check_os_page_bytes(os_page_bytes)
        self.entries_per_group = os_page_bytes // ENTRY_BYTES
        self._group_shift = self.entries_per_group.bit_length() - 1
        self._mask = (1 << suffix_width) - 1
        self._provider = provider
        self._arrays: dict[int, LastLevelArray] = {}
        self._lock = threading.Lock()
        self._tls = threading.local()
        self._caches: list[_PathCache] = []
        self.hole_punches = 0
        self.hook = None

    # -- resolution -------------------------------------------------------

    def lookup_leaf(self, prefix: int) -> LastLevelArray:
        arr = self._arrays.get(prefix)
        if arr is None:
            with self._lock:
                arr = self._arrays.get(prefix)
                if arr is None:
                    arr = LastLevelArray(
                        prefix, 1 << self.suffix_width, self.os_page_bytes, self._provider
                    )
                    arr.hp.spin = self._spin_group
                    self._arrays[prefix] = arr
        return arr

    def _path_cache(self) -> _PathCache:
        try:
            return self._tls.pc
        except AttributeError:
            pc = self._tls.pc = _PathCache()
            with self._lock:
                self._caches.append(pc)
            return pc

    def leaf(self, pid: int) -> LastLevelArray:
        prefix = pid >> self.suffix_width
        try:
            pc = self._tls.pc
        except AttributeError:
            pc = self._path_cache()
        if pc.prefix == prefix:
            pc.hits += 1
            return pc.array
        arr = self.lookup_leaf(prefix)
        pc.prefix, pc.words, pc.array = prefix, arr.words, arr
        pc.misses += 1
        return arr

    def entry(self, pid: int):
        """Handle ``(words, index)`` of the translation entry for ``pid``."""
        prefix = pid >> self.suffix_width
        try:
            pc = self._tls.pc
        except AttributeError:
            pc = self._path_cache()
        if pc.prefix == prefix:
            pc.hits += 1
            return pc.words, pid & self._mask
        arr = self.lookup_leaf(prefix)
        pc.prefix, pc.words, pc.array = prefix, arr.words, arr
        pc.misses += 1
        return arr.words, pid & self._mask

    get_translation_entry = entry
    peek = entry

    def locate(self, pid: int):
        """Like ``entry`` but bypasses the calling thread's path cache."""
        return self.lookup_leaf(pid >> self.suffix_width).words, pid & self._mask

    def is_live(self, words, idx: int) -> bool:
        return True

    # -- group counter protocol ---------------------------------------------

    def _hook(self, point: str) -> None:
        if self.hook is not None:
            self.hook(point)

    def _spin_group(self) -> None:
        if self.hook is not None:
            self.hook("spin:group")
        time.sleep(0)

    def reserve(self, pid: int, idx: int) -> None:
        """Count an in-flight fault against the entry's group before latching it."""
        self.leaf(pid).hp.increment_refcount(idx >> self._group_shift)

    def _drop(self, arr: LastLevelArray, g: int, before_zero=None, tag="evict") -> None:
        count = arr.hp.lock_and_dec(g)
        self._hook(tag + ":group-locked")
        if before_zero is not None:
            before_zero()
            self._hook(tag + ":zeroed")
        if count == 0:
            arr.region.release(g * self.os_page_bytes, self.os_page_bytes)
            with self._lock:
                self.hole_punches += 1
            self._hook(tag + ":released")
        arr.hp.unlock(g)

    def unreserve(self, pid: int, idx: int) -> None:
        arr = self.lookup_leaf(pid >> self.suffix_width)
        self._drop(arr, idx >> self._group_shift, tag="unreserve")

    def evict_entry(self, pid: int, words, idx: int) -> None:
        """Finish evicting a latched entry whose frame id is already cleared."""
        arr = self.lookup_leaf(pid >> self.suffix_width)
        self._drop(arr, idx >> self._group_shift, lambda: te.unlock_evicted(words, idx))

    def abort_fault(self, pid: int, words, idx: int) -> None:
        arr = self.lookup_leaf(pid >> self.suffix_width)
        self._drop(arr, idx >> self._group_shift, lambda: te.unlock_evicted(words, idx), "abort")

    # -- accounting ---------------------------------------------------------

    def arrays(self) -> list[LastLevelArray]:
        with self._lock:
            return list(self._arrays.values())

    def group_count_total(self) -> int:
        return sum(arr.hp.total_count() for arr in self.arrays())

    def resident_bytes(self) -> int:
        arrays = self.arrays()
        snapshot = rss_snapshot() if arrays else None
        return len(arrays) * UPPER_SLOT_BYTES + sum(a.resident_bytes(snapshot) for a in arrays)

    memory_bytes = resident_bytes

    def path_cache_counts(self) -> tuple[int, int]:
        with self._lock:
            caches = list(self._caches)
        return sum(c.hits for c in caches), sum(c.misses for c in caches)

    def close(self) -> None:
        for arr in self.arrays():
            arr.close()
        self._arrays.clear()
