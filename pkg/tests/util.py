"""Test helpers: instrumented page stores and self-validating page contents."""

import struct
import threading
import time
import zlib
from collections import Counter

from arraypool.store import PageStore

_STAMP = struct.Struct("<QQ")


class CountingStore(PageStore):
    """Wraps a store, counting I/O per pid; can delay reads and inject failures."""

    def __init__(self, inner, read_delay: float = 0.0):
        self.inner = inner
        self.page_size = inner.page_size
        self.read_delay = read_delay
        self.reads = Counter()
        self.writes = Counter()
        self.batches: list[list[int]] = []
        self.fail_reads: set[int] = set()
        self.fail_writes: set[int] = set()
        self._lock = threading.Lock()

    def read_page(self, pid, dst):
        if self.read_delay:
            time.sleep(self.read_delay)
        if pid in self.fail_reads:
            raise OSError(5, f"injected read failure for {pid}")
        self.inner.read_page(pid, dst)
        with self._lock:
            self.reads[pid] += 1

    def read_pages(self, pids, dsts):
        with self._lock:
            self.batches.append(list(pids))
        return super().read_pages(pids, dsts)

    def write_page(self, pid, src):
        if pid in self.fail_writes:
            raise OSError(5, f"injected write failure for {pid}")
        self.inner.write_page(pid, src)
        with self._lock:
            self.writes[pid] += 1

    def close(self):
        self.inner.close()


def stamp_page(view, pid: int, counter: int) -> None:
    """Fill a page with content derived from (pid, counter) and a trailing CRC."""
    n = len(view)
    _STAMP.pack_into(view, 0, pid, counter)
    body = (counter * 0x9E3779B97F4A7C15 + pid) & 0xFFFFFFFFFFFFFFFF
    filler = body.to_bytes(8, "little") * ((n - 20) // 8 + 1)
    view[16:n - 4] = filler[: n - 20]
    struct.pack_into("<I", view, n - 4, zlib.crc32(view[: n - 4]))


def page_ok(data, pid: int | None = None) -> bool:
    n = len(data)
    if struct.unpack_from("<I", data, n - 4)[0] != zlib.crc32(data[: n - 4]):
        return False
    return pid is None or _STAMP.unpack_from(data, 0)[0] == pid


def page_counter(data) -> int:
    return _STAMP.unpack_from(data, 0)[1]


def group_counts_match(pool) -> bool:
    """Sum of group counters equals the number of resident pages (array backend)."""
    return pool.table.group_count_total() == pool.resident_count()
