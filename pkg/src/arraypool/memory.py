"""Lazily backed virtual regions with sub-range release.

Two providers share one interface:

``MmapProvider``
    Anonymous private ``mmap`` with ``MAP_NORESERVE``. Untouched pages map the
    kernel's shared zero page, so reads cost no memory; ``release`` issues
    ``madvise(MADV_DONTNEED)``, after which the range reads as zero again.
    Residency is read from the ``Rss`` line of ``/proc/self/smaps`` (the zero
    page is not counted there, unlike ``mincore``).

``InstrumentedProvider``
    A sparse dictionary of OS pages with exact residency accounting. Used by
    the tests and by reclamation measurements.
"""

import array
import mmap
import threading

from .pid import DEFAULT_OS_PAGE_BYTES, check_os_page_bytes

MAP_NORESERVE = getattr(mmap, "MAP_NORESERVE", 0x4000)


class ReservationError(Exception):
    pass


class Region:
    """A reserved range of ``length`` bytes that reads as zero until written."""

    length: int
    os_page_bytes: int

    def view(self, typecode: str):
        """Indexable view of the region as an array of ``typecode`` items."""
        raise NotImplementedError

    def release(self, offset: int, length: int) -> None:
        raise NotImplementedError

    def resident_bytes(self, snapshot: dict | None = None) -> int:
        """Physically backed bytes; ``snapshot`` is an optional ``rss_snapshot()``."""
        raise NotImplementedError

    def close(self) -> None:
        pass

    def _check_range(self, offset: int, length: int) -> None:
        mask = self.os_page_bytes - 1
        if offset & mask or length & mask:
            raise ValueError(
                f"release range ({offset}, {length}) not aligned to {self.os_page_bytes}"
            )
        if offset < 0 or offset + length > self.length:
            raise ValueError(f"release range ({offset}, {length}) outside region")


class MmapRegion(Region):
    def __init__(self, length: int, os_page_bytes: int, huge: bool):
        self.length = length
        self.os_page_bytes = os_page_bytes
        try:
            self._mm = mmap.mmap(
                -1, length, flags=mmap.MAP_PRIVATE | mmap.MAP_ANONYMOUS | MAP_NORESERVE
            )
        except OSError as exc:
            raise ReservationError(f"cannot reserve {length} bytes: {exc}") from exc
        advice = mmap.MADV_HUGEPAGE if huge else getattr(mmap, "MADV_NOHUGEPAGE", None)
        if advice is not None:
            try:
                self._mm.madvise(advice)
            except OSError:
                pass
        self._views: list[memoryview] = []
        self._raw = memoryview(self._mm)
        self._smaps_key = None

    def view(self, typecode: str):
        v = self._raw.cast(typecode)
        self._views.append(v)
        return v

    def release(self, offset: int, length: int) -> None:
        self._check_range(offset, length)
        try:
            self._mm.madvise(mmap.MADV_DONTNEED, offset, length)
        except OSError:
            pass

    def _address(self) -> int:
        import ctypes

        buf = (ctypes.c_char * 1).from_buffer(self._mm)
        try:
            return ctypes.addressof(buf)
        finally:
            del buf

    def resident_bytes(self, snapshot: dict | None = None) -> int:
        if self._smaps_key is None:
            self._smaps_key = format(self._address(), "x")
        if snapshot is None:
            snapshot = rss_snapshot()
        return snapshot.get(self._smaps_key, 0)

    def close(self) -> None:
        for v in self._views:
            v.release()
        self._views.clear()
        self._raw.release()
        self._mm.close()


def rss_snapshot() -> dict:
    """Map of mapping start address (hex) to resident bytes, from /proc/self/smaps."""
    out = {}
    start = None
    try:
        with open("/proc/self/smaps") as f:
            for line in f:
                if line.startswith("Rss:"):
                    if start is not None:
                        out[start] = int(line.split()[1]) * 1024
                        start = None
                elif not line[0].isupper():
                    start = line.split("-", 1)[0].lstrip("0")
    except OSError:
        pass
    return out


class _SparseView:
    __slots__ = ("_region", "_per_page", "_shift", "_mask", "_typecode")

    def __init__(self, region: "SparseRegion", typecode: str):
        itemsize = array.array(typecode).itemsize
        per_page = region.os_page_bytes // itemsize
        self._region = region
        self._per_page = per_page
        self._shift = per_page.bit_length() - 1
        self._mask = per_page - 1
        self._typecode = typecode

    def __len__(self):
        return self._region.length // (self._region.os_page_bytes // self._per_page)

    def __getitem__(self, i):
        page = self._region._pages.get(i >> self._shift)
        if page is None:
            return 0
        return page[self._typecode][i & self._mask]

    def __setitem__(self, i, value):
        self._region._page(i >> self._shift)[self._typecode][i & self._mask] = value


class _Page(dict):
    def __missing__(self, typecode):
        v = self["B"].cast(typecode)
        self[typecode] = v
        return v


class SparseRegion(Region):
    """Dictionary-of-pages region with exact residency accounting."""

    def __init__(self, length: int, os_page_bytes: int):
        self.length = length
        self.os_page_bytes = os_page_bytes
        self._pages: dict[int, _Page] = {}
        self._lock = threading.Lock()
        self.releases = 0

    def _page(self, n: int) -> _Page:
        page = self._pages.get(n)
        if page is None:
            with self._lock:
                page = self._pages.get(n)
                if page is None:
                    if n * self.os_page_bytes >= self.length:
                        raise IndexError(n)
                    page = _Page(B=memoryview(bytearray(self.os_page_bytes)))
                    self._pages[n] = page
        return page

    def view(self, typecode: str):
        return _SparseView(self, typecode)

    def release(self, offset: int, length: int) -> None:
        self._check_range(offset, length)
        first = offset // self.os_page_bytes
        with self._lock:
            self.releases += 1
            for n in range(first, first + length // self.os_page_bytes):
                self._pages.pop(n, None)

    def resident_bytes(self, snapshot: dict | None = None) -> int:
        return len(self._pages) * self.os_page_bytes

    def resident_pages(self) -> list[int]:
        return sorted(self._pages)


class MmapProvider:
    def __init__(self, os_page_bytes: int = DEFAULT_OS_PAGE_BYTES):
        self.os_page_bytes = check_os_page_bytes(os_page_bytes)

    def reserve(self, length: int, huge: bool = False) -> MmapRegion:
        _check_length(length, self.os_page_bytes)
        return MmapRegion(length, self.os_page_bytes, huge)


class InstrumentedProvider:
    def __init__(self, os_page_bytes: int = DEFAULT_OS_PAGE_BYTES):
        self.os_page_bytes = check_os_page_bytes(os_page_bytes)

    def reserve(self, length: int, huge: bool = False) -> SparseRegion:
        _check_length(length, self.os_page_bytes)
        return SparseRegion(length, self.os_page_bytes)


def _check_length(length: int, os_page_bytes: int) -> None:
    if length <= 0 or length % os_page_bytes:
        raise ValueError(f"region length {length} must be a positive multiple of {os_page_bytes}")


def make_provider(name: str, os_page_bytes: int = DEFAULT_OS_PAGE_BYTES):
    if name == "mmap":
        return MmapProvider(os_page_bytes)
    if name == "instrumented":
        return InstrumentedProvider(os_page_bytes)
    raise ValueError(f"unknown memory provider {name!r}")
