"""Page stores: a sparse file store and a deterministic synthetic store.

File store layout
-----------------
``PATH`` holds page slots; slot ``i`` occupies bytes ``[i * page_size, (i+1) * page_size)``.
``PATH.dir`` maps page ids to slots: a 16-byte header (``b"APDIR001"``, page
size as little-endian u32, four zero bytes) followed by one little-endian u64
page id per allocated slot, in slot order. Unwritten page ids read as zeros.

Synthetic page format
---------------------
``bytes[0:8]``   page id, little-endian
``bytes[8:12]``  CRC-32 (ISO-HDLC, as ``zlib.crc32``) of ``bytes[12:]``
``bytes[12:]``   pseudo-random stream, truncated to fit the page

Stream word ``k`` (``k = 1, 2, ...``) is the SplitMix64 output function applied
to ``(seed ^ (pid * G)) + k * G mod 2**64`` with ``G = 0x9E3779B97F4A7C15``::

    z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27; z *= 0x94D049BB133111EB
    z ^= z >> 31

Words are serialized little-endian.
"""

import ctypes
import mmap
import os
import struct
import threading
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import BatchReadError, PageIOError

GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

DIR_MAGIC = b"APDIR001"
_DIR_HEADER = struct.Struct("<8sI4x")
_U64 = struct.Struct("<Q")
_U32 = struct.Struct("<I")

HEADER_BYTES = 12


class PageStore:
    page_size: int

    def read_page(self, pid: int, dst) -> None:
        raise NotImplementedError

    def write_page(self, pid: int, src) -> None:
        raise NotImplementedError

    def read_pages(self, pids, dsts) -> None:
        """Read a batch; failures are collected into one ``BatchReadError``."""
        if len(pids) != len(dsts):
            raise ValueError("pids and dsts differ in length")
        errors = {}
        for i, (pid, dst) in enumerate(zip(pids, dsts)):
            try:
                self.read_page(pid, dst)
            except Exception as exc:
                errors[i] = exc
        if errors:
            raise BatchReadError(errors)

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def synthetic_words(seed: int, pids, n_words: int) -> np.ndarray:
    """Stream words for each pid, shape ``(len(pids), n_words)``."""
    p = np.asarray(pids, dtype=np.uint64).reshape(-1, 1)
    with np.errstate(over="ignore"):
        g = np.uint64(GOLDEN)
        base = np.uint64(seed & (2**64 - 1)) ^ (p * g)
        z = base + np.arange(1, n_words + 1, dtype=np.uint64) * g
        z ^= z >> np.uint64(30)
        z *= _MIX1
        z ^= z >> np.uint64(27)
        z *= _MIX2
        z ^= z >> np.uint64(31)
    return z


def synthetic_pages(seed: int, pids, page_size: int) -> np.ndarray:
    """Rendered synthetic pages, shape ``(len(pids), page_size)`` of uint8."""
    body = page_size - HEADER_BYTES
    n_words = -(-body // 8)
    words = synthetic_words(seed, pids, n_words).astype("<u8", copy=False)
    out = np.empty((len(words), page_size), dtype=np.uint8)
    out[:, HEADER_BYTES:] = words.view(np.uint8)[:, :body]
    out[:, 0:8] = np.asarray(pids, dtype="<u8").reshape(-1, 1).view(np.uint8)
    for row in out:
        row[8:12] = np.frombuffer(_U32.pack(zlib.crc32(row[HEADER_BYTES:])), dtype=np.uint8)
    return out


def page_checksum_ok(page, pid: int | None = None) -> bool:
    """True if ``page`` carries a valid header CRC (and the given pid, if any)."""
    if pid is not None and _U64.unpack_from(page, 0)[0] != pid:
        return False
    return _U32.unpack_from(page, 8)[0] == zlib.crc32(page[HEADER_BYTES:])


def seal_page(page) -> None:
    """Recompute the header CRC of a page in place."""
    _U32.pack_into(page, 8, zlib.crc32(page[HEADER_BYTES:]))


class SyntheticStore(PageStore):
    """Pages are a pure function of ``(seed, pid)`` until overwritten."""

    def __init__(self, seed: int = 0, page_size: int = 4096):
        if page_size <= HEADER_BYTES:
            raise ValueError("page_size too small for the synthetic header")
        self.seed = seed
        self.page_size = page_size
        self._written: dict[int, bytes] = {}
        self._lock = threading.Lock()

    def generate(self, pid: int) -> bytes:
        return synthetic_pages(self.seed, [pid], self.page_size)[0].tobytes()

    def read_page(self, pid: int, dst) -> None:
        data = self._written.get(pid)
        dst[:] = data if data is not None else self.generate(pid)

    def read_pages(self, pids, dsts) -> None:
        if len(pids) != len(dsts):
            raise ValueError("pids and dsts differ in length")
        fresh = [i for i, pid in enumerate(pids) if pid not in self._written]
        if fresh:
            pages = synthetic_pages(self.seed, [pids[i] for i in fresh], self.page_size)
            for row, i in zip(pages, fresh):
                dsts[i][:] = row.data
        for i, pid in enumerate(pids):
            data = self._written.get(pid)
            if data is not None:
                dsts[i][:] = data

    def write_page(self, pid: int, src) -> None:
        data = bytes(src)
        if len(data) != self.page_size:
            raise ValueError(f"page write of {len(data)} bytes, expected {self.page_size}")
        with self._lock:
            self._written[pid] = data


def _address(buf) -> int | None:
    try:
        c = (ctypes.c_char * 1).from_buffer(buf)
    except (TypeError, ValueError):
        return None
    try:
        return ctypes.addressof(c)
    finally:
        del c


class FileStore(PageStore):
    """Sparse single-file page store with a pid -> slot sidecar directory.

    ``direct=True`` opens the data file with ``O_DIRECT`` so reads reach the
    device instead of the OS page cache; unaligned buffers are staged through
    an aligned per-thread bounce page. Batched reads are split across
    ``io_depth`` threads so device requests overlap.
    """

    def __init__(self, path, page_size: int = 4096, direct: bool = False,
                 flush_on_write: bool = False, io_depth: int = 8):
        self.path = os.fspath(path)
        self.page_size = page_size
        self.direct = direct
        self.flush_on_write = flush_on_write
        self.io_depth = io_depth
        flags = os.O_RDWR | os.O_CREAT
        if direct:
            flags |= getattr(os, "O_DIRECT", 0)
        self._fd = os.open(self.path, flags, 0o644)
        self._index: dict[int, int] = {}
        self._lock = threading.Lock()
        self._dir_fd = self._open_directory(self.path + ".dir")
        self._tls = threading.local()
        self._pool = None
        self._zero = bytes(page_size)

    def _open_directory(self, path: str) -> int:
        fd = os.open(path, os.O_RDWR | os.O_CREAT | os.O_APPEND, 0o644)
        size = os.fstat(fd).st_size
        if size == 0:
            os.write(fd, _DIR_HEADER.pack(DIR_MAGIC, self.page_size))
            return fd
        raw = os.pread(fd, size, 0)
        magic, page_size = _DIR_HEADER.unpack_from(raw, 0)
        if magic != DIR_MAGIC:
            raise ValueError(f"{path}: not a page directory")
        if page_size != self.page_size:
            raise ValueError(f"{path}: page size {page_size}, store opened with {self.page_size}")
        body = raw[_DIR_HEADER.size:]
        n = len(body) // 8
        for slot, (pid,) in enumerate(_U64.iter_unpack(body[: n * 8])):
            self._index[pid] = slot
        return fd

    def __len__(self) -> int:
        return len(self._index)

    def pids(self) -> list[int]:
        return list(self._index)

    def _bounce(self) -> memoryview:
        b = getattr(self._tls, "bounce", None)
        if b is None:
            self._tls.mm = mmap.mmap(-1, self.page_size)
            b = self._tls.bounce = memoryview(self._tls.mm)
        return b

    def _needs_bounce(self, buf) -> bool:
        if not self.direct:
            return False
        addr = _address(buf)
        return addr is None or addr % 4096 != 0

    def read_page(self, pid: int, dst) -> None:
        slot = self._index.get(pid)
        if slot is None:
            dst[:] = self._zero
            return
        target = self._bounce() if self._needs_bounce(dst) else dst
        try:
            n = os.preadv(self._fd, [target], slot * self.page_size)
        except OSError as exc:
            raise PageIOError(pid, "read", exc) from exc
        if n < self.page_size:
            target[n:] = self._zero[n:]
        if target is not dst:
            dst[:] = target

    def _slot_for(self, pid: int) -> int:
        slot = self._index.get(pid)
        if slot is None:
            with self._lock:
                slot = self._index.get(pid)
                if slot is None:
                    slot = len(self._index)
                    os.write(self._dir_fd, _U64.pack(pid))
                    self._index[pid] = slot
        return slot

    def write_page(self, pid: int, src) -> None:
        if len(src) != self.page_size:
            raise ValueError(f"page write of {len(src)} bytes, expected {self.page_size}")
        try:
            slot = self._slot_for(pid)
            if self._needs_bounce(src):
                b = self._bounce()
                b[:] = src
                src = b
            os.pwritev(self._fd, [src], slot * self.page_size)
            if self.flush_on_write:
                os.fsync(self._fd)
                os.fsync(self._dir_fd)
        except OSError as exc:
            raise PageIOError(pid, "write", exc) from exc

    def read_pages(self, pids, dsts) -> None:
        """Read a batch split into chunks of about three pages, at most ``io_depth``.

        The calling thread reads the first chunk itself.
        """
        n = len(pids)
        if n != len(dsts):
            raise ValueError("pids and dsts differ in length")
        k = min(self.io_depth, -(-n // 3))
        if k <= 1:
            return super().read_pages(pids, dsts)
        if self._pool is None:
            with self._lock:
                if self._pool is None:
                    self._pool = ThreadPoolExecutor(self.io_depth - 1, thread_name_prefix="pageio")
        errors = {}

        def chunk(j):
            for i in range(j, n, k):
                try:
                    self.read_page(pids[i], dsts[i])
                except Exception as exc:
                    errors[i] = exc

        futures = [self._pool.submit(chunk, j) for j in range(1, k)]
        chunk(0)
        for fut in futures:
            fut.result()
        if errors:
            raise BatchReadError(errors)

    def sync(self) -> None:
        os.fsync(self._fd)
        os.fsync(self._dir_fd)

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None
        if self._fd >= 0:
            os.close(self._fd)
            os.close(self._dir_fd)
            self._fd = self._dir_fd = -1


def make_store(spec: str, page_size: int = 4096, **kwargs) -> PageStore:
    """Build a store from ``file:PATH`` or ``synthetic:SEED``."""
    kind, _, arg = spec.partition(":")
    if kind == "file" and arg:
        return FileStore(arg, page_size, **kwargs)
    if kind == "synthetic":
        return SyntheticStore(int(arg or "0", 0), page_size)
    raise ValueError(f"store must be file:PATH or synthetic:SEED, got {spec!r}")
