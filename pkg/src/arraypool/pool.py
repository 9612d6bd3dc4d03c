"""The buffer pool: pins, optimistic reads, faults, eviction, group prefetch.

Every page is reached through one 64-bit translation entry (see ``entry``).
The translation backend decides where entries live: in directly indexed
arrays (``"array"``, the default) or in a chained or open-addressing hash
table (``"chained"``, ``"open"``). The pin and fault protocol is the same for
all three.

Fault ordering (per entry)::

    reserve group count -> latch entry -> double-check -> frame (free list or
    evict) -> read page -> publish frame id and unlock

The group count is taken before the latch rather than just before publishing,
because the latch word itself lives in translation memory that a concurrent
hole punch of the same group would otherwise wipe.

Eviction ordering::

    latch victim -> write back if dirty -> clear frame id -> lock group counter
    and decrement -> zero the entry -> release group backing if count is 0 ->
    unlock group counter
"""

import threading
import time
from collections import Counter
from dataclasses import asdict, dataclass, fields, replace

from . import entry as te
from .entry import EXCLUSIVE, FRAME_MASK, INVALID_FRAME, STATE_SHIFT, VERSION_FRAME_MASK
from .errors import BatchReadError, FlushError, PageIOError, PoolExhaustedError
from .frames import FrameStore
from .hashtable import ChainedHashTranslation, OpenAddressingTranslation
from .memory import make_provider
from .translation import ArrayTranslation

_EXCLUSIVE_BITS = EXCLUSIVE << STATE_SHIFT
_FAILED = object()

TRANSLATIONS = ("array", "chained", "open")


@dataclass
class PoolConfig:
    frame_count: int = 1024
    page_size: int = 4096
    suffix_width: int = 32
    os_page_bytes: int = 4096
    translation: str = "array"
    provider: str = "mmap"
    use_huge_frames: bool = True
    prefetch_enabled: bool = True
    optimistic_enabled: bool = True
    optimistic_retries: int = 8
    hash_partitions: int = 64
    max_prefetch_batch: int = 0  # 0: a quarter of the frames

    def __post_init__(self):
        if self.translation not in TRANSLATIONS:
            raise ValueError(f"translation must be one of {TRANSLATIONS}, got {self.translation!r}")
        if self.optimistic_retries < 1:
            raise ValueError("optimistic_retries must be >= 1")


@dataclass
class PoolStats:
    faults: int = 0
    evictions: int = 0
    hole_punches: int = 0
    io_reads: int = 0
    io_writes: int = 0
    prefetch_batches: int = 0
    optimistic_fallbacks: int = 0
    path_cache_hits: int = 0
    path_cache_misses: int = 0
    resident_pages: int = 0
    translation_resident_bytes: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def make_translation(cfg: PoolConfig):
    if cfg.translation == "array":
        return ArrayTranslation(
            cfg.suffix_width, cfg.os_page_bytes, make_provider(cfg.provider, cfg.os_page_bytes)
        )
    if cfg.translation == "chained":
        return ChainedHashTranslation(cfg.frame_count, cfg.hash_partitions)
    return OpenAddressingTranslation(cfg.frame_count, cfg.hash_partitions)


class BufferPool:
    """A fixed set of frames caching pages of ``store``.

    Keyword arguments override fields of ``config``::

        pool = BufferPool(store, frame_count=4096, translation="chained")
    """

    def __init__(self, store, config: PoolConfig | None = None, **overrides):
        cfg = replace(config or PoolConfig(), **overrides)
        if store.page_size != cfg.page_size:
            raise ValueError(f"store page size {store.page_size} != pool page size {cfg.page_size}")
        self.config = cfg
        self.store = store
        self.table = make_translation(cfg)
        self.frames = FrameStore(cfg.frame_count, cfg.page_size, cfg.use_huge_frames, cfg.os_page_bytes)
        self._entry = self.table.entry
        self._optimistic = cfg.optimistic_enabled
        self._gen = self.frames.gen
        self._views = self.frames.views
        self._ref = self.frames.ref
        if self._optimistic:
            self.optimistic_read = self._bind_optimistic_read()
        self._retries = cfg.optimistic_retries
        self._max_batch = cfg.max_prefetch_batch or max(1, cfg.frame_count // 4)
        self._counts = Counter()
        self._count_lock = threading.Lock()
        self._hook_fn = None

    # -- plumbing -------------------------------------------------------------

    @property
    def hook(self):
        """Optional ``callable(point: str)`` invoked at protocol steps and spins."""
        return self._hook_fn

    @hook.setter
    def hook(self, fn):
        self._hook_fn = fn
        self.table.hook = fn

    def _hook(self, point: str) -> None:
        if self._hook_fn is not None:
            self._hook_fn(point)

    def _spin(self, point: str) -> None:
        if self._hook_fn is not None:
            self._hook_fn(point)
        time.sleep(0)

    def _count(self, name: str, n: int = 1) -> None:
        with self._count_lock:
            self._counts[name] += n

    def get_translation_entry(self, pid: int):
        return self._entry(pid)

    # -- exclusive and shared pins ------------------------------------------------

    def pin_exclusive(self, pid: int) -> memoryview:
        """Latch ``pid`` exclusively, faulting it in if needed; returns its frame."""
        entry = self._entry
        words, idx = entry(pid)
        while True:
            w = words[idx]
            f = w & FRAME_MASK
            if f == INVALID_FRAME:
                self._fault(pid, words, idx)
                words, idx = entry(pid)
                continue
            if w >> STATE_SHIFT == 0 and te.cas(words, idx, w, w | _EXCLUSIVE_BITS):
                self.frames.ref[f] = 1
                return self.frames.views[f]
            self._spin("spin:pin")

    def unpin_exclusive(self, pid: int, dirty: bool = False) -> None:
        words, idx = self._entry(pid)
        if dirty:
            self.frames.dirty[words[idx] & FRAME_MASK] = 1
        te.set_unlocked_bump_version(words, idx)

    def pin_shared(self, pid: int) -> memoryview:
        entry = self._entry
        words, idx = entry(pid)
        while True:
            if te.acquire_shared(words, idx):
                f = words[idx] & FRAME_MASK
                self.frames.ref[f] = 1
                return self.frames.views[f].toreadonly()
            if words[idx] & FRAME_MASK == INVALID_FRAME:
                self._fault(pid, words, idx)
                words, idx = entry(pid)
                continue
            self._spin("spin:pin")

    def unpin_shared(self, pid: int) -> None:
        words, idx = self._entry(pid)
        te.release_shared(words, idx)

    def _read_pinned(self, pid: int, read_fn):
        view = self.pin_shared(pid)
        try:
            return read_fn(view)
        finally:
            self.unpin_shared(pid)

    # -- optimistic read ------------------------------------------------------------

    def optimistic_read(self, pid: int, read_fn):
        """Run ``read_fn(frame)`` without latching and return its validated result.

        The result is accepted only if the entry's version and frame id are
        unchanged, the entry is not exclusively held, and the frame has had no
        other occupant in between. ``read_fn`` may see bytes that a writer is
        changing; it must not act on them before returning. Exceptions from an
        invalidated run are discarded. After ``optimistic_retries`` failed
        attempts the read falls back to a shared pin.
        """
        words, idx = self._entry(pid)
        w = words[idx]
        f = w & FRAME_MASK
        if f and w < _EXCLUSIVE_BITS and self._optimistic:
            g = self._gen[f]
            try:
                result = read_fn(self._views[f])
            except Exception:
                result = _FAILED
            if words[idx] == w and self._gen[f] == g and result is not _FAILED:
                self._ref[f] = 1
                return result
        return self._optimistic_slow(pid, read_fn)

    def _bind_optimistic_read(self):
        """Build the per-pool fast path of ``optimistic_read`` over local references.

        For array translation the path-cache hit of ``ArrayTranslation.entry``
        is inlined.
        """
        gen = self._gen
        views = self._views
        ref = self._ref
        entry = self._entry
        slow = self._optimistic_slow
        exclusive = _EXCLUSIVE_BITS

        if self.config.translation != "array":

            def optimistic_read(pid, read_fn):
                words, idx = entry(pid)
                w = words[idx]
                f = w & FRAME_MASK
                if f and w < exclusive:
                    g = gen[f]
                    try:
                        result = read_fn(views[f])
                    except Exception:
                        return slow(pid, read_fn)
                    if words[idx] == w and gen[f] == g:
                        ref[f] = 1
                        return result
                return slow(pid, read_fn)

            return optimistic_read

        table = self.table
        tls = table._tls
        path_cache = table._path_cache
        shift = self.config.suffix_width
        mask = (1 << shift) - 1

        def optimistic_read(pid, read_fn):
            try:
                pc = tls.pc
            except AttributeError:
                pc = path_cache()
            if pc.prefix == pid >> shift:
                pc.hits += 1
                words = pc.words
            else:
                words = entry(pid)[0]
            idx = pid & mask
            w = words[idx]
            f = w & FRAME_MASK
            if f and w < exclusive:
                g = gen[f]
                try:
                    result = read_fn(views[f])
                except Exception:
                    return slow(pid, read_fn)
                if words[idx] == w and gen[f] == g:
                    ref[f] = 1
                    return result
            return slow(pid, read_fn)

        return optimistic_read

    def _optimistic_slow(self, pid: int, read_fn):
        if not self._optimistic:
            return self._read_pinned(pid, read_fn)
        entry = self._entry
        words, idx = entry(pid)
        gen = self._gen
        views = self._views
        for _ in range(self._retries):
            w = words[idx]
            f = w & FRAME_MASK
            if f == INVALID_FRAME:
                self._fault(pid, words, idx)
                words, idx = entry(pid)
                continue
            if w >= _EXCLUSIVE_BITS:
                self._spin("spin:optimistic")
                continue
            g = gen[f]
            try:
                result = read_fn(views[f])
            except Exception:
                w2 = words[idx]
                if not (w2 ^ w) & VERSION_FRAME_MASK and w2 < _EXCLUSIVE_BITS and gen[f] == g:
                    raise
                continue
            w2 = words[idx]
            if not (w2 ^ w) & VERSION_FRAME_MASK and w2 < _EXCLUSIVE_BITS and gen[f] == g:
                self._ref[f] = 1
                return result
        self._count("optimistic_fallbacks")
        return self._read_pinned(pid, read_fn)

    # -- fault and eviction ---------------------------------------------------------

    def _fault(self, pid: int, words, idx: int) -> None:
        table = self.table
        table.reserve(pid, idx)
        self._hook("fault:reserved")
        while not te.try_lock_exclusive(words, idx):
            self._spin("spin:fault")
        self._hook("fault:locked")
        if words[idx] & FRAME_MASK != INVALID_FRAME or not table.is_live(words, idx):
            te.unlock(words, idx)
            table.unreserve(pid, idx)
            return
        frames = self.frames
        try:
            f = self._obtain_frame()
        except BaseException:
            table.abort_fault(pid, words, idx)
            raise
        self._hook("fault:frame")
        frames.owner[f] = pid
        try:
            self.store.read_page(pid, frames.views[f])
        except BaseException as exc:
            frames.free_frame(f)
            table.abort_fault(pid, words, idx)
            if isinstance(exc, PageIOError) or not isinstance(exc, Exception):
                raise
            raise PageIOError(pid, "read", exc) from exc
        self._hook("fault:read")
        frames.gen[f] += 1
        frames.ref[f] = 1
        te.set_frame_and_unlock(words, idx, f)
        with self._count_lock:
            self._counts["faults"] += 1
            self._counts["io_reads"] += 1
        self._hook("fault:installed")

    def _claim(self, f: int, owner: int):
        handle = self.table.locate(owner)
        if handle is None:
            return None
        words, idx = handle
        w = words[idx]
        if w & FRAME_MASK != f or w >> STATE_SHIFT != 0:
            return None
        if not te.cas(words, idx, w, w | _EXCLUSIVE_BITS):
            return None
        return handle

    def _obtain_frame(self) -> int:
        frames = self.frames
        f = frames.allocate_frame()
        if f != INVALID_FRAME:
            return f
        try:
            return self.evict_victim()
        except PoolExhaustedError:
            # a concurrent evict_page may have freed a frame during the sweep
            f = frames.allocate_frame()
            if f == INVALID_FRAME:
                raise
            return f

    def _evict_claimed(self, f: int, victim: int, handle, free: bool = False) -> None:
        words, idx = handle
        frames = self.frames
        self._hook("evict:locked")
        if frames.dirty[f]:
            try:
                self.store.write_page(victim, frames.views[f])
            except BaseException as exc:
                te.unlock(words, idx)
                if isinstance(exc, PageIOError) or not isinstance(exc, Exception):
                    raise
                raise PageIOError(victim, "write", exc) from exc
            frames.dirty[f] = 0
            self._count("io_writes")
        self._hook("evict:written")
        te.set_frame_invalid(words, idx)
        frames.gen[f] += 1
        if free:
            frames.free_frame(f)
        else:
            frames.owner[f] = None
            frames.ref[f] = 0
        self._hook("evict:invalidated")
        self.table.evict_entry(victim, words, idx)
        self._count("evictions")
        self._hook("evict:done")

    def evict_victim(self) -> int:
        """Evict one CLOCK-selected page and return its now-unowned frame."""
        f, victim, handle = self.frames.select_victim_page(self._claim)
        self._evict_claimed(f, victim, handle)
        return f

    def evict_page(self, pid: int) -> bool:
        """Evict ``pid`` if it is resident and unpinned; its frame goes to the free list."""
        handle = self.table.locate(pid)
        if handle is None:
            return False
        words, idx = handle
        f = words[idx] & FRAME_MASK
        if f == INVALID_FRAME or self._claim(f, pid) is None:
            return False
        self._evict_claimed(f, pid, handle, free=True)
        return True

    # -- group prefetch -------------------------------------------------------------

    def prefetch_group(self, pids, offsets=None) -> int:
        """Announce upcoming accesses to ``pids``; loads the non-resident ones in one batch.

        ``offsets`` are the in-page byte offsets the caller will touch. Resident
        pages need no work here: Python has no cache-prefetch instruction, so
        resolving their entries is the whole hint. Returns the number of pages
        submitted for loading.
        """
        if not self.config.prefetch_enabled:
            return 0
        if offsets is None:
            offsets = (0,) * len(pids)
        elif len(offsets) != len(pids):
            raise ValueError("pids and offsets differ in length")
        page_size = self.config.page_size
        peek = self.table.peek
        handles = [peek(pid) for pid in pids]
        missing = []
        for pid, handle, off in zip(pids, handles, offsets):
            if not 0 <= off < page_size:
                raise ValueError(f"offset {off} outside page")
            if handle is None:
                missing.append(pid)
                continue
            words, idx = handle
            if words[idx] & FRAME_MASK == INVALID_FRAME:
                missing.append(pid)
        if missing:
            return self.read_pages(missing)
        return 0

    def read_pages(self, pids) -> int:
        """Make ``pids`` resident with batched store reads.

        One store batch covers up to ``max_prefetch_batch`` pages (a quarter of
        the frames by default), so a batch cannot evict its own pages. Pages
        already resident or being faulted by another thread are skipped. A page
        whose read fails is left non-resident; the next pin retries it and
        surfaces the error. Returns the number of pages submitted.
        """
        pids = list(dict.fromkeys(pids))
        step = self._max_batch
        return sum(self._read_batch(pids[i:i + step]) for i in range(0, len(pids), step))

    def _read_batch(self, pids) -> int:
        table = self.table
        frames = self.frames
        entry = self._entry
        claimed = []
        pending_exc = None
        for pid in pids:
            words, idx = entry(pid)
            if words[idx] & FRAME_MASK != INVALID_FRAME:
                continue
            table.reserve(pid, idx)
            if not te.try_lock_exclusive(words, idx):
                table.unreserve(pid, idx)
                continue
            if words[idx] & FRAME_MASK != INVALID_FRAME or not table.is_live(words, idx):
                te.unlock(words, idx)
                table.unreserve(pid, idx)
                continue
            try:
                f = self._obtain_frame()
            except PoolExhaustedError:
                table.abort_fault(pid, words, idx)
                break
            except BaseException as exc:
                table.abort_fault(pid, words, idx)
                pending_exc = exc
                break
            frames.owner[f] = pid
            claimed.append((pid, words, idx, f))
        if not claimed:
            if pending_exc is not None:
                raise pending_exc
            return 0
        failed = set()
        try:
            self.store.read_pages([c[0] for c in claimed], [frames.views[c[3]] for c in claimed])
        except BatchReadError as exc:
            failed = set(exc.errors)
        except Exception:
            failed = set(range(len(claimed)))
        for i, (pid, words, idx, f) in enumerate(claimed):
            if i in failed:
                frames.free_frame(f)
                table.abort_fault(pid, words, idx)
                continue
            frames.gen[f] += 1
            frames.ref[f] = 1
            te.set_frame_and_unlock(words, idx, f)
        loaded = len(claimed) - len(failed)
        with self._count_lock:
            self._counts["faults"] += loaded
            self._counts["io_reads"] += loaded
            self._counts["prefetch_batches"] += 1
        if pending_exc is not None:
            raise pending_exc
        return len(claimed)

    # -- flushing and accounting ---------------------------------------------------

    def flush_all(self) -> int:
        """Write back every dirty frame. Returns the number of pages written."""
        frames = self.frames
        errors = []
        written = 0
        for f in range(1, frames.frame_count + 1):
            if not frames.dirty[f]:
                continue
            pid = frames.owner[f]
            if pid is None:
                continue
            handle = self.table.locate(pid)
            if handle is None:
                continue
            words, idx = handle
            while True:
                w = words[idx]
                if w & FRAME_MASK != f:
                    handle = None
                    break
                if w >> STATE_SHIFT == 0 and te.cas(words, idx, w, w | _EXCLUSIVE_BITS):
                    break
                self._spin("spin:flush")
            if handle is None:
                continue
            try:
                if frames.dirty[f]:
                    self.store.write_page(pid, frames.views[f])
                    frames.dirty[f] = 0
                    written += 1
            except Exception as exc:
                errors.append(exc if isinstance(exc, PageIOError) else PageIOError(pid, "write", exc))
            finally:
                te.unlock(words, idx)
        if written:
            self._count("io_writes", written)
        if errors:
            raise FlushError(errors)
        return written

    def resident_pids(self) -> list[int]:
        return [p for p in self.frames.owner[1:] if p is not None]

    def is_resident(self, pid: int) -> bool:
        loc = self.table.locate(pid)
        if loc is None:
            return False
        words, idx = loc
        return words[idx] & FRAME_MASK != INVALID_FRAME

    def resident_count(self) -> int:
        return sum(1 for p in self.frames.owner[1:] if p is not None)

    def translation_resident_bytes(self) -> int:
        return self.table.resident_bytes()

    def stats(self) -> PoolStats:
        with self._count_lock:
            counts = dict(self._counts)
        hits, misses = self.table.path_cache_counts()
        names = {f.name for f in fields(PoolStats)}
        return PoolStats(
            **{k: v for k, v in counts.items() if k in names},
            hole_punches=self.table.hole_punches,
            path_cache_hits=hits,
            path_cache_misses=misses,
            resident_pages=self.resident_count(),
            translation_resident_bytes=self.table.resident_bytes(),
        )

    def close(self, flush: bool = True) -> None:
        if self.frames is None:
            return
        try:
            if flush:
                self.flush_all()
        finally:
            self.table.close()
            self.frames.close()
            self.frames = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
