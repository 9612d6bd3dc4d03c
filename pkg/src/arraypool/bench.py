"""Workload drivers for the buffer pool.

Every runner takes a ``BenchConfig`` and returns a ``BenchReport``. A run has
an untimed setup (building data, optionally warming the pool) followed by a
timed phase in which ``threads`` workers share one pool. Operation streams are
derived from ``seed`` and the worker index only.

Report fields (JSON):

``workload``, ``config``
    what ran
``ops``, ``wall_time_s``, ``throughput_ops_s``
    timed-phase operation count, duration and rate
``latency_us``
    ``p50``, ``p95``, ``p99``, ``max`` of per-operation latency
``stats``
    pool counters after the run (see ``PoolStats``)
``residency``
    ``[op_index, translation_resident_bytes, resident_pages]`` samples
``result``
    workload-specific checks (sums, visited counts, reclamation)
"""

import csv
import json
import struct
import threading
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .pool import TRANSLATIONS, BufferPool
from .store import SyntheticStore, make_store, synthetic_pages
from .structures.btree import BTree
from .structures.graph import PageGraph

WORKLOADS = ("seqscan", "randscan", "pointlookup", "graphbfs", "ycsb-like")

_DEFAULT_SCALE = {
    "seqscan": 16384,
    "randscan": 16384,
    "pointlookup": 1_000_000,
    "graphbfs": 100_000,
    "ycsb-like": 262_144,
}
_DEFAULT_ITERATIONS = {
    "seqscan": 3,
    "randscan": 3,
    "pointlookup": 200_000,
    "graphbfs": 1,
    "ycsb-like": 81_920,
}
TREE_BASE = 1 << 24


@dataclass
class BenchConfig:
    workload: str = "seqscan"
    translation: str = "array"
    threads: int = 1
    frames: int | None = None  # None: enough to hold the whole dataset
    page_size: int = 4096
    scale: int | None = None  # pages, records or nodes depending on the workload
    prefetch: bool = True
    optimistic: bool = True
    iterations: int | None = None  # per worker
    duration: float | None = None  # seconds; overrides iterations when set
    seed: int = 0
    store: str = "synthetic:0"
    out: str | None = None
    residency_csv: str | None = None
    warm: bool = True  # fault the dataset in before timing
    provider: str = "mmap"
    direct_io: bool = False
    row_size: int = 1024
    column_offset: int = 16
    record_size: int = 128
    degree: int = 44
    skew: float = 0.99
    insert_fraction: float = 0.05
    window: int | None = None  # read-latest recency window; None: frames // 2
    scatter_reads: int | None = None  # ycsb-like warm-up reads; None: 4 * frames
    sample_every: int = 1024

    def __post_init__(self):
        if self.workload not in WORKLOADS:
            raise ValueError(f"workload must be one of {WORKLOADS}, got {self.workload!r}")
        if self.translation not in TRANSLATIONS:
            raise ValueError(f"translation must be one of {TRANSLATIONS}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.scale is None:
            self.scale = _DEFAULT_SCALE[self.workload]
        if self.scale < 1:
            raise ValueError("scale must be >= 1")
        if self.iterations is None:
            self.iterations = _DEFAULT_ITERATIONS[self.workload]
        if self.frames is not None and self.frames < 8:
            raise ValueError("frames must be >= 8")
        if self.workload in ("seqscan", "randscan"):
            if self.page_size % self.row_size or self.column_offset + 8 > self.row_size:
                raise ValueError("row_size must divide page_size and hold the column")
        if self.page_size % self.record_size:
            raise ValueError("record_size must divide page_size")
        if not 0 <= self.insert_fraction <= 1:
            raise ValueError("insert_fraction must be in [0, 1]")


@dataclass
class BenchReport:
    workload: str
    config: dict
    ops: int = 0
    wall_time_s: float = 0.0
    throughput_ops_s: float = 0.0
    latency_us: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    residency: list = field(default_factory=list)
    result: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def write(self, path: str) -> None:
        with open(path, "w") as f:
            f.write(self.to_json())
            f.write("\n")

    def write_residency_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["op_index", "translation_resident_bytes", "resident_pages"])
            w.writerows(self.residency)


# -- shared plumbing ---------------------------------------------------------------


def _open_store(cfg: BenchConfig):
    if cfg.store.startswith("file:"):
        return make_store(cfg.store, cfg.page_size, direct=cfg.direct_io)
    return make_store(cfg.store, cfg.page_size)


def _make_pool(cfg: BenchConfig, store, frames: int) -> BufferPool:
    return BufferPool(
        store,
        frame_count=frames,
        page_size=cfg.page_size,
        translation=cfg.translation,
        provider=cfg.provider,
        prefetch_enabled=cfg.prefetch,
        optimistic_enabled=cfg.optimistic,
    )


def _percentiles(lat: list[float]) -> dict:
    if not lat:
        return {}
    a = np.asarray(lat) * 1e6
    p50, p95, p99 = np.percentile(a, [50, 95, 99])
    return {"p50": float(p50), "p95": float(p95), "p99": float(p99), "max": float(a.max())}


def _run_workers(cfg: BenchConfig, work) -> tuple[int, float, list]:
    """Run ``work(t, deadline, lat)`` on each worker; returns (ops, seconds, latencies)."""
    lats: list[list] = [[] for _ in range(cfg.threads)]
    counts = [0] * cfg.threads
    errors: list[BaseException] = []
    start_gate = threading.Barrier(cfg.threads + 1)

    def body(t):
        try:
            start_gate.wait()
            deadline = None if cfg.duration is None else time.perf_counter() + cfg.duration
            counts[t] = work(t, deadline, lats[t])
        except BaseException as e:  # surfaced below
            errors.append(e)

    workers = [threading.Thread(target=body, args=(t,), daemon=True) for t in range(cfg.threads)]
    for w in workers:
        w.start()
    start_gate.wait()
    t0 = time.perf_counter()
    for w in workers:
        w.join()
    elapsed = time.perf_counter() - t0
    if errors:
        raise errors[0]
    return sum(counts), elapsed, [x for lat in lats for x in lat]


def _finish(cfg: BenchConfig, pool, ops, elapsed, lat, result, residency=None) -> BenchReport:
    stats = pool.stats().as_dict()
    if residency is None:
        residency = [[0, stats["translation_resident_bytes"], stats["resident_pages"]]]
    report = BenchReport(
        workload=cfg.workload,
        config=asdict(cfg),
        ops=ops,
        wall_time_s=elapsed,
        throughput_ops_s=ops / elapsed if elapsed > 0 else 0.0,
        latency_us=_percentiles(lat),
        stats=stats,
        residency=residency,
        result=result,
    )
    if cfg.out:
        report.write(cfg.out)
    if cfg.residency_csv:
        report.write_residency_csv(cfg.residency_csv)
    return report


def _loop(cfg: BenchConfig, deadline, lat, op) -> int:
    """Call ``op(i)`` ``cfg.iterations`` times, or until ``deadline``; records latency."""
    clock = time.perf_counter
    n = 0
    while True:
        if deadline is None:
            if n >= cfg.iterations:
                return n
        elif clock() >= deadline:
            return n
        t = clock()
        op(n)
        lat.append(clock() - t)
        n += 1


def _warm(pool, pids, prefetch: bool) -> None:
    pids = list(pids)
    if prefetch:
        pool.read_pages(pids)
    probe = _first_word
    for pid in pids:
        pool.optimistic_read(pid, probe)


def _first_word(v):
    return v[0]


# -- scans ----------------------------------------------------------------------------


def column_struct(page_size: int, row_size: int, column_offset: int) -> struct.Struct:
    rows = page_size // row_size
    gap = row_size - 8
    fmt = f"<{column_offset}x" + f"Q{gap}x" * (rows - 1) + "Q"
    return struct.Struct(fmt)


def expected_column_sum(seed: int, pids, page_size: int, row_size: int, column_offset: int) -> int:
    """Sum (mod 2**64) of the column over synthetic pages, computed without the pool."""
    total = 0
    pids = np.asarray(pids, dtype=np.uint64)
    offs = np.arange(page_size // row_size) * row_size + column_offset
    for i in range(0, len(pids), 4096):
        pages = synthetic_pages(seed, pids[i:i + 4096], page_size)
        cols = np.stack([pages[:, o:o + 8].copy().view("<u8")[:, 0] for o in offs], axis=1)
        total = (total + int(cols.sum(dtype=np.uint64))) & 0xFFFFFFFFFFFFFFFF
    return total


def scan_order(cfg: BenchConfig) -> list[int]:
    pids = list(range(cfg.scale))
    if cfg.workload == "randscan":
        rng = np.random.default_rng(cfg.seed)
        pids = rng.permutation(cfg.scale).tolist()
    return pids


def _run_scan(cfg: BenchConfig) -> BenchReport:
    store = _open_store(cfg)
    frames = cfg.frames or cfg.scale + 64
    pool = _make_pool(cfg, store, frames)
    try:
        pids = scan_order(cfg)
        if cfg.warm:
            _warm(pool, range(cfg.scale), cfg.prefetch)
        # copy the column values out under validation, then aggregate
        unpack = column_struct(cfg.page_size, cfg.row_size, cfg.column_offset).unpack_from
        sums = [0] * cfg.threads

        def work(t, deadline, lat):
            read = pool.optimistic_read

            def one_scan(_):
                total = 0
                for pid in pids:
                    total += sum(read(pid, unpack))
                sums[t] = total & 0xFFFFFFFFFFFFFFFF

            return _loop(cfg, deadline, lat, one_scan)

        ops, elapsed, lat = _run_workers(cfg, work)
        result = {"sum": sums[0], "pages_per_scan": cfg.scale,
                  "pages_per_s": ops * cfg.scale / elapsed if elapsed else 0.0}
        return _finish(cfg, pool, ops, elapsed, lat, result)
    finally:
        pool.close(flush=False)
        store.close()


def run_seqscan(cfg: BenchConfig) -> BenchReport:
    """Sum one column of every row over consecutive pids."""
    if cfg.workload != "seqscan":
        cfg = BenchConfig(**{**asdict(cfg), "workload": "seqscan"})
    return _run_scan(cfg)


def run_randscan(cfg: BenchConfig) -> BenchReport:
    """Same as ``run_seqscan`` over a seeded permutation of the pids."""
    if cfg.workload != "randscan":
        cfg = BenchConfig(**{**asdict(cfg), "workload": "randscan"})
    return _run_scan(cfg)


# -- point lookups ----------------------------------------------------------------------


def run_pointlookup(cfg: BenchConfig) -> BenchReport:
    """Uniform lookups in a B+tree over ``scale`` records, each followed by a record read."""
    if cfg.workload != "pointlookup":
        cfg = BenchConfig(**{**asdict(cfg), "workload": "pointlookup"})
    store = _open_store(cfg)
    per_page = cfg.page_size // cfg.record_size
    heap_pages = -(-cfg.scale // per_page)
    cap = (cfg.page_size // 8 - 5) // 2
    tree_pages = 2 * (-(-cfg.scale // cap)) + 16
    frames = cfg.frames or heap_pages + tree_pages + 64
    pool = _make_pool(cfg, store, frames)
    try:
        tree = BTree.bulk_load(pool, TREE_BASE, ((k, k) for k in range(cfg.scale)))
        if cfg.warm:
            _warm(pool, range(heap_pages), cfg.prefetch)
        rec = struct.Struct("<Q").unpack_from
        rsize = cfg.record_size
        misses = [0] * cfg.threads
        checks = [0] * cfg.threads

        readers = [(lambda v, o=o: rec(v, o)[0]) for o in range(0, cfg.page_size, rsize)]

        def work(t, deadline, lat):
            rng = np.random.default_rng([cfg.seed, t])
            keys = rng.integers(0, cfg.scale, size=max(cfg.iterations, 1 << 16)).tolist()
            nkeys = len(keys)
            lookup = tree.lookup
            read = pool.optimistic_read
            clock = time.perf_counter
            record = lat.append
            acc = 0
            n = 0
            while (n < cfg.iterations) if deadline is None else (clock() < deadline):
                t0 = clock()
                rid = lookup(keys[n % nkeys])
                if rid is None:
                    misses[t] += 1
                else:
                    acc += read(rid // per_page, readers[rid % per_page])
                record(clock() - t0)
                n += 1
            checks[t] = acc & 0xFFFFFFFFFFFFFFFF
            return n

        ops, elapsed, lat = _run_workers(cfg, work)
        result = {"misses": sum(misses), "record_checksum": checks[0], "heap_pages": heap_pages}
        return _finish(cfg, pool, ops, elapsed, lat, result)
    finally:
        pool.close(flush=False)
        store.close()


# -- graph traversal --------------------------------------------------------------------------


def bfs_starts(cfg: BenchConfig) -> list[int]:
    rng = np.random.default_rng(cfg.seed)
    return rng.choice(cfg.scale, size=min(cfg.threads, cfg.scale), replace=False).tolist() * (
        -(-cfg.threads // cfg.scale)
    )


def run_graphbfs(cfg: BenchConfig) -> BenchReport:
    """Full BFS per worker over a seeded random graph, probing every neighbor."""
    if cfg.workload != "graphbfs":
        cfg = BenchConfig(**{**asdict(cfg), "workload": "graphbfs"})
    store = _open_store(cfg)
    frames = cfg.frames or cfg.scale + 64
    pool = _make_pool(cfg, store, frames)
    try:
        graph = PageGraph.build(pool, cfg.scale, cfg.degree, cfg.seed)
        if cfg.warm:
            _warm(pool, range(min(cfg.scale, frames)), cfg.prefetch)
        starts = bfs_starts(cfg)
        visited = [0] * cfg.threads
        checks = [0] * cfg.threads

        def work(t, deadline, lat):
            def op(i):
                order, checks[t] = graph.bfs(starts[t], prefetch=cfg.prefetch)
                visited[t] = len(order)

            return _loop(cfg, deadline, lat, op)

        ops, elapsed, lat = _run_workers(cfg, work)
        probes = ops * cfg.scale * cfg.degree
        result = {"visited": visited, "checksum": checks[0],
                  "probes_per_s": probes / elapsed if elapsed else 0.0}
        return _finish(cfg, pool, ops, elapsed, lat, result)
    finally:
        pool.close(flush=False)
        store.close()


# -- insert then read-latest ---------------------------------------------------------------------


def zipf_cdf(n: int, theta: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** theta
    c = np.cumsum(w)
    return c / c[-1]


def run_ycsb_like(cfg: BenchConfig) -> BenchReport:
    """Insert-and-read-latest mix that lets old regions of the pid space go cold.

    Setup scatters ``scatter_reads`` uniform reads over the initial ``scale``
    records, so every entry group gets touched. The timed phase mixes
    ``insert_fraction`` appends with reads whose distance from the newest
    record is Zipf(``skew``) over a ``window`` of recent records.
    """
    if cfg.workload != "ycsb-like":
        cfg = BenchConfig(**{**asdict(cfg), "workload": "ycsb-like"})
    store = _open_store(cfg)
    frames = cfg.frames or 4096
    window = cfg.window or max(1, frames // 2)
    pool = _make_pool(cfg, store, frames)
    residency = []
    res_lock = threading.Lock()
    op_index = [0]

    def sample():
        with res_lock:
            residency.append([op_index[0], pool.translation_resident_bytes(), pool.resident_count()])

    try:
        sample()
        rng = np.random.default_rng(cfg.seed)
        scatter = cfg.scatter_reads if cfg.scatter_reads is not None else 4 * frames
        for i, pid in enumerate(rng.integers(0, cfg.scale, size=scatter).tolist()):
            pool.optimistic_read(pid, _first_word)
            if (i + 1) % cfg.sample_every == 0:
                sample()
        sample()
        peak_setup = max(r[1] for r in residency)

        latest = [cfg.scale - 1]
        latest_lock = threading.Lock()
        cdf = zipf_cdf(window, cfg.skew)
        stamp = struct.Struct("<QQ")

        def work(t, deadline, lat):
            r = np.random.default_rng([cfg.seed, t, 1])
            n_pre = max(cfg.iterations, 1 << 14)
            kinds = (r.random(n_pre) < cfg.insert_fraction).tolist()
            dists = np.searchsorted(cdf, r.random(n_pre)).tolist()

            def op(i):
                j = i % n_pre
                if kinds[j]:
                    with latest_lock:
                        latest[0] += 1
                        pid = latest[0]
                    v = pool.pin_exclusive(pid)
                    stamp.pack_into(v, 0, pid, i)
                    pool.unpin_exclusive(pid, dirty=True)
                else:
                    pid = max(0, latest[0] - dists[j])
                    pool.optimistic_read(pid, _first_word)
                if t == 0:
                    op_index[0] += 1
                    if op_index[0] % cfg.sample_every == 0:
                        sample()

            return _loop(cfg, deadline, lat, op)

        ops, elapsed, lat = _run_workers(cfg, work)
        sample()
        peak = max(r[1] for r in residency)
        final = residency[-1][1]
        filled = next((i for i, r in enumerate(residency) if r[2] >= frames), len(residency))
        steady = [r[1] for r in residency[filled:]]
        spread = (max(steady) - min(steady)) / max(steady) if steady and max(steady) else 0.0
        result = {
            "peak_translation_bytes": peak,
            "peak_after_setup_bytes": peak_setup,
            "final_translation_bytes": final,
            "reclamation": 1.0 - final / peak if peak else 0.0,
            "steady_state_spread": spread,
            "inserted": latest[0] - (cfg.scale - 1),
            "group_count_total": pool.table.group_count_total(),
            "resident_pages": pool.resident_count(),
        }
        return _finish(cfg, pool, ops, elapsed, lat, result, residency)
    finally:
        pool.close(flush=False)
        store.close()


RUNNERS = {
    "seqscan": run_seqscan,
    "randscan": run_randscan,
    "pointlookup": run_pointlookup,
    "graphbfs": run_graphbfs,
    "ycsb-like": run_ycsb_like,
}


def run(cfg: BenchConfig) -> BenchReport:
    return RUNNERS[cfg.workload](cfg)
