"""Fixed-degree graph with one page per node, traversed through a buffer pool.

Page layout of node ``n`` at pid ``base + n``::

    [0:4]    degree, u32
    [4:8]    node id, u32
    [8:8+4*degree]     neighbor node ids, u32
    [page_size-8:]     payload word, u64 (what a neighbor probe reads)
"""

import struct
from collections import deque

import numpy as np

_HEAD = struct.Struct("<II")
_PAYLOAD = struct.Struct("<Q")


def sample_neighbors(nodes: int, degree: int, seed: int) -> np.ndarray:
    """``(nodes, degree)`` array; each row is distinct uniform picks excluding the row's node."""
    if degree >= nodes:
        raise ValueError("degree must be below the node count")
    rng = np.random.default_rng(seed)
    self_ids = np.arange(nodes, dtype=np.int64)[:, None]

    def draw(rows):
        picks = rng.integers(0, nodes - 1, size=(len(rows), degree), dtype=np.int64)
        return picks + (picks >= self_ids[rows])

    adj = draw(np.arange(nodes))
    while True:
        srt = np.sort(adj, axis=1)
        bad = np.nonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))[0]
        if not len(bad):
            return adj.astype(np.uint32)
        adj[bad] = draw(bad)


def payload(seed: int, node: int) -> int:
    x = (node * 0x9E3779B97F4A7C15 + seed) & 0xFFFFFFFFFFFFFFFF
    x ^= x >> 31
    return x


class PageGraph:
    def __init__(self, pool, base: int, nodes: int, degree: int):
        self.pool = pool
        self.base = base
        self.nodes = nodes
        self.degree = degree
        page_size = pool.config.page_size
        if 8 + 4 * degree > page_size - 8:
            raise ValueError("degree does not fit in a page")
        self.payload_offset = page_size - 8
        self._adj = struct.Struct(f"<{degree}I")
        self.seed = 0

    @classmethod
    def build(cls, pool, nodes: int, degree: int, seed: int, base: int = 0) -> "PageGraph":
        """Write a graph with ``degree`` seeded uniform neighbors per node to ``pool.store``.

        Its pids must not be resident in ``pool`` yet.
        """
        return cls.from_adjacency(pool, sample_neighbors(nodes, degree, seed), seed, base)

    @classmethod
    def from_adjacency(cls, pool, adj, seed: int = 0, base: int = 0) -> "PageGraph":
        """Write the graph given by an ``(nodes, degree)`` neighbor array to ``pool.store``."""
        adj = np.asarray(adj, dtype=np.uint32)
        nodes, degree = adj.shape
        if adj.size and int(adj.max()) >= nodes:
            raise ValueError("neighbor id out of range")
        g = cls(pool, base, nodes, degree)
        page_size = pool.config.page_size
        buf = np.zeros(page_size, dtype=np.uint8)
        head = buf[:8].view("<u4")
        nbrs = buf[8:8 + 4 * degree].view("<u4")
        tail = buf[page_size - 8:].view("<u8")
        store = pool.store
        for n in range(nodes):
            if pool.is_resident(base + n):
                raise ValueError(f"pid {base + n} is already resident")
            head[0] = degree
            head[1] = n
            nbrs[:] = adj[n]
            tail[0] = payload(seed, n)
            store.write_page(base + n, buf)
        if hasattr(store, "sync"):
            store.sync()
        g.seed = seed
        return g

    def neighbors(self, node: int) -> tuple:
        adj = self._adj

        def read(v):
            if _HEAD.unpack_from(v)[0] != self.degree:
                raise ValueError("bad degree")
            return adj.unpack_from(v, 8)

        return self.pool.optimistic_read(self.base + node, read)

    def bfs(self, start: int, max_nodes: int | None = None, prefetch: bool = True):
        """Breadth-first traversal from ``start``.

        Each visited node's neighbors are all probed (one payload read each).
        Returns ``(visit order, payload checksum)``.
        """
        pool = self.pool
        read = pool.optimistic_read
        base = self.base
        adj = self._adj
        off = self.payload_offset
        unpack = _PAYLOAD.unpack_from
        degree = self.degree

        def read_adj(v):
            if _HEAD.unpack_from(v)[0] != degree:
                raise ValueError("bad degree")
            return adj.unpack_from(v, 8)

        def probe(v):
            return unpack(v, off)[0]

        limit = self.nodes if max_nodes is None else max_nodes
        seen = bytearray(self.nodes)
        seen[start] = 1
        order = [start]
        queue = deque([start])
        checksum = 0
        while queue and len(order) < limit:
            node = queue.popleft()
            nbrs = read(base + node, read_adj)
            pids = [base + m for m in nbrs]
            if prefetch:
                pool.prefetch_group(pids, [off] * len(pids))
            for m, pid in zip(nbrs, pids):
                checksum = (checksum + read(pid, probe)) & 0xFFFFFFFFFFFFFFFF
                if not seen[m]:
                    seen[m] = 1
                    order.append(m)
                    queue.append(m)
                    if len(order) >= limit:
                        break
        return order, checksum


def reference_bfs(adj: np.ndarray, start: int, max_nodes: int | None = None) -> list[int]:
    """BFS visit order over an in-memory adjacency array, same tie-breaking as ``PageGraph.bfs``."""
    nodes = len(adj)
    limit = nodes if max_nodes is None else max_nodes
    seen = bytearray(nodes)
    seen[start] = 1
    order = [start]
    queue = deque([start])
    while queue and len(order) < limit:
        node = queue.popleft()
        for m in adj[node].tolist():
            if not seen[m]:
                seen[m] = 1
                order.append(m)
                queue.append(m)
                if len(order) >= limit:
                    break
    return order
