"""B+tree of unsigned 64-bit keys and values stored in pool pages.

Node layout, as little-endian u64 words::

    [0]  flags: bit 0 leaf, bit 1 has high key, bits 8..23 key count
    [1]  high key (exclusive upper bound of the node's keys), if flagged
    [2]  right sibling pid, 0 if none
    [3]  reserved
    [4 : 4+cap]              keys
    [4+cap : 4+2*cap+1]      leaf values, or the count+1 children of an inner node

Readers descend with optimistic reads and follow right links when a key is at
or beyond a node's high key, so a split that lands between reading a parent
and reading its child is harmless. Writers use exclusive latch coupling from
the meta page down, releasing ancestors once a node has room for one more key.
"""

import threading
from bisect import bisect_left, bisect_right

LEAF = 1
HAS_HIGH = 2
HEADER_WORDS = 4

_RIGHT, _CHILD, _FOUND, _MISSING = range(4)


def _count(flags: int) -> int:
    return (flags >> 8) & 0xFFFF


def _flags(leaf: bool, has_high: bool, count: int) -> int:
    return (LEAF if leaf else 0) | (HAS_HIGH if has_high else 0) | (count << 8)


class _Node:
    """Decoded copy of a node, for the write path."""

    __slots__ = ("leaf", "has_high", "high", "right", "keys", "vals")

    def __init__(self, leaf, has_high=False, high=0, right=0, keys=None, vals=None):
        self.leaf = leaf
        self.has_high = has_high
        self.high = high
        self.right = right
        self.keys = keys if keys is not None else []
        self.vals = vals if vals is not None else []

    @classmethod
    def load(cls, q, cap: int) -> "_Node":
        flags = q[0]
        n = _count(flags)
        leaf = bool(flags & LEAF)
        keys = list(q[HEADER_WORDS:HEADER_WORDS + n])
        nv = n if leaf else n + 1
        vals = list(q[HEADER_WORDS + cap:HEADER_WORDS + cap + nv])
        return cls(leaf, bool(flags & HAS_HIGH), q[1], q[2], keys, vals)

    def store(self, q, cap: int) -> None:
        n = len(self.keys)
        q[HEADER_WORDS:HEADER_WORDS + n] = _qarr(self.keys)
        q[HEADER_WORDS + cap:HEADER_WORDS + cap + len(self.vals)] = _qarr(self.vals)
        q[1] = self.high if self.has_high else 0
        q[2] = self.right
        q[3] = 0
        q[0] = _flags(self.leaf, self.has_high, n)


def _qarr(values):
    import array

    return memoryview(array.array("Q", values))


class BTree:
    """A B+tree whose pages are pids ``base``, ``base+1``, ... of ``pool``.

    ``base`` holds the meta page (root pid, next free pid). Call ``create`` on
    a fresh pid range, or ``open`` to attach to an existing tree.
    """

    def __init__(self, pool, base: int):
        self.pool = pool
        self.base = base
        self.meta_pid = base
        self.cap = (pool.config.page_size // 8 - HEADER_WORDS - 1) // 2
        if self.cap < 3:
            raise ValueError("page too small for a B+tree node")
        self._alloc_lock = threading.Lock()
        self._next_pid = None
        # a stale cached root is still a valid entry point: right links cover splits
        self._root = None

    # -- lifecycle ---------------------------------------------------------------

    @classmethod
    def create(cls, pool, base: int) -> "BTree":
        tree = cls(pool, base)
        root = base + 1
        tree._next_pid = base + 2
        q = pool.pin_exclusive(root).cast("Q")
        _Node(leaf=True).store(q, tree.cap)
        pool.unpin_exclusive(root, dirty=True)
        tree._write_meta(root)
        return tree

    @classmethod
    def open(cls, pool, base: int) -> "BTree":
        tree = cls(pool, base)
        _, tree._next_pid = pool.optimistic_read(base, lambda v: tuple(v.cast("Q")[0:2]))
        return tree

    def _write_meta(self, root: int) -> None:
        q = self.pool.pin_exclusive(self.meta_pid).cast("Q")
        q[0] = root
        self._root = root
        q[1] = self._next_pid
        self.pool.unpin_exclusive(self.meta_pid, dirty=True)

    def _allocate(self) -> int:
        with self._alloc_lock:
            pid = self._next_pid
            self._next_pid += 1
            return pid

    def root(self) -> int:
        root = self._root
        if root is None:
            root = self._root = self.pool.optimistic_read(self.meta_pid, lambda v: v.cast("Q")[0])
        return root

    # -- reads -----------------------------------------------------------------------

    def _step(self, key: int):
        cap = self.cap
        vbase = HEADER_WORDS + cap

        def search(v):
            q = v.cast("Q")
            flags = q[0]
            n = (flags >> 8) & 0xFFFF
            if flags & HAS_HIGH and key >= q[1]:
                return _RIGHT, q[2]
            if flags & LEAF:
                i = bisect_left(q, key, HEADER_WORDS, HEADER_WORDS + n)
                if i < HEADER_WORDS + n and q[i] == key:
                    return _FOUND, q[i + cap]
                return _MISSING, 0
            i = bisect_right(q, key, HEADER_WORDS, HEADER_WORDS + n)
            return _CHILD, q[vbase + i - HEADER_WORDS]

        return search

    def lookup(self, key: int):
        """Value stored under ``key``, or ``None``."""
        read = self.pool.optimistic_read
        search = self._step(key)
        pid = self.root()
        while True:
            kind, x = read(pid, search)
            if kind == _FOUND:
                return x
            if kind == _MISSING:
                return None
            pid = x

    def _find_leaf(self, key: int) -> int:
        read = self.pool.optimistic_read
        cap = self.cap
        vbase = HEADER_WORDS + cap

        def route(v):
            q = v.cast("Q")
            flags = q[0]
            if flags & HAS_HIGH and key >= q[1]:
                return _RIGHT, q[2]
            if flags & LEAF:
                return _FOUND, 0
            n = (flags >> 8) & 0xFFFF
            i = bisect_right(q, key, HEADER_WORDS, HEADER_WORDS + n)
            return _CHILD, q[vbase + i - HEADER_WORDS]

        pid = self.root()
        while True:
            kind, x = read(pid, route)
            if kind == _FOUND:
                return pid
            pid = x

    def range(self, lo: int, n: int) -> list[tuple[int, int]]:
        """Up to ``n`` ``(key, value)`` pairs with key >= ``lo``, ascending."""
        out: list[tuple[int, int]] = []
        pid = self._find_leaf(lo)
        cap = self.cap

        def scan(v):
            q = v.cast("Q")
            cnt = _count(q[0])
            i = bisect_left(q, lo, HEADER_WORDS, HEADER_WORDS + cnt)
            keys = q[i:HEADER_WORDS + cnt].tolist()
            vals = q[i + cap:HEADER_WORDS + cap + cnt].tolist()
            return list(zip(keys, vals)), q[2]

        while pid and len(out) < n:
            items, pid = self.pool.optimistic_read(pid, scan)
            if out:
                items = [kv for kv in items if kv[0] > out[-1][0]]
            out.extend(items[: n - len(out)])
        return out

    # -- writes -------------------------------------------------------------------------

    def insert(self, key: int, value: int) -> None:
        """Insert or overwrite ``key``."""
        pool = self.pool
        cap = self.cap
        held: list[int] = [self.meta_pid]
        meta = pool.pin_exclusive(self.meta_pid).cast("Q")
        pid = meta[0]
        views = {self.meta_pid: meta}
        try:
            while True:
                q = pool.pin_exclusive(pid).cast("Q")
                views[pid] = q
                held.append(pid)
                node_count = _count(q[0])
                if node_count < cap:
                    for p in held[:-1]:
                        pool.unpin_exclusive(p)
                        del views[p]
                    held = held[-1:]
                if q[0] & LEAF:
                    break
                i = bisect_right(q, key, HEADER_WORDS, HEADER_WORDS + node_count)
                pid = q[HEADER_WORDS + cap + i - HEADER_WORDS]
            dirty = self._insert_held(held, views, key, value)
        except BaseException:
            for p in held:
                pool.unpin_exclusive(p)
            raise
        for p in held:
            pool.unpin_exclusive(p, dirty=p in dirty)

    def _insert_held(self, held, views, key, value) -> set:
        cap = self.cap
        pid = held[-1]
        q = views[pid]
        cnt = _count(q[0])
        i = bisect_left(q, key, HEADER_WORDS, HEADER_WORDS + cnt)
        if i < HEADER_WORDS + cnt and q[i] == key:
            q[i + cap] = value
            return {pid}
        node = _Node.load(q, cap)
        node.keys.insert(i - HEADER_WORDS, key)
        node.vals.insert(i - HEADER_WORDS, value)
        dirty = {pid}
        level = len(held) - 1
        while len(node.keys) > cap:
            sep, right_pid, left = self._split(node)
            # the right half becomes reachable once the left half links to it
            left.store(views[pid], cap)
            level -= 1
            parent_pid = held[level]
            if parent_pid == self.meta_pid:
                new_root = self._allocate()
                rq = self.pool.pin_exclusive(new_root).cast("Q")
                _Node(False, keys=[sep], vals=[pid, right_pid]).store(rq, cap)
                self.pool.unpin_exclusive(new_root, dirty=True)
                meta = views[self.meta_pid]
                meta[0] = new_root
                meta[1] = self._next_pid
                self._root = new_root
                dirty.add(self.meta_pid)
                return dirty
            node = _Node.load(views[parent_pid], cap)
            j = bisect_right(node.keys, sep)
            node.keys.insert(j, sep)
            node.vals.insert(j + 1, right_pid)
            pid = parent_pid
            dirty.add(pid)
        node.store(views[pid], cap)
        return dirty

    def _split(self, node: _Node) -> tuple[int, int, _Node]:
        """Split an overfull node. Writes the new right half; returns (separator, right pid, left half)."""
        right_pid = self._allocate()
        mid = len(node.keys) // 2
        sep = node.keys[mid]
        if node.leaf:
            right = _Node(True, node.has_high, node.high, node.right, node.keys[mid:], node.vals[mid:])
            left = _Node(True, True, sep, right_pid, node.keys[:mid], node.vals[:mid])
        else:
            right = _Node(False, node.has_high, node.high, node.right,
                          node.keys[mid + 1:], node.vals[mid + 1:])
            left = _Node(False, True, sep, right_pid, node.keys[:mid], node.vals[:mid + 1])
        rq = self.pool.pin_exclusive(right_pid).cast("Q")
        right.store(rq, self.cap)
        self.pool.unpin_exclusive(right_pid, dirty=True)
        return sep, right_pid, left

    def sync_meta(self) -> None:
        """Persist the allocation cursor to the meta page."""
        q = self.pool.pin_exclusive(self.meta_pid).cast("Q")
        q[1] = self._next_pid
        self.pool.unpin_exclusive(self.meta_pid, dirty=True)

    # -- bulk load -------------------------------------------------------------------------

    @classmethod
    def bulk_load(cls, pool, base: int, items) -> "BTree":
        """Build a tree from ``(key, value)`` pairs sorted by strictly increasing key."""
        tree = cls(pool, base)
        tree._next_pid = base + 1
        cap = tree.cap
        items = list(items)
        keys = [k for k, _ in items]
        vals = [v for _, v in items]
        if any(a >= b for a, b in zip(keys, keys[1:])):
            raise ValueError("bulk_load needs strictly increasing keys")
        if not keys:
            tree._next_pid = base + 1
            return cls.create(pool, base)
        # level 0: leaves, as (first key, pid)
        sizes = _even_sizes(len(keys), cap)
        level = []
        pos = 0
        pids = [tree._allocate() for _ in sizes]
        for n, (size, pid) in enumerate(zip(sizes, pids)):
            last = n == len(sizes) - 1
            node = _Node(True, not last, keys[pos + size] if not last else 0,
                         0 if last else pids[n + 1], keys[pos:pos + size], vals[pos:pos + size])
            tree._write_node(pid, node)
            level.append((keys[pos], pid))
            pos += size
        while len(level) > 1:
            sizes = _even_sizes(len(level), cap + 1)
            pids = [tree._allocate() for _ in sizes]
            upper = []
            pos = 0
            for n, (size, pid) in enumerate(zip(sizes, pids)):
                group = level[pos:pos + size]
                last = n == len(sizes) - 1
                high = level[pos + size][0] if not last else 0
                node = _Node(False, not last, high, 0 if last else pids[n + 1],
                             [k for k, _ in group[1:]], [p for _, p in group])
                tree._write_node(pid, node)
                upper.append((group[0][0], pid))
                pos += size
            level = upper
        tree._write_meta(level[0][1])
        return tree

    def _write_node(self, pid: int, node: _Node) -> None:
        q = self.pool.pin_exclusive(pid).cast("Q")
        node.store(q, self.cap)
        self.pool.unpin_exclusive(pid, dirty=True)

    # -- checking -----------------------------------------------------------------------------

    def check(self) -> int:
        """Validate ordering, bounds, links and occupancy. Returns the key count.

        Must run while no writer is active.
        """
        cap = self.cap
        min_keys = (cap + 1) // 2
        min_children = (cap + 2) // 2
        root = self.root()
        total = 0
        level = [root]
        depth = None
        d = 0
        while level:
            nxt = []
            prev_high = None
            for n, pid in enumerate(level):
                node = self.pool._read_pinned(pid, lambda v: _Node.load(v.cast("Q"), cap))
                if node.keys != sorted(set(node.keys)):
                    raise AssertionError(f"node {pid}: keys out of order")
                if node.has_high and node.keys and node.keys[-1] >= node.high:
                    raise AssertionError(f"node {pid}: key beyond high key")
                if prev_high is not None and node.keys and node.keys[0] < prev_high:
                    raise AssertionError(f"node {pid}: key below left sibling's high key")
                last = n == len(level) - 1
                if last == node.has_high:
                    raise AssertionError(f"node {pid}: high key flag inconsistent")
                if not last and node.right != level[n + 1]:
                    raise AssertionError(f"node {pid}: broken right link")
                if pid != root:
                    if node.leaf and len(node.keys) < min_keys:
                        raise AssertionError(f"leaf {pid} under half full")
                    if not node.leaf and len(node.vals) < min_children:
                        raise AssertionError(f"inner node {pid} under half full")
                prev_high = node.high if node.has_high else None
                if node.leaf:
                    if depth is None:
                        depth = d
                    elif depth != d:
                        raise AssertionError("leaves at different depths")
                    total += len(node.keys)
                else:
                    if len(node.vals) != len(node.keys) + 1:
                        raise AssertionError(f"inner node {pid}: child count mismatch")
                    nxt.extend(node.vals)
            level = nxt
            d += 1
        return total


def _even_sizes(n: int, cap: int) -> list[int]:
    k = -(-n // cap)
    q, r = divmod(n, k)
    return [q + 1] * r + [q] * (k - r)
