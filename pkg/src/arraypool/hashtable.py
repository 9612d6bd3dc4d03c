"""Hash-table translation baselines: chained buckets and linear probing.

Both map a page id to a node ``[pid, word, next, live]`` whose ``word`` slot
holds the same 64-bit entry encoding as the array table, so the pool's
latching protocol is shared. Nodes are inserted on lookup and unlinked on
eviction. An unlinked node is marked dead and never reused, so a thread still
holding its handle observes an evicted word, finds ``live`` false under the
entry latch, and re-resolves.

Tables are partitioned; every lookup, insert and removal runs under the
partition's lock. Both size themselves to ``2 * frame_count`` slots.

Keys are hashed with the 64-bit MurmurHash3 finalizer::

    k ^= k >> 33; k *= 0xFF51AFD7ED558CCD
    k ^= k >> 33; k *= 0xC4CEB9FE1A85EC53
    k ^= k >> 33

The low ``log2(partitions)`` bits pick the partition, the next bits the slot.
"""

import threading

from . import entry as te

M64 = (1 << 64) - 1

PID, WORD, NEXT, LIVE = 0, 1, 2, 3

# nominal layout sizes used for memory accounting
BUCKET_BYTES = 8  # chained: head pointer per bucket
CHAIN_NODE_BYTES = 24  # chained: key, entry word, next pointer
OPEN_SLOT_BYTES = 17  # open addressing: key, entry word, control byte

_EMPTY = -1
_TOMBSTONE = -2
_MAX_LOAD = 0.75


def fmix64(k: int) -> int:
    k ^= k >> 33
    k = (k * 0xFF51AFD7ED558CCD) & M64
    k ^= k >> 33
    k = (k * 0xC4CEB9FE1A85EC53) & M64
    k ^= k >> 33
    return k


def _pow2_at_least(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


class _HashTranslation:
    kind = ""

    def __init__(self, frame_count: int, partitions: int = 64):
        self.partitions = _pow2_at_least(max(1, partitions))
        self._pbits = self.partitions.bit_length() - 1
        self._pmask = self.partitions - 1
        self.slots_per_partition = _pow2_at_least(max(2, -(-2 * frame_count // self.partitions)))
        self.hole_punches = 0
        self.hook = None

    def is_live(self, words, idx: int) -> bool:
        return words[LIVE]

    def reserve(self, pid: int, idx: int) -> None:
        pass

    def unreserve(self, pid: int, idx: int) -> None:
        pass

    def evict_entry(self, pid: int, words, idx: int) -> None:
        self._remove(pid, words)
        te.unlock_evicted(words, idx)

    def abort_fault(self, pid: int, words, idx: int) -> None:
        self._remove(pid, words)
        te.unlock_evicted(words, idx)

    def group_count_total(self) -> int:
        return 0

    def path_cache_counts(self) -> tuple[int, int]:
        return 0, 0

    def close(self) -> None:
        pass

    def resident_bytes(self) -> int:
        return self.memory_bytes()

    def locate(self, pid: int):
        return self.peek(pid)

    def get_translation_entry(self, pid: int):
        return self.entry(pid)


class _ChainPartition:
    __slots__ = ("lock", "buckets", "mask", "count")

    def __init__(self, nbuckets: int):
        self.lock = threading.Lock()
        self.buckets = [None] * nbuckets
        self.mask = nbuckets - 1
        self.count = 0


class ChainedHashTranslation(_HashTranslation):
    kind = "chained"

    def __init__(self, frame_count: int, partitions: int = 64):
        super().__init__(frame_count, partitions)
        self._parts = [_ChainPartition(self.slots_per_partition) for _ in range(self.partitions)]

    def entry(self, pid: int):
        h = fmix64(pid)
        part = self._parts[h & self._pmask]
        with part.lock:
            b = (h >> self._pbits) & part.mask
            node = part.buckets[b]
            while node is not None:
                if node[PID] == pid:
                    return node, WORD
                node = node[NEXT]
            node = [pid, 0, part.buckets[b], True]
            part.buckets[b] = node
            part.count += 1
            return node, WORD

    def peek(self, pid: int):
        h = fmix64(pid)
        part = self._parts[h & self._pmask]
        with part.lock:
            node = part.buckets[(h >> self._pbits) & part.mask]
            while node is not None:
                if node[PID] == pid:
                    return node, WORD
                node = node[NEXT]
        return None

    def _remove(self, pid: int, node) -> None:
        h = fmix64(pid)
        part = self._parts[h & self._pmask]
        with part.lock:
            b = (h >> self._pbits) & part.mask
            prev, cur = None, part.buckets[b]
            while cur is not None and cur is not node:
                prev, cur = cur, cur[NEXT]
            if cur is None:
                return
            if prev is None:
                part.buckets[b] = cur[NEXT]
            else:
                prev[NEXT] = cur[NEXT]
            node[LIVE] = False
            part.count -= 1

    def __len__(self) -> int:
        return sum(p.count for p in self._parts)

    def memory_bytes(self) -> int:
        return sum(len(p.buckets) * BUCKET_BYTES + p.count * CHAIN_NODE_BYTES for p in self._parts)


class _OpenPartition:
    __slots__ = ("lock", "keys", "nodes", "mask", "used", "count")

    def __init__(self, capacity: int):
        self.lock = threading.Lock()
        self.keys = [_EMPTY] * capacity
        self.nodes = [None] * capacity
        self.mask = capacity - 1
        self.used = 0  # live + tombstones
        self.count = 0


class OpenAddressingTranslation(_HashTranslation):
    kind = "open"

    def __init__(self, frame_count: int, partitions: int = 64):
        super().__init__(frame_count, partitions)
        self._parts = [_OpenPartition(self.slots_per_partition) for _ in range(self.partitions)]
        self.grows = 0

    def entry(self, pid: int):
        h = fmix64(pid)
        part = self._parts[h & self._pmask]
        with part.lock:
            keys = part.keys
            mask = part.mask
            i = (h >> self._pbits) & mask
            free = -1
            while True:
                k = keys[i]
                if k == pid:
                    return part.nodes[i], WORD
                if k == _EMPTY:
                    break
                if k == _TOMBSTONE and free < 0:
                    free = i
                i = (i + 1) & mask
            node = [pid, 0, None, True]
            if free >= 0:
                i = free
            else:
                if part.used + 1 > _MAX_LOAD * (mask + 1):
                    self._rehash(part, h)
                    return self._insert_fresh(part, h, node)
                part.used += 1
            keys[i] = pid
            part.nodes[i] = node
            part.count += 1
            return node, WORD

    def _insert_fresh(self, part: _OpenPartition, h: int, node):
        i = (h >> self._pbits) & part.mask
        while part.keys[i] >= 0:
            i = (i + 1) & part.mask
        part.keys[i] = node[PID]
        part.nodes[i] = node
        part.used += 1
        part.count += 1
        return node, WORD

    def _rehash(self, part: _OpenPartition, h: int) -> None:
        # drop tombstones; grow only if live entries alone exceed the load limit
        capacity = part.mask + 1
        if part.count + 1 > _MAX_LOAD * capacity:
            capacity *= 2
            self.grows += 1
        live = [n for n in part.nodes if n is not None and n[LIVE]]
        part.keys = [_EMPTY] * capacity
        part.nodes = [None] * capacity
        part.mask = capacity - 1
        part.used = part.count = 0
        for n in live:
            self._insert_fresh(part, fmix64(n[PID]), n)

    def peek(self, pid: int):
        h = fmix64(pid)
        part = self._parts[h & self._pmask]
        with part.lock:
            keys = part.keys
            mask = part.mask
            i = (h >> self._pbits) & mask
            while True:
                k = keys[i]
                if k == pid:
                    return part.nodes[i], WORD
                if k == _EMPTY:
                    return None
                i = (i + 1) & mask

    def _remove(self, pid: int, node) -> None:
        h = fmix64(pid)
        part = self._parts[h & self._pmask]
        with part.lock:
            i = (h >> self._pbits) & part.mask
            while True:
                k = part.keys[i]
                if k == _EMPTY:
                    return
                if k == pid and part.nodes[i] is node:
                    part.keys[i] = _TOMBSTONE
                    part.nodes[i] = None
                    node[LIVE] = False
                    part.count -= 1
                    return
                i = (i + 1) & part.mask

    def __len__(self) -> int:
        return sum(p.count for p in self._parts)

    def memory_bytes(self) -> int:
        return sum((p.mask + 1) * OPEN_SLOT_BYTES for p in self._parts)
