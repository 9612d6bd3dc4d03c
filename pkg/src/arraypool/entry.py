"""The 64-bit translation entry word and its atomic transitions.

Layout, high to low::

    [63:56] latch state   0 = unlocked, 1..254 = shared readers, 255 = exclusive
    [55:32] version       24 bits, wraps skipping 0
    [31:0]  frame id      physical frame index + 1; 0 = INVALID_FRAME

An all-zero word is an evicted page. Entries are addressed as ``(words, idx)``
where ``words`` is any integer-indexable container of 64-bit values (a
``memoryview`` over array memory, or a small list for hash-table nodes).

Loads and holder-only stores are single item reads/writes and therefore atomic
under the interpreter lock. Compare-and-swap needs a compare and a store to be
indivisible, which is provided by a striped lock table.
"""

import threading
from typing import NamedTuple

STATE_SHIFT = 56
VERSION_SHIFT = 32

FRAME_MASK = 0xFFFF_FFFF
VERSION_MASK = 0xFF_FFFF
STATE_MASK = 0xFF << STATE_SHIFT
VERSION_FRAME_MASK = (1 << STATE_SHIFT) - 1

UNLOCKED = 0
EXCLUSIVE = 255
MAX_READERS = 254
INVALID_FRAME = 0

_EXCLUSIVE_BITS = EXCLUSIVE << STATE_SHIFT
_READER = 1 << STATE_SHIFT

_N_STRIPES = 64
_STRIPES = [threading.Lock() for _ in range(_N_STRIPES)]


class Entry(NamedTuple):
    state: int
    version: int
    frame: int


def pack(state: int, version: int, frame: int) -> int:
    return (state << STATE_SHIFT) | ((version & VERSION_MASK) << VERSION_SHIFT) | frame


def decode(word: int) -> Entry:
    return Entry(word >> STATE_SHIFT, (word >> VERSION_SHIFT) & VERSION_MASK, word & FRAME_MASK)


def next_version(version: int) -> int:
    return ((version + 1) & VERSION_MASK) or 1


def cas(words, idx: int, expected: int, new: int) -> bool:
    with _STRIPES[idx & (_N_STRIPES - 1)]:
        if words[idx] != expected:
            return False
        words[idx] = new
        return True


def try_lock_exclusive(words, idx: int) -> bool:
    w = words[idx]
    if w >> STATE_SHIFT != UNLOCKED:
        return False
    return cas(words, idx, w, w | _EXCLUSIVE_BITS)


def unlock(words, idx: int) -> None:
    """Release an exclusive latch without changing version or frame."""
    w = words[idx]
    assert w >> STATE_SHIFT == EXCLUSIVE, "unlock without exclusive latch"
    words[idx] = w & VERSION_FRAME_MASK


def set_unlocked_bump_version(words, idx: int) -> None:
    w = words[idx]
    assert w >> STATE_SHIFT == EXCLUSIVE, "unpin without exclusive latch"
    v = next_version((w >> VERSION_SHIFT) & VERSION_MASK)
    words[idx] = (v << VERSION_SHIFT) | (w & FRAME_MASK)


def set_frame_and_unlock(words, idx: int, frame: int) -> None:
    w = words[idx]
    assert w >> STATE_SHIFT == EXCLUSIVE, "install without exclusive latch"
    assert frame != INVALID_FRAME
    v = next_version((w >> VERSION_SHIFT) & VERSION_MASK)
    words[idx] = (v << VERSION_SHIFT) | frame


def set_frame_invalid(words, idx: int) -> None:
    """Stage eviction: clear the frame id while keeping the latch held."""
    w = words[idx]
    assert w >> STATE_SHIFT == EXCLUSIVE
    words[idx] = w & ~FRAME_MASK


def unlock_evicted(words, idx: int) -> None:
    w = words[idx]
    assert w >> STATE_SHIFT == EXCLUSIVE and w & FRAME_MASK == INVALID_FRAME
    words[idx] = 0


def acquire_shared(words, idx: int) -> bool:
    """Add one reader. False if the entry is evicted, exclusively held or saturated."""
    while True:
        w = words[idx]
        state = w >> STATE_SHIFT
        if w & FRAME_MASK == INVALID_FRAME or state >= MAX_READERS:
            return False
        if cas(words, idx, w, w + _READER):
            return True


def release_shared(words, idx: int) -> None:
    while True:
        w = words[idx]
        state = w >> STATE_SHIFT
        assert 1 <= state <= MAX_READERS, "shared release without shared latch"
        if cas(words, idx, w, w - _READER):
            return
