"""Buffer pool with array-based page translation and hole-punched translation memory."""

from .entry import EXCLUSIVE, INVALID_FRAME, UNLOCKED, Entry, decode, pack
from .errors import (
    BatchReadError,
    FlushError,
    PageIOError,
    PoolError,
    PoolExhaustedError,
)
from .hparray import HolePunchArray
from .memory import InstrumentedProvider, MmapProvider
from .pid import group_index, make_pid, split_pid
from .pool import BufferPool, PoolConfig, PoolStats
from .store import FileStore, SyntheticStore, make_store

__all__ = [
    "BatchReadError",
    "BufferPool",
    "EXCLUSIVE",
    "Entry",
    "FileStore",
    "FlushError",
    "HolePunchArray",
    "INVALID_FRAME",
    "InstrumentedProvider",
    "MmapProvider",
    "PageIOError",
    "PoolConfig",
    "PoolError",
    "PoolExhaustedError",
    "PoolStats",
    "SyntheticStore",
    "UNLOCKED",
    "decode",
    "group_index",
    "make_pid",
    "make_store",
    "pack",
    "split_pid",
]

__version__ = "0.1.0"
