"""Page identifiers and entry-group arithmetic.

A page id is a flat unsigned 64-bit integer. The high bits (prefix) select a
last-level translation array, the low ``suffix_width`` bits index into it.
"""

U64_MASK = (1 << 64) - 1

DEFAULT_SUFFIX_WIDTH = 32
DEFAULT_OS_PAGE_BYTES = 4096
ENTRY_BYTES = 8

MIN_SUFFIX_WIDTH = 8
MAX_SUFFIX_WIDTH = 48


def check_suffix_width(s: int) -> int:
    if not MIN_SUFFIX_WIDTH <= s <= MAX_SUFFIX_WIDTH:
        raise ValueError(
            f"suffix width must be in [{MIN_SUFFIX_WIDTH}, {MAX_SUFFIX_WIDTH}], got {s}"
        )
    return s


def check_os_page_bytes(n: int) -> int:
    if n < 4096 or n & (n - 1):
        raise ValueError(f"os_page_bytes must be a power of two >= 4096, got {n}")
    return n


def split_pid(pid: int, s: int = DEFAULT_SUFFIX_WIDTH) -> tuple[int, int]:
    """Return ``(prefix, suffix)`` of ``pid`` for suffix width ``s``."""
    return pid >> s, pid & ((1 << s) - 1)


def make_pid(prefix: int, suffix: int, s: int = DEFAULT_SUFFIX_WIDTH) -> int:
    if suffix >> s:
        raise ValueError(f"suffix {suffix:#x} does not fit in {s} bits")
    pid = (prefix << s) | suffix
    if pid > U64_MASK:
        raise ValueError(f"prefix {prefix:#x} overflows a 64-bit page id")
    return pid


def entries_per_group(os_page_bytes: int = DEFAULT_OS_PAGE_BYTES) -> int:
    return os_page_bytes // ENTRY_BYTES


def group_index(suffix: int, os_page_bytes: int = DEFAULT_OS_PAGE_BYTES) -> int:
    """Ordinal of the OS-page-sized group of entries holding ``suffix``."""
    return suffix // (os_page_bytes // ENTRY_BYTES)
