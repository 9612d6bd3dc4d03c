class PoolError(Exception):
    """Base class for buffer pool errors."""


class PoolExhaustedError(PoolError):
    """No evictable frame was found after two full CLOCK sweeps."""


class PageIOError(PoolError, OSError):
    def __init__(self, pid: int, op: str, cause: BaseException | None = None):
        super().__init__(f"{op} failed for page {pid:#x}: {cause}")
        self.pid = pid
        self.op = op
        self.cause = cause


class BatchReadError(PoolError):
    """Some pages of a batched read failed; ``errors`` maps batch position to exception."""

    def __init__(self, errors: dict[int, BaseException]):
        super().__init__(f"{len(errors)} page(s) failed in batched read")
        self.errors = errors


class FlushError(PoolError):
    def __init__(self, errors: list[BaseException]):
        super().__init__(f"{len(errors)} page(s) failed to flush: {errors[:3]}")
        self.errors = errors
