import pytest

from arraypool import BufferPool, SyntheticStore
from arraypool.store import FileStore

BACKENDS = ["array", "chained", "open"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def file_store(tmp_path):
    store = FileStore(tmp_path / "pages.db", page_size=4096)
    yield store
    store.close()


@pytest.fixture
def make_pool():
    pools = []

    def make(store=None, **kw):
        pool = BufferPool(store if store is not None else SyntheticStore(7), **kw)
        pools.append(pool)
        return pool

    yield make
    for p in pools:
        p.close(flush=False)


# acceptance criteria report: one line per criterion at the end of the run
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p[0] for p in parts)
        detail = "; ".join(p[1] for p in parts)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
