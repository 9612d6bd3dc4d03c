import threading
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from arraypool.hparray import LOCK_BIT, HolePunchArray
from arraypool.memory import InstrumentedProvider, MmapProvider


def make(n_entries=1 << 20):
    return HolePunchArray(n_entries, 4096, InstrumentedProvider())


def test_footprint_for_half_billion_entries():
    hp = HolePunchArray(512 << 20, 4096, MmapProvider())
    try:
        assert hp.n_groups == 1 << 20
        assert hp.capacity_bytes == 4 << 20
        assert hp.resident_bytes() == 0
    finally:
        hp.close()


def test_increment_from_zero():
    hp = make()
    hp.increment_refcount(3)
    assert hp.count(3) == 1
    assert hp.count(2) == 0


def test_full_group():
    hp = make()
    for _ in range(512):
        hp.increment_refcount(0)
    assert hp.count(0) == 512
    assert hp.total_count() == 512


def test_lock_and_dec():
    hp = make()
    hp.increment_refcount(1)
    assert hp.lock_and_dec(1) == 0
    assert hp.is_locked(1)
    hp.unlock(1)
    assert not hp.is_locked(1)
    for _ in range(5):
        hp.increment_refcount(2)
    assert hp.lock_and_dec(2) == 4
    hp.unlock(2)
    assert hp.count(2) == 4


def test_unlock_after_punch_lets_increments_proceed():
    hp = make()
    hp.increment_refcount(0)
    hp.lock_and_dec(0)
    hp.unlock(0)
    hp.increment_refcount(0)
    assert hp.count(0) == 1


def test_contract_violations():
    hp = make()
    with pytest.raises(AssertionError):
        hp.lock_and_dec(0)
    with pytest.raises(AssertionError):
        hp.unlock(0)


def test_increment_waits_for_punch():
    hp = make()
    hp.increment_refcount(5)
    assert hp.lock_and_dec(5) == 0
    events = []
    spinning = threading.Event()

    def spin():
        spinning.set()
        time.sleep(0.001)

    hp.spin = spin

    def fault():
        hp.increment_refcount(5)
        events.append(("incremented", hp.count(5)))

    t = threading.Thread(target=fault)
    t.start()
    assert spinning.wait(5)
    time.sleep(0.02)
    assert events == []
    events.append(("punched", None))
    hp.unlock(5)
    t.join(5)
    assert events == [("punched", None), ("incremented", 1)]
    assert not hp.is_locked(5)


def test_distinct_groups_do_not_interfere():
    hp = make()
    n = 2000

    def worker(g):
        for _ in range(n):
            hp.increment_refcount(g)
            hp.lock_and_dec(g)
            hp.unlock(g)
            hp.increment_refcount(g)

    threads = [threading.Thread(target=worker, args=(g,)) for g in (0, 1, 64, 65)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert [hp.count(g) for g in (0, 1, 64, 65)] == [n] * 4
    assert hp.total_count() == 4 * n


def test_same_group_concurrent_conservation():
    hp = make()

    def worker():
        for _ in range(1000):
            hp.increment_refcount(9)
            hp.lock_and_dec(9)
            hp.unlock(9)

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert hp._c[9] == 0


@given(st.lists(st.tuples(st.integers(0, 7), st.booleans()), max_size=300))
def test_conservation(ops):
    hp = make()
    model = [0] * 8
    for g, fault in ops:
        if fault:
            hp.increment_refcount(g)
            model[g] += 1
        elif model[g]:
            assert hp.lock_and_dec(g) == model[g] - 1
            hp.unlock(g)
            model[g] -= 1
    assert [hp.count(g) for g in range(8)] == model
    assert not any(hp._c[g] & LOCK_BIT for g in range(8))
    assert hp.total_count() == sum(model)
