import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arraypool.memory import InstrumentedProvider, MmapProvider, make_provider

P = 4096


@pytest.fixture(params=["instrumented", "mmap"])
def provider(request):
    return make_provider(request.param)


def test_huge_reservation_is_lazy(provider):
    region = provider.reserve(32 << 30)
    try:
        words = region.view("Q")
        assert len(words) == 4 << 30
        rng = random.Random(1)
        for _ in range(10):
            assert words[rng.randrange(len(words))] == 0
        assert region.resident_bytes() < 64 * P
    finally:
        region.close()


def test_one_write_costs_one_page():
    region = InstrumentedProvider().reserve(1 << 20)
    assert region.resident_bytes() == 0
    region.view("Q")[1000] = 5
    assert region.resident_bytes() == P
    assert region.view("Q")[1000] == 5


def test_groups_written_then_released():
    region = InstrumentedProvider().reserve(64 * P)
    w = region.view("Q")
    for g in (0, 3, 17):
        w[g * 512 + 7] = g + 1
    assert region.resident_bytes() == 3 * P
    region.release(3 * P, P)
    assert region.resident_bytes() == 2 * P
    assert all(w[3 * 512 + i] == 0 for i in range(512))
    assert w[7] == 1
    region.release(0, 64 * P)
    assert region.resident_bytes() == 0


def test_release_untouched_and_twice_is_noop(provider):
    region = provider.reserve(8 * P)
    try:
        region.release(2 * P, P)
        region.view("Q")[0] = 1
        region.release(0, P)
        region.release(0, P)
        assert region.view("Q")[0] == 0
    finally:
        region.close()


def test_mmap_release_zeroes():
    region = MmapProvider().reserve(16 * P)
    try:
        w = region.view("Q")
        w[512 * 4 + 3] = 99
        region.release(4 * P, P)
        assert w[512 * 4 + 3] == 0
    finally:
        region.close()


def test_mmap_residency_tracks_writes():
    region = MmapProvider().reserve(1024 * P)
    try:
        assert region.resident_bytes() == 0
        w = region.view("Q")
        for g in range(100):
            w[g * 512] = 1
        assert region.resident_bytes() == 100 * P
        region.release(0, 1024 * P)
        assert region.resident_bytes() == 0
    finally:
        region.close()


@pytest.mark.parametrize("offset,length", [(1, P), (0, 100), (P, 2 * P + 8)])
def test_misaligned_release_rejected(provider, offset, length):
    region = provider.reserve(8 * P)
    try:
        with pytest.raises(ValueError):
            region.release(offset, length)
    finally:
        region.close()


def test_release_outside_region_rejected():
    with pytest.raises(ValueError):
        InstrumentedProvider().reserve(4 * P).release(4 * P, P)


@pytest.mark.parametrize("length", [0, -P, 100, P + 1])
def test_bad_reservation_length(provider, length):
    with pytest.raises(ValueError):
        provider.reserve(length)


def test_unknown_provider():
    with pytest.raises(ValueError):
        make_provider("tmpfs")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 15), st.integers(0, 511)), max_size=80))
def test_zero_after_release_and_before_write(ops):
    region = InstrumentedProvider().reserve(16 * P)
    w = region.view("Q")
    model = {}
    for write, g, i in ops:
        if write:
            model[g * 512 + i] = g * 1000 + i + 1
            w[g * 512 + i] = g * 1000 + i + 1
        else:
            region.release(g * P, P)
            model = {k: v for k, v in model.items() if k // 512 != g}
    for k in range(16 * 512):
        assert w[k] == model.get(k, 0)
    assert region.resident_bytes() == len({k // 512 for k in model}) * P
