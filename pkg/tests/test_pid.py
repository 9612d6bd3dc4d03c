import pytest
from hypothesis import given
from hypothesis import strategies as st

from arraypool.pid import (
    check_os_page_bytes,
    check_suffix_width,
    entries_per_group,
    group_index,
    make_pid,
    split_pid,
)


def test_split_examples():
    assert split_pid(0x0000000A_00000003, 32) == (0xA, 3)
    assert split_pid(0, 32) == (0, 0)
    assert split_pid(0x12345, 16) == (0x1, 0x2345)


def test_group_index_examples():
    assert group_index(0, 4096) == 0
    assert group_index(511, 4096) == 0
    assert group_index(512, 4096) == 1
    assert group_index(1_000_000, 4096) == 1953


def test_entries_per_group():
    assert entries_per_group(4096) == 512
    assert entries_per_group(8192) == 1024


@pytest.mark.parametrize("s", [7, 49, 0, 64])
def test_suffix_width_bounds(s):
    with pytest.raises(ValueError):
        check_suffix_width(s)


@pytest.mark.parametrize("b", [0, 2048, 4095, 6144])
def test_os_page_bytes_must_be_power_of_two_at_least_4k(b):
    with pytest.raises(ValueError):
        check_os_page_bytes(b)


@given(st.integers(0, 2**64 - 1), st.integers(8, 48))
def test_round_trip(pid, s):
    prefix, suffix = split_pid(pid, s)
    assert suffix < 2**s
    assert make_pid(prefix, suffix, s) == pid


@given(st.integers(0, 2**40), st.sampled_from([4096, 8192, 16384]))
def test_group_partition(suffix, page):
    n = page // 8
    g = group_index(suffix, page)
    assert g * n <= suffix < (g + 1) * n
