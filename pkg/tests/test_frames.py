import pytest

from arraypool.entry import INVALID_FRAME
from arraypool.errors import PoolExhaustedError
from arraypool.frames import FrameStore


@pytest.fixture
def fs():
    store = FrameStore(8, 4096, huge=False)
    yield store
    store.close()


def occupy(fs, n):
    frames = [fs.allocate_frame() for _ in range(n)]
    for i, f in enumerate(frames):
        fs.owner[f] = 100 + i
    return frames


def test_allocates_n_distinct_then_invalid(fs):
    got = [fs.allocate_frame() for _ in range(8)]
    assert sorted(got) == list(range(1, 9))
    assert fs.allocate_frame() == INVALID_FRAME
    fs.free_frame(got[3])
    assert fs.allocate_frame() == got[3]


def test_frame_views_are_disjoint_slices(fs):
    f1, f2 = fs.allocate_frame(), fs.allocate_frame()
    fs.views[f1][:] = b"\x01" * 4096
    assert bytes(fs.views[f2]) == bytes(4096)
    assert len(fs.views[f1]) == 4096
    assert fs.views[0] is None


def test_single_unpinned_page_is_victim(fs):
    (f,) = occupy(fs, 1)
    assert fs.select_victim_page(lambda fr, o: "h") == (f, 100, "h")


def test_referenced_page_survives_a_sweep(fs):
    frames = occupy(fs, 4)
    for f in frames:
        fs.touch(f)
        fs.touch(f)
    hot = frames[1]
    victims = []
    for _ in range(3):
        fs.touch(hot)
        f, owner, _ = fs.select_victim_page(lambda fr, o: o)
        victims.append(f)
        fs.owner[f] = None  # evicted
    assert hot not in victims
    assert set(victims) == set(frames) - {hot}


def test_touched_page_survives_one_sweep(fs):
    a, b = occupy(fs, 2)
    fs.touch(a)
    assert fs.select_victim_page(lambda fr, o: o)[0] == b
    assert fs.ref[a] == 0


def test_pinned_pages_skipped(fs):
    frames = occupy(fs, 3)
    f, _, _ = fs.select_victim_page(lambda fr, o: o if fr == frames[2] else None)
    assert f == frames[2]


def test_all_pinned_is_exhaustion_within_two_sweeps(fs):
    occupy(fs, 8)
    calls = []
    with pytest.raises(PoolExhaustedError):
        fs.select_victim_page(lambda fr, o: calls.append(fr))
    assert len(calls) <= 2 * 8


def test_sweep_bounded_by_two_rotations(fs):
    frames = occupy(fs, 8)
    for f in frames:
        fs.touch(f)
    fs.select_victim_page(lambda fr, o: o)
    assert fs.last_sweep_steps <= 16


def test_free_clears_descriptor(fs):
    (f,) = occupy(fs, 1)
    fs.dirty[f] = 1
    fs.touch(f)
    fs.free_frame(f)
    assert fs.owner[f] is None and not fs.dirty[f] and not fs.ref[f]


@pytest.mark.parametrize("kw", [{"frame_count": 0}, {"frame_count": 4, "page_size": 1000}])
def test_bad_config(kw):
    with pytest.raises(ValueError):
        FrameStore(**kw)
