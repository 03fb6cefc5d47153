import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from dgfflab.rng import block_normals, block_rows, random_bits, walk_key


@given(
    start=st.integers(0, 700),
    cuts=st.lists(st.integers(1, 300), min_size=1, max_size=4),
    dim=st.sampled_from([1, 3, 17]),
)
def test_block_normals_do_not_depend_on_batching(start, cuts, dim):
    total = sum(cuts)
    whole = block_normals(5, 1, start, total, dim)
    pieces, s = [], start
    for c in cuts:
        pieces.append(block_normals(5, 1, s, c, dim))
        s += c
    assert np.array_equal(whole, np.concatenate(pieces))


def test_block_rows_caps_memory():
    assert block_rows(10) == 256
    assert block_rows(1 << 20) == 4


def test_streams_and_seeds_are_distinct():
    a = block_normals(0, 0, 0, 4, 8)
    assert not np.allclose(a, block_normals(0, 1, 0, 4, 8))
    assert not np.allclose(a, block_normals(1, 0, 0, 4, 8))
    assert walk_key(0, 0) != walk_key(0, 1)


def test_random_bits_are_deterministic_and_spread():
    key = walk_key(3, 4)
    bits = np.array([random_bits(key, r, c) for r in range(64) for c in range(64)], dtype=np.uint64)
    again = np.array([random_bits(key, r, c) for r in range(64) for c in range(64)], dtype=np.uint64)
    assert np.array_equal(bits, again)
    assert len(np.unique(bits)) == len(bits)
    # each bit position is on about half the time
    ones = np.array([((bits >> np.uint64(k)) & np.uint64(1)).mean() for k in range(64)])
    assert np.all(np.abs(ones - 0.5) < 4 * 0.5 / np.sqrt(len(bits)))
