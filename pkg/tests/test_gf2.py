import itertools

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from latentmark import gf2


def brute_rank(a):
    """Rank over F2 as log2 of the row-space size, by enumeration."""
    m, _ = a.shape
    span = {tuple(np.zeros(a.shape[1], dtype=np.uint8))}
    for coeffs in itertools.product((0, 1), repeat=m):
        span.add(tuple((np.array(coeffs) @ a) % 2))
    return int(np.log2(len(span)))


matrices = st.integers(1, 6).flatmap(
    lambda m: st.integers(1, 70).flatmap(
        lambda n: st.lists(st.integers(0, 1), min_size=m * n, max_size=m * n).map(
            lambda v: np.array(v, dtype=np.uint8).reshape(m, n))))


@given(matrices)
@settings(max_examples=60, deadline=None)
def test_pack_roundtrip(a):
    assert np.array_equal(gf2.unpack_rows(gf2.pack_rows(a), a.shape[1]), a)


@given(matrices)
@settings(max_examples=60, deadline=None)
def test_rank_matches_enumeration(a):
    assert gf2.rank(gf2.pack_rows(a), a.shape[1]) == brute_rank(a)


@given(matrices)
@settings(max_examples=60, deadline=None)
def test_nullspace_is_kernel(a):
    n = a.shape[1]
    basis = gf2.nullspace(gf2.pack_rows(a), n)
    assert basis.shape == (n, n - gf2.rank(gf2.pack_rows(a), n))
    assert not np.any(gf2.matmul(a, basis))
    if basis.shape[1]:
        assert gf2.rank(gf2.pack_rows(basis.T), n) == basis.shape[1]


def test_rref_pivots_are_unit_columns(rng):
    a = rng.integers(0, 2, size=(20, 130), dtype=np.uint8)
    reduced, pivots = gf2.rref(gf2.pack_rows(a), 130)
    dense = gf2.unpack_rows(reduced, 130)
    for row, col in enumerate(pivots):
        expected = np.zeros(dense.shape[0], dtype=np.uint8)
        expected[row] = 1
        assert np.array_equal(dense[:, col], expected)


def test_sparse_to_packed():
    rows = [[0, 3], [64, 65, 127]]
    dense = gf2.unpack_rows(gf2.sparse_to_packed(rows, 130), 130)
    assert dense.sum() == 5
    assert dense[0, 3] == 1 and dense[1, 127] == 1
