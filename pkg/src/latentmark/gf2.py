"""Dense linear algebra over F2 on bit-packed numpy arrays.

Rows are packed little-endian into ``uint64`` words: bit ``j`` of a row lives
in word ``j // 64`` at position ``j % 64``.
"""

import numpy as np

__all__ = [
    "pack_rows",
    "unpack_rows",
    "sparse_to_packed",
    "rref",
    "rank",
    "nullspace",
    "matmul",
]


def _n_words(n):
    return (n + 63) // 64


def pack_rows(bits):
    """Pack a 2-D {0,1} array into ``uint64`` words along the last axis."""
    bits = np.ascontiguousarray(np.asarray(bits, dtype=np.uint8))
    if bits.ndim != 2:
        raise ValueError("expected a 2-D bit array")
    m, n = bits.shape
    w = _n_words(n)
    padded = np.zeros((m, w * 64), dtype=np.uint8)
    padded[:, :n] = bits
    as_bytes = np.packbits(padded, axis=1, bitorder="little")
    return as_bytes.view("<u8").reshape(m, w).astype(np.uint64, copy=False)


def unpack_rows(packed, n):
    """Inverse of :func:`pack_rows`; returns a ``uint8`` array with ``n`` columns."""
    packed = np.ascontiguousarray(np.asarray(packed, dtype="<u8"))
    as_bytes = packed.view(np.uint8).reshape(packed.shape[0], -1)
    return np.unpackbits(as_bytes, axis=1, count=n, bitorder="little")


def sparse_to_packed(rows, n):
    """Packed dense form of a matrix given as per-row lists of column indices."""
    m = len(rows)
    out = np.zeros((m, _n_words(n)), dtype=np.uint64)
    for i, cols in enumerate(rows):
        for c in cols:
            out[i, c >> 6] ^= np.uint64(1) << np.uint64(c & 63)
    return out


def rref(packed, n):
    """Reduced row echelon form over F2.

    Parameters
    ----------
    packed : ndarray of uint64, shape (m, ceil(n/64))
        Packed matrix; not modified.
    n : int
        Number of columns.

    Returns
    -------
    reduced : ndarray
        Packed RREF, rows below the rank are zero.
    pivots : list of int
        Pivot column of each of the first ``len(pivots)`` rows.
    """
    a = np.array(packed, dtype=np.uint64, copy=True)
    m = a.shape[0]
    pivots = []
    row = 0
    one = np.uint64(1)
    for col in range(n):
        if row == m:
            break
        word, shift = col >> 6, np.uint64(col & 63)
        column = (a[row:, word] >> shift) & one
        hits = np.flatnonzero(column)
        if hits.size == 0:
            continue
        p = row + int(hits[0])
        if p != row:
            a[[row, p]] = a[[p, row]]
        # clear this column in every other row (words left of `word` are
        # already zero in the pivot row)
        others = np.flatnonzero((a[:, word] >> shift) & one)
        others = others[others != row]
        if others.size:
            a[others, word:] ^= a[row, word:]
        pivots.append(col)
        row += 1
    return a, pivots


def rank(packed, n):
    return len(rref(packed, n)[1])


def nullspace(packed, n):
    """Basis of the right kernel ``{x : A x = 0}`` as an (n, k) uint8 array."""
    reduced, pivots = rref(packed, n)
    r = len(pivots)
    dense = unpack_rows(reduced[:r], n) if r else np.zeros((0, n), dtype=np.uint8)
    pivot_set = set(pivots)
    free = [c for c in range(n) if c not in pivot_set]
    basis = np.zeros((n, len(free)), dtype=np.uint8)
    piv = np.asarray(pivots, dtype=np.intp)
    for k, f in enumerate(free):
        basis[f, k] = 1
        if r:
            basis[piv, k] = dense[:, f]
    return basis


def matmul(a, b):
    """Product of two {0,1} matrices over F2 (small dense operands)."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    return ((a @ b) & 1).astype(np.uint8)
