"""Sobol low-discrepancy sequence (Gray-code construction, Joe-Kuo direction numbers)."""

import numpy as np

from .errors import UnsupportedDimensionError

MAX_DIM = 16
_BITS = 32

# (s, a, m_1..m_s) for dimensions 2..16; dimension 1 is the van der Corput sequence.
_JOE_KUO = [
    (1, 0, (1,)),
    (2, 1, (1, 3)),
    (3, 1, (1, 3, 1)),
    (3, 2, (1, 1, 1)),
    (4, 1, (1, 1, 3, 3)),
    (4, 4, (1, 3, 5, 13)),
    (5, 2, (1, 1, 5, 5, 17)),
    (5, 4, (1, 1, 5, 5, 5)),
    (5, 7, (1, 1, 7, 11, 19)),
    (5, 11, (1, 1, 5, 1, 1)),
    (5, 13, (1, 1, 1, 3, 11)),
    (5, 14, (1, 3, 5, 5, 31)),
    (6, 1, (1, 3, 3, 9, 7, 49)),
    (6, 13, (1, 1, 1, 15, 21, 21)),
    (6, 16, (1, 3, 1, 13, 27, 49)),
]


def _direction_numbers(dim):
    v = np.zeros((dim, _BITS), dtype=np.uint64)
    v[0] = [1 << (_BITS - 1 - i) for i in range(_BITS)]
    for j in range(1, dim):
        s, a, m = _JOE_KUO[j - 1]
        for i in range(min(s, _BITS)):
            v[j, i] = m[i] << (_BITS - 1 - i)
        for i in range(s, _BITS):
            val = int(v[j, i - s]) ^ (int(v[j, i - s]) >> s)
            for k in range(1, s):
                if (a >> (s - 1 - k)) & 1:
                    val ^= int(v[j, i - k])
            v[j, i] = val
    return v


def sobol_sequence(dim, n, skip=1):
    """Return ``n`` unscrambled Sobol points in ``[0, 1)^dim``.

    Parameters
    ----------
    dim : int
        Number of coordinates, ``1 <= dim <= 16``.
    n : int
        Number of points returned.
    skip : int
        Number of leading points discarded. The default of 1 drops the
        all-zeros point.

    Returns
    -------
    numpy.ndarray
        Array of shape ``(n, dim)``. Every entry is an exact dyadic rational,
        so the output is bit-identical across calls and platforms.
    """
    if not 1 <= dim <= MAX_DIM:
        raise UnsupportedDimensionError(f"Sobol dimension must be in [1, {MAX_DIM}], got {dim}")
    if n < 0 or skip < 0:
        raise ValueError("n and skip must be non-negative")
    if n + skip > 2**_BITS:
        raise ValueError("requested more points than the 32-bit generator provides")
    out = np.zeros((n, dim))
    if n == 0:
        return out
    v = _direction_numbers(dim)
    total = n + skip
    # Gray-code recurrence: x_{i+1} = x_i ^ v[c(i)], c = index of lowest zero bit of i.
    idx = np.arange(total - 1, dtype=np.uint64)
    c = np.zeros(total - 1, dtype=np.int64)
    tmp = idx.copy()
    while True:
        mask = (tmp & np.uint64(1)) == 1
        if not mask.any():
            break
        c[mask] += 1
        tmp = np.where(mask, tmp >> np.uint64(1), tmp)
    steps = v[:, c].T  # (total-1, dim)
    ints = np.zeros((total, dim), dtype=np.uint64)
    if total > 1:
        ints[1:] = np.bitwise_xor.accumulate(steps, axis=0)
    out[:] = ints[skip:].astype(np.float64) / float(2**_BITS)
    return out
