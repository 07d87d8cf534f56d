"""Counter-based random numbers: draw i depends only on (seed, i).

Each sample index owns one Philox4x64 block (four 64-bit words), so any
slice of an ensemble can be generated independently and in any order.
"""
import numpy as np
from scipy.special import ndtri

_MASK = (1 << 64) - 1


def raw_blocks(seed, start, n):
    """(n, 4) uint64 words for sample indices start .. start+n-1."""
    if n <= 0:
        return np.zeros((0, 4), dtype=np.uint64)
    bg = np.random.Philox(key=int(seed) & _MASK, counter=int(start))
    return bg.random_raw(4 * n).reshape(n, 4)


def uniforms(seed, start, n):
    """(n, 4) doubles in the open interval (0, 1)."""
    r = raw_blocks(seed, start, n)
    return (r >> np.uint64(11)).astype(np.float64) * 2.0 ** -53 + 2.0 ** -54


def normals(u):
    return ndtri(u)
