import numpy as np
from hypothesis import given, strategies as hs
from scipy import stats

from slitarrival.rng import normals, raw_blocks, uniforms


@given(seed=hs.integers(0, 2 ** 64 - 1), start=hs.integers(0, 10 ** 9),
       n=hs.integers(1, 50), cut=hs.integers(0, 50))
def test_slices_are_independent_of_partition(seed, start, n, cut):
    cut = min(cut, n)
    whole = raw_blocks(seed, start, n)
    parts = np.concatenate([raw_blocks(seed, start, cut), raw_blocks(seed, start + cut, n - cut)])
    np.testing.assert_array_equal(whole, parts)


def test_uniforms_in_open_interval_and_uniform():
    u = uniforms(123, 0, 50000)
    assert u.shape == (50000, 4)
    assert u.min() > 0 and u.max() < 1
    for k in range(4):
        assert stats.kstest(u[:, k], "uniform").pvalue > 0.01


def test_normals():
    z = normals(uniforms(9, 0, 20000)[:, 0])
    assert stats.kstest(z, "norm").pvalue > 0.01


def test_seeds_differ():
    assert not np.array_equal(raw_blocks(1, 0, 4), raw_blocks(2, 0, 4))
    assert raw_blocks(1, 0, 0).shape == (0, 4)
