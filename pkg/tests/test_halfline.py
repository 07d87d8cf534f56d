import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from slitarrival.halfline import half_line_contour, half_line_window


def oracle(A, B, C):
    """int_0^inf sqrt(k) exp(-A k^2 + B k + C) dk via confluent hypergeometric functions.

    The two 1F1 terms cancel to about exp(-Re X), so the working precision
    grows with |X|.
    """
    X0 = complex(B) ** 2 / (4 * complex(A))
    mp.mp.dps = 30 + int(abs(X0) / 2.3)
    A, B, C = mp.mpc(A), mp.mpc(B), mp.mpc(C)
    nu = mp.mpf(3) / 2
    X = B * B / (4 * A)
    val = 0.5 * A ** (-nu / 2) * (mp.gamma(nu / 2) * mp.hyp1f1(nu / 2, 0.5, X)
                                  + B / mp.sqrt(A) * mp.gamma((nu + 1) / 2)
                                  * mp.hyp1f1((nu + 1) / 2, 1.5, X))
    return complex(val * mp.exp(C))


CASES = [
    (1.0, 0.0, 0.0),
    (1.0 + 0.5j, 2.0 - 1.0j, 0.0),
    (0.0016 + 0.5j * 15.88 * 0.3, 2 * 0.0016 * 188.9 + 15.0j, -0.0016 * 188.9 ** 2),
    (0.25 + 0.5j * 15.88 * 2.0, -(2 * 0.25 * 0.0) + 25.0j, 0.0),
    (0.25 + 0.5j * 15.88 * 6.0, 10.0j, 0.0),
    (0.25 + 0.5j * 15.88 * 0.01, 5.0j, 0.0),
]


@pytest.mark.parametrize("A,B,C", CASES)
def test_contour_matches_oracle(A, B, C):
    ref = oracle(A, B, C)
    got = complex(half_line_contour(A, B, C))
    assert abs(got - ref) <= 1e-9 * max(abs(ref), 1e-300) + 1e-300


@pytest.mark.parametrize("A,B,C", CASES[:2] + CASES[3:])
def test_window_matches_oracle(A, B, C):
    ref = oracle(A, B, C)
    val, n, ok = half_line_window(A, B, C)
    assert ok
    assert abs(val - ref) <= 1e-7 * abs(ref)


@settings(max_examples=25)
@given(ar=hs.floats(0.01, 2.0), ai=hs.floats(-50.0, 50.0), br=hs.floats(-3.0, 3.0),
       bi=hs.floats(-40.0, 40.0))
def test_contour_property_against_oracle(ar, ai, br, bi):
    A, B = complex(ar, ai), complex(br, bi)
    ref = oracle(A, B, 0.0)
    got = complex(half_line_contour(A, B, 0.0))
    assert abs(got - ref) <= 1e-8 * max(abs(ref), 1e-30)


def test_contour_rejects_bad_A():
    with pytest.raises(ValueError):
        half_line_contour(-1.0, 0.0, 0.0)


def test_contour_broadcasts():
    A = np.array([1.0, 2.0]) + 0.1j
    out = half_line_contour(A, 0.5, 0.0)
    assert out.shape == (2,)
