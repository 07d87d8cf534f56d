"""Half-line Gaussian integrals with a square-root weight.

    H(A, B, C) = int_0^inf sqrt(k) exp(-A k^2 + B k + C) dk,   Re A > 0.

These are the building blocks of the Kijowski screen amplitudes: every
Gaussian momentum component, free phase and plane wave combine into one
complex quadratic exponent. Two evaluators are provided:

* ``half_line_contour`` deforms the path into the complex k plane, where
  the integrand is non-oscillatory, and applies Gauss-Legendre there. Cost
  does not depend on how many oscillations the real-axis integrand has.
* ``half_line_window`` integrates on the real axis over a finite window with
  node doubling. It is simple and serves as a reference.
"""
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

# exp(-40) ~ 4e-18 relative cut for the steepest-descent legs
_DECAY = 40.0
_WINDOW_DECAY = 46.0


@lru_cache(maxsize=16)
def _gauss_legendre(n):
    x, w = leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def half_line_contour(A, B, C, n=256):
    """Evaluate H(A, B, C) elementwise; arguments broadcast.

    With A = |A| e^{i phi} the substitution k = e^{-i phi/2} s turns the
    quadratic part real. If the saddle k* = B/(2A) lies on the near side of
    that ray (or is too shallow to matter) a single ray from 0 suffices.
    Otherwise the path is a ray from 0 along the opposite direction followed
    by the steepest-descent line through k*; the sqrt branch cut is then
    moved off the path as needed. A single ray is tilted inside the decay
    sector when the linear term would make it oscillate, and rays that still
    carry many cycles get more nodes.
    """
    A, B, C = np.broadcast_arrays(np.asarray(A, complex), np.asarray(B, complex),
                                  np.asarray(C, complex))
    shape = A.shape
    A = A.ravel()
    B = B.ravel()
    C = C.ravel()
    if np.any(A.real <= 0):
        raise ValueError("half_line_contour needs Re A > 0")
    absA = np.abs(A)
    phi = np.angle(A)
    d = np.exp(-0.5j * phi)
    kstar = B / (2 * A)
    z = kstar * np.exp(0.5j * phi)
    a = z.real
    b = z.imag
    single = (a <= 0) | (absA * b * b <= 2.0)
    sgn = np.where(single, 1.0, -1.0)
    aa = sgn * a
    c = _DECAY / absA
    # ray length: root of s^2 - 2 aa s = c in a cancellation-free form
    smax = np.where(aa > 0, aa + np.sqrt(aa * aa + c), c / (np.sqrt(aa * aa + c) - aa))
    direction = (sgn * d).astype(complex)
    argdir = np.where(single, -0.5 * phi, np.pi - 0.5 * phi)
    cut_up = (~single) & (b < 0)
    argdir = np.where(cut_up, argdir - 2 * np.pi, argdir).astype(float)
    # the ray can still oscillate through the linear term: tilt it inside the
    # sector where the quadratic part decays, never raising the peak and never
    # sweeping across the sqrt branch cut
    tilt = np.linspace(-1.0, 1.0, 9) * (np.pi / 4 - 0.02)
    th = argdir[:, None] + tilt[None, :]
    e = np.exp(1j * th)
    qa = A[:, None] * e * e
    lb = B[:, None] * e
    ra, rb = qa.real, lb.real
    growth = np.maximum(rb, 0.0) ** 2 / (4 * ra)
    D = _DECAY + growth
    disc = np.sqrt(rb * rb + 4 * ra * D)
    length = np.where(rb > 0, (rb + disc) / (2 * ra), 2 * D / (disc - rb))
    cyc = (np.abs(lb.imag) * length + np.abs(qa.imag) * length ** 2) / (2 * np.pi)
    keep = growth <= growth[:, 4:5] + 1e-9
    upper = (argdir <= np.pi)[:, None]
    cross = (~single & ~cut_up)[:, None] & np.where(upper, th > np.pi, th <= np.pi)
    cyc = np.where(keep & ~cross, cyc, np.inf)
    best = np.argmin(cyc, axis=1)
    r = np.arange(A.size)
    tilted = best != 4
    direction = np.where(tilted, e[r, best], direction)
    argdir = np.where(tilted, th[r, best], argdir)
    smax = np.where(tilted, length[r, best], smax)
    # give each element enough nodes for the cycles left on its ray
    cycles = (np.abs((B * direction).imag) * smax
              + np.abs((A * direction ** 2).imag) * smax ** 2) / (2 * np.pi)
    need = np.clip(2 ** np.ceil(np.log2(np.maximum(4 * cycles, 1))), n, 1 << 15).astype(np.int64)
    out = np.zeros(A.shape, complex)
    for m in np.unique(need):
        xg, wg = _gauss_legendre(int(m))
        group = np.nonzero(need == m)[0]
        step = max(1, (1 << 20) // int(m))
        for lo in range(0, group.size, step):
            i = group[lo:lo + step]
            out[i] = _ray(A[i], B[i], C[i], smax[i], direction[i], argdir[i], xg, wg)

    two = ~single
    if two.any():
        xg, wg = _gauss_legendre(n)
        idx = np.nonzero(two)[0]
        Ai, Bi, Ci = A[idx], B[idx], C[idx]
        di, ks = d[idx], kstar[idx]
        W = np.sqrt(_DECAY / absA[idx])
        sl = xg[None, :] * W[:, None]
        wl = wg[None, :] * W[:, None]
        kl = ks[:, None] + di[:, None] * sl
        ang = np.angle(kl)
        ang = np.where(cut_up[idx][:, None] & (ang > np.pi / 2), ang - 2 * np.pi, ang)
        sqk = np.sqrt(np.abs(kl)) * np.exp(0.5j * ang)
        E = Ci + Bi * Bi / (4 * Ai)
        g = sqk * np.exp(-absA[idx][:, None] * sl ** 2 + E[:, None]) * di[:, None]
        out[idx] += (g * wl).sum(axis=1)
    return out.reshape(shape)


def _ray(A, B, C, smax, direction, argdir, xg, wg):
    """Integral along the ray k = direction * s, 0 <= s <= smax."""
    # s = q^2 removes the sqrt(s) endpoint singularity
    root = np.sqrt(smax)[:, None]
    q = 0.5 * (xg[None, :] + 1) * root
    wq = 0.5 * wg[None, :] * root
    di = direction[:, None]
    kk = di * q * q
    sqrt_k = q * np.exp(0.5j * argdir)[:, None]
    f = sqrt_k * np.exp(-A[:, None] * kk ** 2 + B[:, None] * kk + C[:, None]) * di * 2 * q
    return (f * wq).sum(axis=1)


def half_line_window(A, B, C, n_start=512, rtol=1e-8, max_nodes=1 << 20):
    """Real-axis reference for H(A, B, C) on one (A, B, C) triple.

    The window covers |integrand| down to exp(-46) of its half-line peak,
    clipped at k = 0 so the sqrt cusp sits on a panel edge. Nodes double until the
    result changes by less than ``rtol`` relative (absolute for tiny values).

    Returns (value, n_nodes, converged).
    """
    A = complex(A)
    B = complex(B)
    C = complex(C)
    if A.real <= 0:
        raise ValueError("half_line_window needs Re A > 0")
    ar, br = A.real, B.real
    centre = br / (2 * ar)
    if centre > 0:
        half = np.sqrt(_WINDOW_DECAY / ar)
        lo, hi = max(0.0, centre - half), centre + half
    else:
        # modulus is largest at k = 0 and decays monotonically
        lo = 0.0
        hi = (br + np.sqrt(br * br + 4 * ar * _WINDOW_DECAY)) / (2 * ar)

    def rule(n):
        x, w = _gauss_legendre(n)
        k = 0.5 * (hi - lo) * (x + 1) + lo
        f = np.sqrt(k) * np.exp(-A * k * k + B * k + C)
        return 0.5 * (hi - lo) * np.dot(w, f)

    n = n_start
    prev = rule(n)
    while n < max_nodes:
        n *= 2
        cur = rule(n)
        scale = max(abs(cur), 1e-300)
        if abs(cur - prev) <= rtol * scale:
            return cur, n, True
        prev = cur
    return prev, n, False
