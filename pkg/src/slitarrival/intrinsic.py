"""Detector-free arrival proposals on a screen.

Because the state is a product psi_x(x, t) * Y(y, t), every proposal on an
axis-aligned screen factorizes into a density along the screen times a
function g(t) of the 1D state along the normal:

    P(coord, t) = |parallel factor(coord, t)|^2 * g(t)

* SC:  g = |L|/(alpha t^2) |phi0(L/(alpha t))|^2
* STD: g = |K+(L, t)|^2 + |K-(L, t)|^2 (Kijowski half-line amplitudes)
* QF:  g = |j(L, t)|, QF+/QF-: the positive/negative parts of j.n

On horizontal-screen grids the parallel factor is stored as a cell average,
so coordinate sums stay exact while the packet is narrower than the grid.
"""
import numpy as np

from .errors import EmptySupport, QuadratureWindow, WindowTooSmall, ZeroMass
from .halfline import half_line_contour, half_line_window, _gauss_legendre
from .screens import JointDistribution, TimeDistribution, normalized, trapezoid_weights

MIN_CAPTURE = 0.999


class NormalView:
    """The 1D problem along the screen normal plus the parallel factor."""

    def __init__(self, components, L, alpha, normal_sign=1, state=None, screen=None):
        self.components = list(components)
        self.weight = 1.0 / np.sqrt(len(self.components))
        self.L = float(L)
        self.alpha = alpha
        self.normal_sign = normal_sign
        self.state = state
        self.screen = screen

    @classmethod
    def for_screen(cls, st, screen):
        if screen.orientation == "horizontal":
            comps = st.components
        else:
            comps = [st.longitudinal]
        return cls(comps, screen.offset, st.alpha, screen.normal_sign, st, screen)

    # normal factor

    def amplitude(self, t):
        a = self.alpha
        return self.weight * sum(c.amplitude(self.L, t, a) for c in self.components)

    def derivative(self, t):
        a = self.alpha
        return self.weight * sum(c.derivative(self.L, t, a) for c in self.components)

    def current(self, t):
        """Signed current along the coordinate axis (not yet projected on n)."""
        return self.alpha * np.imag(np.conj(self.amplitude(t)) * self.derivative(t))

    def momentum_amplitude(self, k, t=0.0):
        a = self.alpha
        return self.weight * sum(c.momentum_amplitude(k, t, a) for c in self.components)

    def momentum_density(self, k):
        return np.abs(self.momentum_amplitude(k)) ** 2

    def centre(self):
        return float(np.mean([c.x0 for c in self.components]))

    def momentum_window(self):
        lo = min(c.k0(self.alpha) - 8 * c.sigma_k() for c in self.components)
        hi = max(c.k0(self.alpha) + 8 * c.sigma_k() for c in self.components)
        return lo, hi

    def kijowski(self, t, method="contour", n=256):
        """(K+, K-) with + meaning positive momentum along the coordinate axis."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        a = self.alpha
        kp = np.zeros(t.shape, complex)
        km = np.zeros(t.shape, complex)
        for c in self.components:
            s2 = c.sigma0 ** 2
            k0 = c.k0(a)
            A = s2 + 0.5j * a * (t + c.t_offset)
            b = 2 * s2 * k0 + 1j * (self.L - c.x0)
            C = -s2 * k0 * k0
            pref = (2 * s2 / np.pi) ** 0.25 * np.sqrt(a / (2 * np.pi)) * self.weight
            for sign, acc in ((1, kp), (-1, km)):
                if method == "contour":
                    acc += pref * half_line_contour(A, sign * b, C, n=n)
                elif method == "window":
                    for i, Ai in enumerate(A):
                        v, _, ok = half_line_window(Ai, sign * b, C)
                        if not ok:
                            raise QuadratureWindow(
                                f"real-axis half-line quadrature did not converge at t={t[i]}")
                        acc[i] += pref * v
                else:
                    raise ValueError(f"unknown method {method!r}")
        return kp, km

    # parallel factor

    def parallel_amplitude(self, coords, t):
        st = self.state
        if self.screen.orientation == "horizontal":
            return st.longitudinal_amplitude(coords, t)
        return st.transverse(coords, t)

    def parallel_density(self, coords, times):
        """|parallel factor|^2 on the (time, coordinate) mesh."""
        coords = np.asarray(coords, dtype=float)
        times = np.asarray(times, dtype=float)
        st = self.state
        if self.screen.orientation == "horizontal":
            p = st.longitudinal
            sig = p.sigma_t(times, self.alpha)[:, None]
            c = p.centre(times)[:, None]
            return np.exp(-0.5 * ((coords[None, :] - c) / sig) ** 2) / (np.sqrt(2 * np.pi) * sig)
        out = np.empty((times.size, coords.size))
        for i, ti in enumerate(times):
            out[i] = st.transverse_density(coords, ti)
        return out

    def parallel_cell_density(self, coords, times):
        """Parallel density averaged over the trapezoid cell of each node.

        Horizontal screens use the closed-form Gaussian cell mass, so the
        trapezoid sum over the coordinates equals the exact strip mass even
        when the longitudinal packet is narrower than the grid spacing (early
        times). Vertical screens keep point values: the transverse state is
        always wide on practical grids.
        """
        from scipy.special import ndtr
        coords = np.asarray(coords, dtype=float)
        if self.screen.orientation != "horizontal" or coords.size < 2:
            return self.parallel_density(coords, times)
        times = np.asarray(times, dtype=float)
        p = self.state.longitudinal
        sig = p.sigma_t(times, self.alpha)[:, None]
        c = p.centre(times)[:, None]
        mid = 0.5 * (coords[1:] + coords[:-1])
        edges = np.concatenate([[coords[0]], mid, [coords[-1]]])
        mass = np.diff(ndtr((edges[None, :] - c) / sig), axis=1)
        return mass / trapezoid_weights(coords)[None, :]

    def parallel_capture(self, times):
        """Fraction of the parallel density inside the screen span, per time."""
        from scipy.special import ndtr
        lo, hi = self.screen.span
        st = self.state
        times = np.asarray(times, dtype=float)
        if self.screen.orientation == "horizontal":
            p = st.longitudinal
            sig = p.sigma_t(times, self.alpha)
            c = p.centre(times)
            return ndtr((hi - c) / sig) - ndtr((lo - c) / sig)
        # transverse: quadrature on a fine span grid
        y = np.linspace(lo, hi, 8001)
        return np.array([np.trapezoid(st.transverse_density(y, ti), y) for ti in times])


def _proposal_g(view, tag, t, method="contour"):
    """Normal factor g(t) for an intrinsic proposal."""
    t = np.asarray(t, dtype=float)
    ns = view.normal_sign
    if tag == "SC":
        return _sc_density(view, t)
    if tag == "STD":
        kp, km = view.kijowski(t, method=method)
        return np.abs(kp) ** 2 + np.abs(km) ** 2
    j = ns * view.current(t)
    if tag == "QF":
        return np.abs(j)
    if tag == "QF+":
        return np.where(j > 0, j, 0.0)
    if tag == "QF-":
        return np.where(j < 0, -j, 0.0)
    raise ValueError(f"not an intrinsic proposal: {tag!r}")


def _sc_density(view, t):
    d = view.L - view.centre()
    if d == 0:
        raise ValueError("semiclassical distribution needs L away from the source centre")
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    k = d / (view.alpha * tp)
    out[pos] = abs(d) / (view.alpha * tp ** 2) * view.momentum_density(k)
    return out


def _sc_window_mass(view, t_lo, t_hi):
    """Exact SC mass in [t_lo, t_hi] and over t > 0, via the momentum integral."""
    d = view.L - view.centre()
    a = view.alpha
    k_lo_all, k_hi_all = view.momentum_window()
    x, w = _gauss_legendre(2048)

    def integral(k1, k2):
        if k2 <= k1:
            return 0.0
        k = 0.5 * (k2 - k1) * (x + 1) + k1
        return 0.5 * (k2 - k1) * float(np.dot(w, view.momentum_density(k)))

    def kspan(t1, t2):
        # times -> momenta along the direction of d
        big = np.inf if t1 <= 0 else abs(d) / (a * t1)
        small = abs(d) / (a * t2) if np.isfinite(t2) else 0.0
        return small, big

    def signed_mass(t1, t2):
        small, big = kspan(t1, t2)
        if d > 0:
            return integral(max(small, k_lo_all), min(big, k_hi_all))
        return integral(max(-big, k_lo_all), min(-small, k_hi_all))

    return signed_mass(t_lo, t_hi), signed_mass(0.0, np.inf)


def _tail_mass(g, t_lo, t_hi, n=20001):
    """Mass of g outside [t_lo, t_hi] on [0, inf), assuming a t^-2 tail."""
    before = 0.0
    if t_lo > 0:
        tb = np.linspace(0.0, t_lo, n)
        before = float(np.trapezoid(g(tb), tb))
    ta = np.geomspace(t_hi, 1e3 * t_hi, n)
    ga = g(ta)
    after = float(np.trapezoid(ga, ta)) + float(ga[-1] * ta[-1])
    return before + after


def semiclassical_time_1d(packet, L, times, alpha=None, allow_truncation=False):
    """SC arrival-time density of one Gaussian mode at x = L."""
    from .model import UnitSystem
    if L == 0:
        raise ValueError("L must be non-zero")
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise ValueError("times must be positive")
    alpha = UnitSystem().alpha if alpha is None else alpha
    view = NormalView([packet], L, alpha)
    g = _sc_density(view, times)
    inside, total = _sc_window_mass(view, times[0], times[-1])
    capture = inside / total if total > 0 else 0.0
    if capture < MIN_CAPTURE and not allow_truncation:
        raise WindowTooSmall(f"time window captures {capture:.6f} of the arrival mass")
    mass = np.trapezoid(g, times)
    return TimeDistribution(times, g / mass, {"proposal": "SC", "captured_fraction": capture,
                                              "raw_mass": float(mass)})


def time_distribution(st, screen, times, tag, method="contour", allow_truncation=True):
    """Screen-integrated arrival-time density for an intrinsic proposal."""
    view = NormalView.for_screen(st, screen)
    times = np.asarray(times, dtype=float)
    g = _proposal_g(view, tag, times, method)
    cap = view.parallel_capture(times)
    raw = g * cap
    mass = float(np.trapezoid(raw, times))
    meta = _capture_meta(view, tag, times, mass, method)
    if meta["captured_fraction"] < MIN_CAPTURE and not allow_truncation:
        raise WindowTooSmall(f"window captures {meta['captured_fraction']:.6f} of {tag} mass")
    if mass <= 0:
        if tag == "QF-":
            raise ZeroMass("the signed flux has no mass on this side")
        raise EmptySupport(f"{tag} density vanishes on the window")
    meta["proposal"] = tag
    return TimeDistribution(times, raw / mass, meta)


def _capture_meta(view, tag, times, window_mass, method):
    t_lo, t_hi = float(times[0]), float(times[-1])
    if tag == "SC":
        inside, total = _sc_window_mass(view, t_lo, t_hi)
        total_mass = total
        time_capture = inside / total if total > 0 else 0.0
    else:
        g_inside = float(np.trapezoid(_proposal_g(view, tag, times, method), times))
        outside = _tail_mass(lambda t: _proposal_g(view, tag, t, "contour"), t_lo, t_hi)
        total_mass = g_inside + outside
        time_capture = g_inside / total_mass if total_mass > 0 else 0.0
    return {"total_mass_estimate": total_mass,
            "time_captured_fraction": time_capture,
            "captured_fraction": window_mass / total_mass if total_mass > 0 else 0.0,
            "window_raw_mass": window_mass}


def _joint(st, screen, grid, tag, method="contour"):
    view = NormalView.for_screen(st, screen)
    g = _proposal_g(view, tag, grid.times, method)
    par = view.parallel_cell_density(grid.screen_coords, grid.times)
    dens = par * g[:, None]
    wt, wc = grid.weights()
    mass = float(wt @ dens @ wc)
    if mass <= 0:
        if tag in ("QF+", "QF-"):
            raise ZeroMass(f"{tag} has zero mass on this screen")
        raise EmptySupport(f"{tag} density vanishes on the whole grid")
    meta = _capture_meta(view, tag, grid.times, mass, method)
    meta.update({"screen": screen.orientation, "offset": screen.offset})
    return normalized(grid, dens, tag, meta)


def semiclassical_joint(st, screen, grid):
    return _joint(st, screen, grid, "SC")


def standard_joint(st, screen, grid, method="contour"):
    return _joint(st, screen, grid, "STD", method)


def flux_joint(st, screen, grid):
    return _joint(st, screen, grid, "QF")


def flux_joint_signed(st, screen, grid, side):
    if side not in (1, -1, "+", "-"):
        raise ValueError("side must be +1/-1")
    tag = "QF+" if side in (1, "+") else "QF-"
    return _joint(st, screen, grid, tag)


def kijowski_screen_amplitudes(st, screen, coords, t, method="contour"):
    """(psi+, psi-) on the screen; + is the outward side of the normal."""
    view = NormalView.for_screen(st, screen)
    t = np.asarray(t, dtype=float)
    kp, km = view.kijowski(np.atleast_1d(t), method=method)
    kp = kp.reshape(t.shape)
    km = km.reshape(t.shape)
    if screen.normal_sign < 0:
        kp, km = km, kp
    par = view.parallel_amplitude(coords, t)
    return par * kp, par * km


def proposal_joint(st, screen, grid, tag, **kw):
    return _joint(st, screen, grid, tag, **kw)


def binned_joint(st, screen, coord_edges, time_edges, tag, n_sub=16, method="contour"):
    """Exact bin masses and first time moments of an intrinsic proposal.

    Returns (mass, t_moment), both (n_time_bins, n_coord_bins) and in absolute
    probability (not renormalized). Time bins use n_sub Gauss-Legendre nodes;
    along the screen the horizontal case is integrated in closed form.
    """
    from scipy.special import ndtr
    view = NormalView.for_screen(st, screen)
    ce = np.asarray(coord_edges, dtype=float)
    te = np.asarray(time_edges, dtype=float)
    x, w = _gauss_legendre(n_sub)
    half = 0.5 * np.diff(te)
    tn = (te[:-1, None] + half[:, None] * (x[None, :] + 1)).ravel()
    wn = (half[:, None] * w[None, :]).ravel()
    g = _proposal_g(view, tag, tn, method)
    if screen.orientation == "horizontal":
        p = st.longitudinal
        sig = p.sigma_t(tn, view.alpha)[:, None]
        c = p.centre(tn)[:, None]
        cdf = ndtr((ce[None, :] - c) / sig)
        par = np.diff(cdf, axis=1)
    else:
        ch = 0.5 * np.diff(ce)
        cn = (ce[:-1, None] + ch[:, None] * (x[None, :] + 1)).ravel()
        cw = (ch[:, None] * w[None, :]).ravel()
        dens = view.parallel_density(cn, tn) * cw[None, :]
        par = dens.reshape(tn.size, ce.size - 1, n_sub).sum(axis=2)
    weighted = (g * wn)[:, None] * par
    nt = te.size - 1
    mass = weighted.reshape(nt, n_sub, -1).sum(axis=1)
    moment = (weighted * tn[:, None]).reshape(nt, n_sub, -1).sum(axis=1)
    return mass, moment


def strip_probability(st, t, x_lo, x_hi):
    """P(longitudinal coordinate in [x_lo, x_hi]) at times t."""
    from scipy.special import ndtr
    p = st.longitudinal
    t = np.asarray(t, dtype=float)
    sig = p.sigma_t(t, st.alpha)
    c = p.centre(t)
    return ndtr((x_hi - c) / sig) - ndtr((x_lo - c) / sig)


def first_crossing_rate(st, screen, times, n_fine=400001):
    """Exact first-arrival (BTC) normal factor for a one-sided start.

    In 1D Bohmian paths keep their order, so the fraction that has crossed
    by t is the running maximum of the integrated flux G(t) = int_0^t j.n ds;
    its derivative is the first-arrival rate. Zero wherever G is below its
    running maximum (after backflow, until the lost flux is recovered).
    """
    view = NormalView.for_screen(st, screen)
    times = np.asarray(times, dtype=float)
    tf = np.linspace(0.0, max(float(times.max()), 1e-12), n_fine)
    j = view.normal_sign * view.current(tf)
    G = np.concatenate([[0.0], np.cumsum(0.5 * (j[1:] + j[:-1]) * np.diff(tf))])
    R = np.maximum.accumulate(G)
    rate = np.where(G >= R, np.maximum(j, 0.0), 0.0)
    return np.interp(times, tf, rate), tf, G, R
