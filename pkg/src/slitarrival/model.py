"""Two-slit Gaussian state with closed-form evaluation.

Lengths are in micrometres and times in milliseconds. The only physical
constant that enters is alpha = hbar/m (um^2/ms); momenta are handled as
wavenumbers k = p/hbar in 1/um.

A 1D Gaussian mode with centre x0, velocity u and initial width sigma0 is

    psi(x, t) = (2 pi s_t^2)^(-1/4) exp(-(x - x0 - u t)^2 / (4 sigma0 s_t))
                * exp(i (u/alpha) (x - x0 - u t/2)),
    s_t = sigma0 (1 + i alpha t / (2 sigma0^2)),

and the two-slit state is psi_x(x, t) * [chi1(y, t) + chi2(y, t)] / sqrt(2).
"""
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

HBAR = 1.054571817e-34      # J s
MASS_HE = 6.64e-27          # kg, metastable helium

# 1 m^2/s = 1e12 um^2 / 1e3 ms
_M2S_TO_UM2MS = 1e9

CurrentVector = namedtuple("CurrentVector", ["jx", "jy"])


def alpha_from_mass(mass=MASS_HE, hbar=HBAR):
    """hbar/m in um^2/ms."""
    if mass <= 0 or hbar <= 0:
        raise ValueError("mass and hbar must be positive")
    return hbar / mass * _M2S_TO_UM2MS


@dataclass(frozen=True)
class UnitSystem:
    alpha: float = field(default_factory=alpha_from_mass)
    length_unit: str = "um"
    time_unit: str = "ms"

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError("alpha must be a positive finite number")


@dataclass(frozen=True)
class GaussianPacket1D:
    """Free Gaussian mode.

    ``t_offset`` shifts the time origin: the mode at time t is the t = 0
    Gaussian freely evolved for t + t_offset. It lets an evolved state be
    represented exactly without changing any formula.
    """
    x0: float
    u: float
    sigma0: float
    t_offset: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.sigma0) and self.sigma0 > 0):
            raise ValueError("sigma0 must be positive")
        if not np.isfinite(self.t_offset):
            raise ValueError("t_offset must be finite")

    def evolved(self, tau):
        return GaussianPacket1D(self.x0, self.u, self.sigma0, self.t_offset + tau)

    def _te(self, t):
        return np.asarray(t, dtype=float) + self.t_offset

    def width(self, t, alpha):
        """Complex width s_t."""
        return self.sigma0 * (1 + 1j * alpha * self._te(t) / (2 * self.sigma0 ** 2))

    def sigma_t(self, t, alpha):
        """Real rms width |s_t| of the density at time t."""
        return np.abs(self.width(t, alpha))

    def k0(self, alpha):
        return self.u / alpha

    def sigma_k(self):
        """rms width of |phi(k)|^2."""
        return 1.0 / (2 * self.sigma0)

    def log_amplitude(self, x, t, alpha):
        """Complex log of the amplitude (finite where the amplitude underflows)."""
        x = np.asarray(x, dtype=float)
        te = self._te(t)
        st = self.width(t, alpha)
        d = x - self.x0 - self.u * te
        return (-0.25 * np.log(2 * np.pi) - 0.5 * np.log(st)
                - d * d / (4 * self.sigma0 * st)
                + 1j * (self.u / alpha) * (x - self.x0 - 0.5 * self.u * te))

    def log_derivative(self, x, t, alpha):
        """d/dx log psi."""
        st = self.width(t, alpha)
        return -(np.asarray(x, dtype=float) - self.x0 - self.u * self._te(t)) \
            / (2 * self.sigma0 * st) + 1j * self.u / alpha

    def amplitude(self, x, t, alpha):
        return np.exp(self.log_amplitude(x, t, alpha))

    def derivative(self, x, t, alpha):
        return self.amplitude(x, t, alpha) * self.log_derivative(x, t, alpha)

    def momentum_amplitude(self, k, t, alpha):
        """phi(k, t) with psi(x) = (2 pi)^(-1/2) int phi(k) exp(ikx) dk."""
        k = np.asarray(k, dtype=float)
        s2 = self.sigma0 ** 2
        return ((2 * s2 / np.pi) ** 0.25
                * np.exp(-s2 * (k - self.k0(alpha)) ** 2 - 1j * k * self.x0
                         - 0.5j * alpha * k * k * self._te(t)))

    def current(self, x, t, alpha):
        """1D current alpha Im(psi* dpsi/dx)."""
        a = self.amplitude(x, t, alpha)
        return alpha * np.abs(a) ** 2 * np.imag(self.log_derivative(x, t, alpha))

    def centre(self, t):
        return self.x0 + self.u * self._te(t)

    def trajectory(self, x_start, t, alpha):
        """Bohmian path of a single Gaussian started at t = 0: centre plus
        an offset that scales with the width."""
        scale = self.sigma_t(t, alpha) / self.sigma_t(0.0, alpha)
        return self.centre(t) + (x_start - self.centre(0.0)) * scale


@dataclass(frozen=True)
class TwoSlitState:
    longitudinal: GaussianPacket1D
    transverse_up: GaussianPacket1D
    transverse_down: GaussianPacket1D
    units: UnitSystem = field(default_factory=UnitSystem)

    def __post_init__(self):
        up, dn = self.transverse_up, self.transverse_down
        if not np.isclose(up.sigma0, dn.sigma0, rtol=1e-12, atol=0):
            raise ValueError("both slits must have the same sigma0")
        if not np.isclose(abs(up.u), abs(dn.u), rtol=1e-12, atol=1e-300):
            raise ValueError("both slits must have the same |u|")

    @classmethod
    def symmetric(cls, s=10.0, sigma_x=0.04, sigma_y=0.5, u_x=3000.0, u_y=0.0,
                  x0=0.0, alpha=None):
        """Slits at y = +s and -s sharing one longitudinal packet.

        For u_y != 0 the upper slit moves with +u_y and the lower one with -u_y.
        """
        units = UnitSystem() if alpha is None else UnitSystem(alpha=alpha)
        return cls(GaussianPacket1D(x0, u_x, sigma_x),
                   GaussianPacket1D(s, u_y, sigma_y),
                   GaussianPacket1D(-s, -u_y, sigma_y),
                   units)

    @classmethod
    def default(cls):
        return cls.symmetric()

    @property
    def alpha(self):
        return self.units.alpha

    def evolved(self, tau):
        """The same state freely evolved by tau."""
        return TwoSlitState(self.longitudinal.evolved(tau), self.transverse_up.evolved(tau),
                            self.transverse_down.evolved(tau), self.units)

    @property
    def components(self):
        return (self.transverse_up, self.transverse_down)

    @property
    def half_separation(self):
        return 0.5 * (self.transverse_up.x0 - self.transverse_down.x0)

    # transverse factor Y = (chi1 + chi2)/sqrt(2)

    def _log_terms(self, y, t):
        a = self.alpha
        l1 = self.transverse_up.log_amplitude(y, t, a)
        l2 = self.transverse_down.log_amplitude(y, t, a)
        return l1, l2

    def transverse(self, y, t):
        l1, l2 = self._log_terms(y, t)
        return (np.exp(l1) + np.exp(l2)) / np.sqrt(2)

    def transverse_derivative(self, y, t):
        a = self.alpha
        l1, l2 = self._log_terms(y, t)
        g1 = self.transverse_up.log_derivative(y, t, a)
        g2 = self.transverse_down.log_derivative(y, t, a)
        return (g1 * np.exp(l1) + g2 * np.exp(l2)) / np.sqrt(2)

    def transverse_log_derivative(self, y, t):
        """dY/dy / Y evaluated without underflow."""
        a = self.alpha
        l1, l2 = self._log_terms(y, t)
        g1 = self.transverse_up.log_derivative(y, t, a)
        g2 = self.transverse_down.log_derivative(y, t, a)
        m = np.maximum(l1.real, l2.real)
        e1 = np.exp(l1 - m)
        e2 = np.exp(l2 - m)
        return (g1 * e1 + g2 * e2) / (e1 + e2)

    def transverse_current(self, y, t):
        Y = self.transverse(y, t)
        return self.alpha * np.imag(np.conj(Y) * self.transverse_derivative(y, t))

    def transverse_momentum(self, k, t):
        a = self.alpha
        return (self.transverse_up.momentum_amplitude(k, t, a)
                + self.transverse_down.momentum_amplitude(k, t, a)) / np.sqrt(2)

    def longitudinal_amplitude(self, x, t):
        return self.longitudinal.amplitude(x, t, self.alpha)

    def longitudinal_density(self, x, t):
        return np.abs(self.longitudinal_amplitude(x, t)) ** 2

    def transverse_density(self, y, t):
        return np.abs(self.transverse(y, t)) ** 2


def packet_amplitude(p, x, t, alpha=None):
    """Amplitude of one Gaussian mode at (x, t)."""
    alpha = UnitSystem().alpha if alpha is None else alpha
    return p.amplitude(x, t, alpha)


def state_amplitude(st, x, y, t):
    return st.longitudinal_amplitude(x, t) * st.transverse(y, t)


def state_gradient(st, x, y, t):
    """(d psi/dx, d psi/dy), analytic."""
    a = st.alpha
    px = st.longitudinal_amplitude(x, t)
    Y = st.transverse(y, t)
    dpx = px * st.longitudinal.log_derivative(x, t, a)
    return dpx * Y, px * st.transverse_derivative(y, t)


def momentum_amplitude(st, kx, ky, t):
    """Momentum-space amplitude at wavenumbers (kx, ky)."""
    return (st.longitudinal.momentum_amplitude(kx, t, st.alpha)
            * st.transverse_momentum(ky, t))


def current_at(st, x, y, t):
    """Probability current J = alpha Im(psi* grad psi)."""
    a = st.alpha
    rx = st.longitudinal_density(x, t)
    ry = st.transverse_density(y, t)
    jx = ry * st.longitudinal.current(x, t, a)
    jy = rx * st.transverse_current(y, t)
    return CurrentVector(jx, jy)


def velocity_at(st, x, y, t):
    """Bohmian velocity alpha Im(grad psi / psi)."""
    a = st.alpha
    vx = a * np.imag(st.longitudinal.log_derivative(x, t, a))
    vy = a * np.imag(st.transverse_log_derivative(y, t))
    return vx, vy


def transverse_phase_rate(st, t):
    """|d/dy| of the relative phase of the two slit modes (1/um).

    The local fringe width is 2 pi / rate.
    """
    a = st.alpha
    up, dn = st.components
    g1 = up.log_derivative(0.0, t, a)
    g2 = dn.log_derivative(0.0, t, a)
    return np.abs(np.imag(g1 - g2))
