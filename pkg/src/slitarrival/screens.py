"""Screens, grids and the distribution containers shared by all proposals."""
from dataclasses import dataclass, field

import numpy as np

PROPOSALS = ("SC", "STD", "QF", "QF+", "QF-", "BTC", "ABR", "PAB")


def trapezoid_weights(x):
    """Weights w with sum(w * f) == np.trapezoid(f, x)."""
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    if x.size < 2:
        return w
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


@dataclass(frozen=True)
class ScreenGeometry:
    """Axis-aligned detection line.

    vertical: x = offset, screen coordinate y, normal (normal_sign, 0).
    horizontal: y = offset, screen coordinate x, normal (0, normal_sign).
    """
    orientation: str
    offset: float
    span: tuple
    normal_sign: int = 1

    def __post_init__(self):
        if self.orientation not in ("vertical", "horizontal"):
            raise ValueError("orientation must be 'vertical' or 'horizontal'")
        if self.normal_sign not in (1, -1):
            raise ValueError("normal_sign must be +1 or -1")
        lo, hi = self.span
        if not hi > lo:
            raise ValueError("span must have positive length")
        object.__setattr__(self, "span", (float(lo), float(hi)))

    @property
    def normal(self):
        if self.orientation == "vertical":
            return (self.normal_sign, 0)
        return (0, self.normal_sign)

    @property
    def normal_axis(self):
        """0 if the screen is crossed along x, 1 if along y."""
        return 0 if self.orientation == "vertical" else 1

    @classmethod
    def vertical(cls, L_x=3.0e5, span=(-1.5e4, 1.5e4), normal_sign=1):
        return cls("vertical", L_x, span, normal_sign)

    @classmethod
    def horizontal(cls, L_y=15.0, span=(0.0, 3.0e4), normal_sign=1):
        return cls("horizontal", L_y, span, normal_sign)


@dataclass(frozen=True)
class SpaceTimeGrid:
    screen_coords: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.screen_coords, dtype=float)
        t = np.asarray(self.times, dtype=float)
        if c.ndim != 1 or t.ndim != 1 or c.size < 2 or t.size < 2:
            raise ValueError("grid axes must be 1D with at least two points")
        if np.any(np.diff(c) <= 0) or np.any(np.diff(t) <= 0):
            raise ValueError("grid axes must be strictly increasing")
        if t[0] < 0:
            raise ValueError("times must start at t >= 0")
        c.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "screen_coords", c)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, coord_range, n_coords, time_range, n_times):
        return cls(np.linspace(*coord_range, n_coords), np.linspace(*time_range, n_times))

    @classmethod
    def horizontal_default(cls):
        return cls.uniform((0.0, 3.0e4), 3000, (0.0, 12.0), 6000)

    @classmethod
    def vertical_default(cls):
        return cls.uniform((-1.5e4, 1.5e4), 3001, (70.0, 140.0), 1401)

    @property
    def shape(self):
        return (self.times.size, self.screen_coords.size)

    def weights(self):
        """(time weights, coordinate weights) for the trapezoid rule."""
        return trapezoid_weights(self.times), trapezoid_weights(self.screen_coords)


@dataclass
class TimeDistribution:
    times: np.ndarray
    density: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if self.times.shape != self.density.shape:
            raise ValueError("times and density must have the same shape")

    def integral(self):
        return float(np.trapezoid(self.density, self.times))

    def mean(self):
        return float(np.trapezoid(self.times * self.density, self.times) / self.integral())


@dataclass
class JointDistribution:
    """Density on (time, screen coordinate); rows are times."""
    grid: SpaceTimeGrid
    density: np.ndarray
    proposal_tag: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.density = np.asarray(self.density, dtype=float)
        if self.density.shape != self.grid.shape:
            raise ValueError(f"density shape {self.density.shape} != grid shape {self.grid.shape}")
        if self.proposal_tag not in PROPOSALS:
            raise ValueError(f"unknown proposal tag {self.proposal_tag!r}")

    @property
    def times(self):
        return self.grid.times

    @property
    def coords(self):
        return self.grid.screen_coords

    def integral(self):
        wt, wc = self.grid.weights()
        return float(wt @ self.density @ wc)

    def time_marginal(self):
        _, wc = self.grid.weights()
        return TimeDistribution(self.times, self.density @ wc, {"proposal": self.proposal_tag})

    def position_marginal(self):
        wt, _ = self.grid.weights()
        return wt @ self.density


def normalized(grid, density, tag, meta=None):
    """Wrap a raw non-negative density, normalizing on the grid."""
    density = np.asarray(density, dtype=float)
    if np.any(density < 0):
        raise ValueError("density must be non-negative")
    wt, wc = grid.weights()
    mass = float(wt @ density @ wc)
    meta = dict(meta or {})
    meta["raw_mass"] = mass
    if mass > 0:
        density = density / mass
    return JointDistribution(grid, density, tag, meta)
