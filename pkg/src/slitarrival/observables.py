"""Observables derived from joint densities and cross-proposal metrics."""
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalDiagnostic, WindowTooSmall
from .rng import uniforms
from .screens import TimeDistribution, trapezoid_weights

MASS_FLOOR = 1e-12
MIN_CAPTURE = 0.999


@dataclass
class MeanTime:
    value: float
    captured_fraction: float = 1.0

    def __float__(self):
        return self.value


@dataclass
class LocalMeanCurve:
    screen_coords: np.ndarray
    mean_time: np.ndarray
    mass: np.ndarray
    second_moment: np.ndarray = None

    @property
    def std_time(self):
        return np.sqrt(np.maximum(self.second_moment - self.mean_time ** 2, 0.0))


@dataclass
class Histogram:
    bin_edges: tuple
    counts: np.ndarray
    n_total: int
    seed: int = None
    meta: dict = field(default_factory=dict)


def mean_arrival_time(td):
    """Trapezoid mean of a time density, with the captured mass fraction."""
    norm = np.trapezoid(td.density, td.times)
    if norm <= 0:
        raise NumericalDiagnostic("time density has no mass")
    m = float(np.trapezoid(td.times * td.density, td.times) / norm)
    return MeanTime(m, float(td.meta.get("captured_fraction", 1.0)))


def local_mean_arrival_time(jd):
    """Conditional mean time per screen coordinate; NaN where mass < floor."""
    wt, _ = jd.grid.weights()
    t = jd.times
    mass = wt @ jd.density
    m1 = (wt * t) @ jd.density
    m2 = (wt * t * t) @ jd.density
    ok = mass > MASS_FLOOR
    mean = np.full(mass.shape, np.nan)
    sec = np.full(mass.shape, np.nan)
    mean[ok] = m1[ok] / mass[ok]
    sec[ok] = m2[ok] / mass[ok]
    return LocalMeanCurve(jd.coords, mean, mass, sec)


def cumulative_position(jd):
    """Position marginal int dt P(coord, t), renormalized on the screen span."""
    p = jd.position_marginal()
    norm = np.trapezoid(p, jd.coords)
    return p / norm if norm > 0 else p


def time_marginal(jd):
    td = jd.time_marginal()
    norm = td.integral()
    if norm > 0:
        td.density = td.density / norm
    td.meta.update({k: v for k, v in jd.meta.items() if isinstance(v, (int, float, str))})
    return td


def local_time_distribution(jd, x, half_width=125.0):
    """Time density conditioned on coord in [x - half_width, x + half_width]."""
    c = jd.coords
    sel = (c >= x - half_width) & (c <= x + half_width)
    if sel.sum() == 0:
        raise NumericalDiagnostic(f"no grid column within {half_width} of {x}")
    w = trapezoid_weights(c[sel]) if sel.sum() > 1 else np.ones(1)
    col = jd.density[:, sel] @ w
    norm = np.trapezoid(col, jd.times)
    if norm <= MASS_FLOOR:
        raise NumericalDiagnostic(f"column mass around {x} below floor")
    return TimeDistribution(jd.times, col / norm,
                            {"x": x, "half_width": half_width, "proposal": jd.proposal_tag})


def _cell_masses(jd):
    d = jd.density
    avg = 0.25 * (d[:-1, :-1] + d[1:, :-1] + d[:-1, 1:] + d[1:, 1:])
    area = np.diff(jd.times)[:, None] * np.diff(jd.coords)[None, :]
    return avg * area


def sample_events(jd, n, seed):
    """n (coord, t) samples: cell chosen by inverse CDF, uniform within the cell."""
    n = int(n)
    if n == 0:
        return np.zeros((0, 2))
    cells = _cell_masses(jd).ravel()
    cdf = np.cumsum(cells)
    cdf /= cdf[-1]
    u = uniforms(seed, 0, n)
    idx = np.searchsorted(cdf, u[:, 0], side="right")
    idx = np.minimum(idx, cells.size - 1)
    nc = jd.coords.size - 1
    it, ic = np.divmod(idx, nc)
    t = jd.times[it] + u[:, 1] * (jd.times[it + 1] - jd.times[it])
    x = jd.coords[ic] + u[:, 2] * (jd.coords[ic + 1] - jd.coords[ic])
    return np.column_stack([x, t])


def histogram_events(events, coord_edges, time_edges, seed=None):
    ev = np.asarray(events, dtype=float).reshape(-1, 2)
    counts, _, _ = np.histogram2d(ev[:, 1], ev[:, 0], bins=[time_edges, coord_edges])
    return Histogram((np.asarray(time_edges), np.asarray(coord_edges)), counts,
                     int(counts.sum()), seed)


def _check_capture(jd, force):
    cap = jd.meta.get("captured_fraction")
    if cap is not None and cap < MIN_CAPTURE and not force:
        raise WindowTooSmall(
            f"{jd.proposal_tag} window captures {cap:.4f} of its mass; pass force=True")


def total_variation(jd_a, jd_b):
    if jd_a.grid.shape != jd_b.grid.shape:
        raise ValueError("grids differ")
    wt, wc = jd_a.grid.weights()
    return 0.5 * float(wt @ np.abs(jd_a.density - jd_b.density) @ wc)


def events_for_resolution(sigma_a, sigma_b, gap, z=5.0):
    """Events per proposal so that |gap| = z standard errors of the difference."""
    var = np.asarray(sigma_a) ** 2 + np.asarray(sigma_b) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        return z * z * var / np.asarray(gap) ** 2


def compare(jd_a, jd_b, region=None, force=False, z=5.0):
    """Discrepancy metrics between two joints on the same grid."""
    _check_capture(jd_a, force)
    _check_capture(jd_b, force)
    tv = total_variation(jd_a, jd_b)
    la = local_mean_arrival_time(jd_a)
    lb = local_mean_arrival_time(jd_b)
    shift = lb.mean_time - la.mean_time
    mask = np.isfinite(shift)
    if region is not None:
        mask &= (jd_a.coords >= region[0]) & (jd_a.coords <= region[1])
    rec = {"total_variation": tv, "proposals": [jd_a.proposal_tag, jd_b.proposal_tag],
           "max_local_mean_gap": 0.0, "argmax_coord": None, "events_5sigma": None,
           "events_for_0p01ms_se": None, "region": list(region) if region else None}
    if mask.any():
        gaps = np.abs(shift[mask])
        i = int(np.argmax(gaps))
        coords = jd_a.coords[mask]
        sa = la.std_time[mask][i]
        sb = lb.std_time[mask][i]
        n5 = events_for_resolution(sa, sb, gaps[i], z)
        rec.update({"max_local_mean_gap": float(gaps[i]), "argmax_coord": float(coords[i]),
                    "events_5sigma": float(n5),
                    "events_for_0p01ms_se": float(max(sa, sb) ** 2 / 1e-4),
                    "local_std": [float(sa), float(sb)]})
    rec["column_mean_shift"] = shift
    return rec


def column_means_from_events(t, c, coord_edges, time_range):
    """Per-column mean event time, its standard error and the event count."""
    t = np.asarray(t, dtype=float)
    c = np.asarray(c, dtype=float)
    sel = (t >= time_range[0]) & (t <= time_range[1])
    t, c = t[sel], c[sel]
    col = np.searchsorted(coord_edges, c, side="right") - 1
    ok = (col >= 0) & (col < len(coord_edges) - 1)
    t, col = t[ok], col[ok]
    nb = len(coord_edges) - 1
    n = np.bincount(col, minlength=nb).astype(float)
    s1 = np.bincount(col, weights=t, minlength=nb)
    s2 = np.bincount(col, weights=t * t, minlength=nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = s1 / n
        var = (s2 - n * mean ** 2) / (n - 1)
        se = np.sqrt(np.maximum(var, 0) / n)
    return mean, se, n


def bootstrap_tv(t, c, trajectory, n_trajectories, time_edges, coord_edges, reference,
                 n_boot=50, seed=0):
    """TV between an event histogram and reference bin masses, plus its MC error.

    The MC error is the mean TV between bootstrap replicates (trajectories
    resampled with replacement) and the original histogram.
    """
    t = np.asarray(t, dtype=float)
    c = np.asarray(c, dtype=float)
    h, _, _ = np.histogram2d(t, c, bins=[time_edges, coord_edges])
    p = h / h.sum()
    q = np.asarray(reference, dtype=float)
    q = q / q.sum()
    tv = 0.5 * float(np.abs(p - q).sum())
    n = int(n_trajectories)
    reps = []
    key = (int(seed) ^ 0xB0075) % 2 ** 64
    per_block = -(-n // 4)
    for b in range(n_boot):
        u = uniforms(key, b * per_block, per_block).ravel()[:n]
        pick = np.minimum((u * n).astype(np.int64), n - 1)
        mult = np.bincount(pick, minlength=n)
        hb, _, _ = np.histogram2d(t, c, bins=[time_edges, coord_edges],
                                  weights=mult[trajectory])
        reps.append(0.5 * float(np.abs(hb / hb.sum() - p).sum()))
    reps = np.array(reps)
    return {"total_variation": tv, "bootstrap_error": float(reps.mean()),
            "bootstrap_spread": float(reps.std()), "n_boot": int(n_boot),
            "n_events": int(h.sum())}
