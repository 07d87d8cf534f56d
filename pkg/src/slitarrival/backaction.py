"""Detector back-action: absorbing boundary rule (ABR) and path-integral
absorbing boundary (PAB) on a horizontal screen.

With a shared longitudinal packet the Robin condition dY/dy = i kappa Y on
y = L_y only involves the transverse factor, so the ABR problem is a 1D
Crank-Nicolson solve for Y on [y_min, L_y] with a Dirichlet wall at y_min.
The Robin row uses a ghost node, and the top node carries trapezoid weight
dy/2. With those two choices the discrete norm obeys exactly

    N^{n+1} - N^n = -dt * alpha * kappa * |Y_top^{n+1/2}|^2,

where Y^{n+1/2} is the average of the two time levels.
"""
from dataclasses import asdict, dataclass

import numba
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import EmptySupport, LeakageError, ResourceGuard, StabilityError
from .intrinsic import NormalView
from .screens import normalized

WALL_FRACTION = 0.05
MAX_2D_POINTS = 1024 * 1024


@dataclass(frozen=True)
class AbrConfig:
    kappa: float = 1.0
    y_min: float = None         # None: -s - 12 sigma_y(t_max)
    ny: int = None              # None: derived from dy
    dy: float = 0.1
    dt: float = 2e-4
    t_max: float = 12.0
    reflecting: bool = False    # replace the Robin row by a Neumann row
    max_courant: float = 4.0    # alpha dt / dy^2 accuracy bound

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.ny is not None and self.ny < 512:
            raise ValueError("ny must be >= 512")
        if not (self.dt > 0 and self.t_max > 0 and self.dy > 0):
            raise ValueError("dt, dy and t_max must be positive")


@dataclass(frozen=True)
class PabConfig:
    lam: float = 1.0            # um
    t_max: float = 12.0
    n_fine: int = 200001        # time nodes for the survival integral
    gradient: str = "free"      # "free" or "abr"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.gradient not in ("free", "abr"):
            raise ValueError("gradient must be 'free' or 'abr'")


@dataclass
class AbrSolution:
    times: np.ndarray           # step ends, times[0] = 0
    trace_times: np.ndarray     # step midpoints
    boundary_trace: np.ndarray  # Y(L_y) at the midpoints
    interior_norm: np.ndarray   # at the step ends
    config: AbrConfig
    L_y: float
    y: np.ndarray
    final_state: np.ndarray
    audit: dict

    @property
    def absorbed(self):
        return float(1.0 - self.interior_norm[-1])

    def boundary_flux(self, alpha):
        """alpha kappa |Y(L_y)|^2 at the step midpoints."""
        return alpha * self.config.kappa * np.abs(self.boundary_trace) ** 2

    def norm_loss_rate(self):
        """-dN/dt at the step midpoints."""
        return -np.diff(self.interior_norm) / np.diff(self.times)

    def cumulative_absorbed(self):
        return 1.0 - self.interior_norm[1:]


@numba.njit(cache=True)
def _cn_run(psi, g, row_b, nsteps, trace, norms, wall_n, wall_mass, dy):
    """Crank-Nicolson steps with a precomputed Thomas factorization.

    Interior rows: (1 - 2g) on the diagonal and g off it; last row is
    [2g, row_b]. The right-hand side uses the conjugate operator.
    """
    n = psi.size
    bl = 1 - 2 * g
    br = 1 + 2 * g
    cp = np.empty(n, np.complex128)
    minv = np.empty(n, np.complex128)
    minv[0] = 1 / bl
    cp[0] = g * minv[0]
    for i in range(1, n - 1):
        minv[i] = 1 / (bl - g * cp[i - 1])
        cp[i] = g * minv[i]
    minv[n - 1] = 1 / (row_b - 2 * g * cp[n - 2])
    rbl = 2 - row_b
    w = np.empty(n, np.complex128)
    for k in range(nsteps):
        old = psi[n - 1]
        d = br * psi[0] - g * psi[1]
        w[0] = d * minv[0]
        for i in range(1, n - 1):
            d = -g * (psi[i - 1] + psi[i + 1]) + br * psi[i]
            w[i] = (d - g * w[i - 1]) * minv[i]
        d = -2 * g * psi[n - 2] + rbl * psi[n - 1]
        w[n - 1] = (d - 2 * g * w[n - 2]) * minv[n - 1]
        psi[n - 1] = w[n - 1]
        for i in range(n - 2, -1, -1):
            psi[i] = w[i] - cp[i] * psi[i + 1]
        trace[k] = 0.5 * (old + psi[n - 1])
        s = 0.0
        for i in range(n - 1):
            s += psi[i].real ** 2 + psi[i].imag ** 2
        s += 0.5 * (psi[n - 1].real ** 2 + psi[n - 1].imag ** 2)
        norms[k + 1] = s * dy
        sw = 0.0
        for i in range(wall_n):
            sw += psi[i].real ** 2 + psi[i].imag ** 2
        if sw * dy > wall_mass[0]:
            wall_mass[0] = sw * dy


def abr_grid(st, L_y, cfg):
    """Node positions y_1..y_N (the Dirichlet wall sits at y_0 = y_min)."""
    if cfg.y_min is None:
        sig = max(c.sigma_t(cfg.t_max, st.alpha) for c in st.components)
        lowest = min(c.x0 + min(0.0, c.u * cfg.t_max) for c in st.components)
        y_min = lowest - 12 * sig
    else:
        y_min = float(cfg.y_min)
    if not y_min < L_y:
        raise ValueError("y_min must lie below the screen")
    n = cfg.ny if cfg.ny is not None else int(np.ceil((L_y - y_min) / cfg.dy))
    dy = (L_y - y_min) / n
    return y_min + dy * np.arange(1, n + 1), dy


def _norm_weights(n, dy):
    w = np.full(n, dy)
    w[-1] = 0.5 * dy
    return w


def solve_abr_transverse(st, L_y, cfg=AbrConfig()):
    """Evolve the transverse factor with the Robin detector at y = L_y."""
    a = st.alpha
    y, dy = abr_grid(st, L_y, cfg)
    if a * cfg.dt / dy ** 2 > cfg.max_courant:
        raise StabilityError(f"alpha dt / dy^2 = {a * cfg.dt / dy ** 2:.3g} exceeds "
                             f"{cfg.max_courant}; refine dt")
    psi = np.ascontiguousarray(st.transverse(y, 0.0), dtype=np.complex128)
    w = _norm_weights(y.size, dy)
    psi /= np.sqrt(np.sum(w * np.abs(psi) ** 2))
    g = 1j * 0.5 * cfg.dt * (-0.5 * a) / dy ** 2
    kappa = 0.0 if cfg.reflecting else cfg.kappa
    row_b = 1 + g * (-2 + 2j * kappa * dy)
    nsteps = int(round(cfg.t_max / cfg.dt))
    trace = np.empty(nsteps, np.complex128)
    norms = np.empty(nsteps + 1)
    norms[0] = 1.0
    wall_n = max(1, int(WALL_FRACTION * y.size))
    wall_mass = np.zeros(1)
    _cn_run(psi, g, row_b, nsteps, trace, norms, wall_n, wall_mass, dy)
    times = cfg.dt * np.arange(nsteps + 1)
    dn = np.diff(norms)
    audit = {"max_norm_increase": float(max(dn.max(), 0.0)), "wall_mass": float(wall_mass[0]),
             "n_nodes": int(y.size), "dy": dy, "dt": cfg.dt, "y_min": float(y[0] - dy)}
    if audit["max_norm_increase"] > 1e-10:
        raise StabilityError(f"norm increased by {audit['max_norm_increase']:.3g} in one step")
    if audit["wall_mass"] > 1e-8:
        raise LeakageError(f"mass {audit['wall_mass']:.3g} reached the lower wall")
    return AbrSolution(times, times[:-1] + 0.5 * cfg.dt, trace, norms, cfg, float(L_y), y,
                       psi, audit)


def _check_horizontal(screen):
    if screen.orientation != "horizontal":
        raise ValueError("back-action models are defined for horizontal screens only")


def _envelope(st, screen, grid):
    view = NormalView.for_screen(st, screen)
    return view.parallel_cell_density(grid.screen_coords, grid.times)


def abr_joint(st, screen, sol, grid):
    """|psi_x(x, t)|^2 |Y(L_y, t)|^2 on the grid, normalized."""
    _check_horizontal(screen)
    g = np.interp(grid.times, sol.trace_times, np.abs(sol.boundary_trace) ** 2)
    if not np.any(g > 0):
        raise EmptySupport("ABR boundary trace vanishes on the grid")
    env = _envelope(st, screen, grid)
    meta = {"absorbed": sol.absorbed, "kappa": sol.config.kappa, "L_y": sol.L_y}
    return normalized(grid, env * g[:, None], "ABR", meta)


def pab_rate(st, L_y, cfg, times, abr_solution=None):
    """(rate(t), survival(t)) of the PAB model at the given times."""
    a = st.alpha
    c = cfg.lam * a / np.pi
    t_end = max(cfg.t_max, float(np.max(times)))
    tf = np.linspace(0.0, t_end, cfg.n_fine)
    if cfg.gradient == "free":
        view = NormalView(st.components, L_y, a)
        gf = np.abs(view.derivative(tf)) ** 2
    else:
        if abr_solution is None:
            raise ValueError("gradient='abr' needs an ABR solution")
        k = abr_solution.config.kappa
        gf = k * k * np.interp(tf, abr_solution.trace_times,
                               np.abs(abr_solution.boundary_trace) ** 2)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (gf[1:] + gf[:-1]) * np.diff(tf))])
    surv_f = np.exp(-c * cum)
    g = np.interp(times, tf, gf)
    surv = np.interp(times, tf, surv_f)
    absorbed = 1.0 - float(np.interp(cfg.t_max, tf, surv_f))
    return c * g * surv, surv, absorbed


def pab_absorbed(st, L_y, cfg=PabConfig(), abr_solution=None):
    _, _, absorbed = pab_rate(st, L_y, cfg, np.array([0.0]), abr_solution)
    return absorbed


def calibrate_lambda(st, L_y, target, cfg=PabConfig()):
    """Lambda giving absorbed probability `target` by t_max (free gradient)."""
    if not 0 < target < 1:
        raise ValueError("target must be in (0, 1)")
    tf = np.linspace(0.0, cfg.t_max, cfg.n_fine)
    view = NormalView(st.components, L_y, st.alpha)
    integral = np.trapezoid(np.abs(view.derivative(tf)) ** 2, tf)
    return float(-np.log(1 - target) * np.pi / (st.alpha * integral))


def pab_joint(st, screen, cfg, grid, abr_solution=None):
    """PAB detection density with survival factor, normalized."""
    _check_horizontal(screen)
    rate, surv, absorbed = pab_rate(st, screen.offset, cfg, grid.times, abr_solution)
    env = _envelope(st, screen, grid)
    meta = {"absorbed": absorbed, "lambda": cfg.lam, "gradient": cfg.gradient,
            "L_y": float(screen.offset)}
    jd = normalized(grid, env * rate[:, None], "PAB", meta)
    jd.meta["survival_end"] = float(surv[-1])
    return jd


def kappa_sweep(st, L_y, kappas, cfg=AbrConfig()):
    """Absorbed probability for each kappa."""
    out = []
    for k in kappas:
        c = AbrConfig(**{**asdict(cfg), "kappa": float(k)})
        out.append(solve_abr_transverse(st, L_y, c).absorbed)
    return np.array(out)


def refine_optimum(kappas, absorbed):
    """Parabolic fit in log kappa around the best sweep point."""
    k = np.asarray(kappas, dtype=float)
    p = np.asarray(absorbed, dtype=float)
    order = np.argsort(k)
    k, p = k[order], p[order]
    i = int(np.argmax(p))
    if i == 0 or i == len(k) - 1:
        return float(k[i]), False
    x = np.log(k[i - 1:i + 2])
    c2, c1, _ = np.polyfit(x, p[i - 1:i + 2], 2)
    if c2 >= 0:
        return float(k[i]), True
    return float(np.exp(-c1 / (2 * c2))), True


def export_boundary_trace(sol, path):
    """CSV: t, Re Y, Im Y, |Y|^2, cumulative absorbed (at the step midpoints)."""
    cum = 1.0 - 0.5 * (sol.interior_norm[1:] + sol.interior_norm[:-1])
    data = np.column_stack([sol.trace_times, sol.boundary_trace.real, sol.boundary_trace.imag,
                            np.abs(sol.boundary_trace) ** 2, cum])
    header = "t_ms,re_chi_um^-1/2,im_chi_um^-1/2,abs_chi_sq_um^-1,cumulative_absorbed"
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.12e")
    return path


# small 2D oracle


@dataclass(frozen=True)
class Domain2D:
    x_lo: float
    x_hi: float
    nx: int
    y_min: float
    ny: int


def _lap1d(n, h, robin=None):
    """Dirichlet second-difference matrix; optional ghost-node Robin last row."""
    main = np.full(n, -2.0, complex)
    off = np.ones(n - 1, complex)
    lower = off.copy()
    if robin is not None:
        lower[-1] = 2.0
        main[-1] = -2.0 + 2j * robin * h
    return sp.diags([lower, main, off], [-1, 0, 1], format="csc") / h ** 2


def solve_2d_oracle(st, L_y, domain, cfg=AbrConfig(), reflect_top=False):
    """Full 2D Crank-Nicolson on a coarse grid with the Robin row on y = L_y.

    x uses Dirichlet walls at the window edges. Returns (times, boundary
    trace on the x nodes at step midpoints, norms, x, y).
    """
    if domain.nx * domain.ny > MAX_2D_POINTS:
        raise ResourceGuard(f"{domain.nx}x{domain.ny} exceeds the 2D oracle limit")
    a = st.alpha
    hx = (domain.x_hi - domain.x_lo) / (domain.nx + 1)
    x = domain.x_lo + hx * np.arange(1, domain.nx + 1)
    dy = (L_y - domain.y_min) / domain.ny
    y = domain.y_min + dy * np.arange(1, domain.ny + 1)
    kappa = 0.0 if (reflect_top or cfg.reflecting) else cfg.kappa
    Lx = _lap1d(domain.nx, hx)
    Ly = _lap1d(domain.ny, dy, robin=kappa)
    H = -0.5 * a * (sp.kron(Lx, sp.identity(domain.ny), format="csc")
                    + sp.kron(sp.identity(domain.nx), Ly, format="csc"))
    I = sp.identity(H.shape[0], format="csc")
    lhs = splu((I + 0.5j * cfg.dt * H).tocsc())
    rhs = (I - 0.5j * cfg.dt * H).tocsr()
    psi = (st.longitudinal_amplitude(x, 0.0)[:, None] * st.transverse(y, 0.0)[None, :]).ravel()
    wy = _norm_weights(domain.ny, dy)
    wts = (np.full(domain.nx, hx)[:, None] * wy[None, :]).ravel()
    psi = psi / np.sqrt(np.sum(wts * np.abs(psi) ** 2))
    nsteps = int(round(cfg.t_max / cfg.dt))
    top = np.arange(domain.nx) * domain.ny + domain.ny - 1
    trace = np.empty((nsteps, domain.nx), complex)
    norms = np.empty(nsteps + 1)
    norms[0] = 1.0
    for k in range(nsteps):
        old = psi[top]
        psi = lhs.solve(rhs @ psi)
        trace[k] = 0.5 * (old + psi[top])
        norms[k + 1] = float(np.sum(wts * np.abs(psi) ** 2))
    times = cfg.dt * np.arange(nsteps + 1)
    return {"times": times, "trace_times": times[:-1] + 0.5 * cfg.dt, "trace": trace,
            "norms": norms, "x": x, "y": y, "final": psi.reshape(domain.nx, domain.ny)}


def solve_x_cn(st, domain, cfg):
    """1D Crank-Nicolson for the longitudinal factor on the oracle x grid."""
    a = st.alpha
    hx = (domain.x_hi - domain.x_lo) / (domain.nx + 1)
    x = domain.x_lo + hx * np.arange(1, domain.nx + 1)
    H = -0.5 * a * _lap1d(domain.nx, hx)
    I = sp.identity(domain.nx, format="csc")
    lhs = splu((I + 0.5j * cfg.dt * H).tocsc())
    rhs = (I - 0.5j * cfg.dt * H).tocsr()
    psi = st.longitudinal_amplitude(x, 0.0).astype(complex)
    psi /= np.sqrt(np.sum(hx * np.abs(psi) ** 2))
    nsteps = int(round(cfg.t_max / cfg.dt))
    mids = np.empty((nsteps, domain.nx), complex)
    for k in range(nsteps):
        new = lhs.solve(rhs @ psi)
        mids[k] = 0.5 * (psi + new)
        psi = new
    return x, mids
