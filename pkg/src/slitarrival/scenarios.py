"""Named scenarios: run a proposal set from an ExperimentConfig and write every
data product (CSV/JSON, PNG) plus a manifest with content hashes."""
import json
import logging
import os
import platform
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from . import plotting
from .backaction import (AbrConfig, PabConfig, abr_joint, calibrate_lambda,
                         export_boundary_trace, kappa_sweep, pab_absorbed, pab_joint,
                         refine_optimum, solve_abr_transverse)
from .bohm import events_joint, run_ensemble, write_event_dump
from .errors import NumericalDiagnostic, SlitArrivalError
from .intrinsic import binned_joint, proposal_joint, strip_probability
from .io import ensure_dir, sha256_file, write_csv, write_joint, write_json
from .observables import (bootstrap_tv, column_means_from_events, compare, cumulative_position,
                          local_mean_arrival_time, local_time_distribution, mean_arrival_time,
                          sample_events, time_marginal)
from .screens import JointDistribution, ScreenGeometry, SpaceTimeGrid

log = logging.getLogger("slitarrival")

SCENARIOS = ("vertical", "horizontal", "trajectories", "backaction", "sweep")
MANIFEST_LOG = "manifest.jsonl"


@dataclass
class RunManifest:
    scenario: str
    config: dict
    code_version: str
    files: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    status: str = "ok"
    error: dict = None
    environment: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def hashes(self):
        return {f["path"]: f["sha256"] for f in self.files}


def _safe(tag):
    return tag.replace("+", "plus").replace("-", "minus")


def _num(v):
    return f"{v:g}".replace("+", "")


class _Writer:
    """Tracks written products so the manifest can hash them."""

    def __init__(self, out, plots=True):
        self.out = ensure_dir(out)
        self.plots = plots
        self.paths = []

    def path(self, name):
        return os.path.join(self.out, name)

    def _add(self, p):
        self.paths.append(p)
        if os.path.exists(p + ".json") and not p.endswith(".json"):
            self.paths.append(p + ".json")
        return p

    def csv(self, name, columns, units, data):
        return self._add(write_csv(self.path(name), columns, units, data))

    def json(self, name, obj):
        return self._add(write_json(self.path(name), obj))

    def joint(self, name, jd, stride_t, stride_c):
        return self._add(write_joint(self.path(name), jd, stride_t, stride_c))

    def plot(self, fn, name, *args, **kw):
        if self.plots:
            self._add(fn(self.path(name), *args, **kw))

    def raw(self, p):
        return self._add(p)


class _Timer:
    def __init__(self):
        self.timings = {}

    def __call__(self, label):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.timings[label] = round(time.perf_counter() - self.t0, 3)
        return _Ctx()


# horizontal screen


def _horizontal_grid(h, t_max=None):
    return SpaceTimeGrid.uniform((h["x_min"], h["x_max"]), h["n_x"],
                                 (h["t_min"], h["t_max"] if t_max is None else t_max), h["n_t"])


def _local_block(jd, x, half_width):
    """Sub-joint of the columns within half_width of x."""
    sel = np.flatnonzero(np.abs(jd.coords - x) <= half_width)
    grid = SpaceTimeGrid(jd.coords[sel], jd.times)
    return JointDistribution(grid, jd.density[:, sel], jd.proposal_tag, {})


def _local_or_nan(jd, x, half_width):
    """Local time density, or NaNs where the strip carries no mass (undefined)."""
    try:
        return local_time_distribution(jd, x, half_width).density
    except NumericalDiagnostic:
        return np.full(jd.times.size, np.nan)


def _horizontal(cfg, w, timer, seed):
    st = cfg.state()
    h, o = cfg["horizontal"], cfg["output"]
    grid = _horizontal_grid(h)
    x_mm = grid.screen_coords * 1e-3
    t = grid.times
    summary = {"offsets": {}, "units": {"time": "ms", "coord": "um"}}
    for L in h["offsets"]:
        key = f"Ly{_num(L)}"
        screen = ScreenGeometry.horizontal(L, (h["x_min"], h["x_max"]))
        kept, tm, pm, lm, lt, means, caps = {}, {}, {}, {}, {}, {}, {}
        for tag in h["proposals"]:
            with timer(f"{key}_{tag}"):
                log.info("horizontal %s: %s joint", key, tag)
                jd = proposal_joint(st, screen, grid, tag, method=h["kijowski_method"])
                w.joint(f"joint_{_safe(tag)}_{key}.csv", jd, o["joint_stride_t"],
                        o["joint_stride_x"])
                w.plot(plotting.joint, f"joint_{_safe(tag)}_{key}.png", jd)
                td = time_marginal(jd)
                tm[tag] = td.density
                m = mean_arrival_time(td)
                means[tag] = {"mean_ms": m.value, "captured_fraction": m.captured_fraction}
                caps[tag] = jd.meta.get("captured_fraction")
                pm[tag] = cumulative_position(jd)
                lm[tag] = local_mean_arrival_time(jd).mean_time
                for x in h["probes"]:
                    lt[(tag, x)] = _local_or_nan(jd, x, h["probe_half_width"])
                if tag in ("SC", "STD", "QF"):
                    kept[tag] = jd
        tags = list(h["proposals"])
        w.csv(f"time_marginals_{key}.csv", ["t"] + tags, ["ms"] + ["ms^-1"] * len(tags),
              np.column_stack([t] + [tm[g] for g in tags]))
        w.csv(f"position_marginals_{key}.csv", ["x"] + tags, ["um"] + ["um^-1"] * len(tags),
              np.column_stack([grid.screen_coords] + [pm[g] for g in tags]))
        w.csv(f"local_mean_{key}.csv", ["x"] + tags, ["um"] + ["ms"] * len(tags),
              np.column_stack([grid.screen_coords] + [lm[g] for g in tags]))
        cols = [f"{g}_x{_num(x)}" for x in h["probes"] for g in tags]
        w.csv(f"local_time_{key}.csv", ["t"] + cols, ["ms"] + ["ms^-1"] * len(cols),
              np.column_stack([t] + [lt[(g, x)] for x in h["probes"] for g in tags]))
        w.plot(plotting.lines, f"time_marginals_{key}.png", t, {g: tm[g] for g in tags},
               "t (ms)", "arrival time density (1/ms)", f"L_y = {L:g} um",
               vlines={g: means[g]["mean_ms"] for g in tags})
        w.plot(plotting.lines, f"position_marginals_{key}.png", x_mm,
               {g: pm[g] * 1e3 for g in tags}, "x (mm)", "density (1/mm)", f"L_y = {L:g} um")
        w.plot(plotting.lines, f"local_mean_{key}.png", x_mm, {g: lm[g] for g in tags},
               "x (mm)", "local mean arrival time (ms)", f"L_y = {L:g} um")
        w.plot(plotting.panels, f"local_time_{key}.png", t,
               [{g: lt[(g, x)] for g in tags} for x in h["probes"]], "t (ms)", "1/ms",
               [f"x = {x * 1e-3:g} mm" for x in h["probes"]])

        comps = {}
        for a, b in (("STD", "QF"), ("SC", "QF"), ("SC", "STD")):
            if a in kept and b in kept:
                rec = compare(kept[a], kept[b], region=h["gray_region"], force=True)
                rec.pop("column_mean_shift")
                rec["captured_fraction"] = [caps[a], caps[b]]
                comps[f"{a}_vs_{b}"] = rec
        if h["samples"] > 0 and h["probes"]:
            x = h["probes"][-1]
            edges = np.linspace(h["t_min"], h["t_max"], 601)
            counts = {}
            for g, jd in kept.items():
                ev = sample_events(_local_block(jd, x, h["probe_half_width"]), h["samples"], seed)
                counts[g] = np.histogram(ev[:, 1], bins=edges)[0]
                means.setdefault(g, {})["sample_local_mean_ms"] = float(ev[:, 1].mean())
                means[g]["sample_local_se_ms"] = float(ev[:, 1].std(ddof=1) / np.sqrt(len(ev)))
            if counts:
                names = list(counts)
                w.csv(f"samples_hist_{key}_x{_num(x)}.csv", ["t_lo", "t_hi"] + names,
                      ["ms", "ms"] + ["count"] * len(names),
                      np.column_stack([edges[:-1], edges[1:]] + [counts[g] for g in names]))
                w.plot(plotting.histograms, f"samples_hist_{key}_x{_num(x)}.png", edges, counts,
                       "t (ms)", f"{h['samples']} samples at x = {x * 1e-3:g} mm")
        summary["offsets"][key] = {"L_y_um": L, "means": means, "comparisons": comps}
        kept.clear()
    tvs = [summary["offsets"][f"Ly{_num(L)}"]["comparisons"].get("STD_vs_QF", {})
           .get("total_variation") for L in h["offsets"]]
    summary["tv_std_qf_by_offset"] = dict(zip([_num(L) for L in h["offsets"]], tvs))
    w.json("metrics_horizontal.json", summary)
    return summary


# vertical screen


def _vertical(cfg, w, timer, seed):
    st = cfg.state()
    v, o = cfg["vertical"], cfg["output"]
    u = st.longitudinal.u
    summary = {"offsets": {}}
    curves = {}
    for L in v["offsets"]:
        key = f"Lx{_num(L)}"
        t_cl = (L - st.longitudinal.x0) / u
        grid = SpaceTimeGrid.uniform((v["y_min"], v["y_max"]), v["n_y"],
                                     (v["t_window"][0] * t_cl, v["t_window"][1] * t_cl),
                                     v["n_t"])
        screen = ScreenGeometry.vertical(L, (v["y_min"], v["y_max"]))
        tm, pm, lm, means = {}, {}, {}, {}
        for tag in v["proposals"]:
            with timer(f"{key}_{tag}"):
                log.info("vertical %s: %s joint", key, tag)
                jd = proposal_joint(st, screen, grid, tag)
                w.joint(f"joint_{_safe(tag)}_{key}.csv", jd, o["joint_stride_t"],
                        o["joint_stride_x"])
                w.plot(plotting.joint, f"joint_{_safe(tag)}_{key}.png", jd,
                       coord_label="y (mm)")
                td = time_marginal(jd)
                tm[tag] = td.density
                mt = mean_arrival_time(td)
                means[tag] = {"mean_ms": mt.value, "captured_fraction": mt.captured_fraction,
                              "rel_dev_classical": mt.value / t_cl - 1.0}
                pm[tag] = cumulative_position(jd)
                lm[tag] = local_mean_arrival_time(jd).mean_time
        tags = list(v["proposals"])
        sup = {}
        for i, a in enumerate(tags):
            for b in tags[i + 1:]:
                scale = max(tm[a].max(), tm[b].max())
                sup[f"{a}_vs_{b}"] = float(np.max(np.abs(tm[a] - tm[b])) / scale)
        t = grid.times
        w.csv(f"time_marginals_{key}.csv", ["t"] + tags, ["ms"] + ["ms^-1"] * len(tags),
              np.column_stack([t] + [tm[g] for g in tags]))
        w.csv(f"position_marginals_{key}.csv", ["y"] + tags, ["um"] + ["um^-1"] * len(tags),
              np.column_stack([grid.screen_coords] + [pm[g] for g in tags]))
        w.csv(f"local_mean_{key}.csv", ["y"] + tags, ["um"] + ["ms"] * len(tags),
              np.column_stack([grid.screen_coords] + [lm[g] for g in tags]))
        y_mm = grid.screen_coords * 1e-3
        w.plot(plotting.lines, f"time_marginals_{key}.png", t, {g: tm[g] for g in tags},
               "t (ms)", "arrival time density (1/ms)", f"L_x = {L * 1e-3:g} mm")
        w.plot(plotting.lines, f"position_marginals_{key}.png", y_mm,
               {g: pm[g] * 1e3 for g in tags}, "y (mm)", "density (1/mm)")
        w.plot(plotting.lines, f"local_mean_{key}.png", y_mm, {g: lm[g] for g in tags},
               "y (mm)", "local mean arrival time (ms)")
        curves[key] = (t, tm)
        summary["offsets"][key] = {"L_x_um": L, "classical_time_ms": t_cl, "means": means,
                                   "sup_norm_relative": sup}
    if len(curves) > 1:
        w.plot(plotting.xy_lines, "time_marginals_all.png",
               {f"{g} {k}": (c[0], c[1][g]) for k, c in curves.items() for g in v["proposals"]},
               "t (ms)", "arrival time density (1/ms)")
    w.json("metrics_vertical.json", summary)
    return summary


# Bohmian trajectories


def _coarse_edges(x_range, nx, t_range, nt):
    return np.linspace(*x_range, nx + 1), np.linspace(*t_range, nt + 1)


def _centre_grid(ce, te):
    return SpaceTimeGrid(0.5 * (ce[1:] + ce[:-1]), 0.5 * (te[1:] + te[:-1]))


def _probe_counts(ev, x, hw, te):
    sel = np.abs(ev["x"] - x) <= hw
    return np.histogram(ev["t"][sel], bins=te)[0]


def _strip_weighted(st, ev, x, hw, te):
    """Histogram of crossing times, each weighted by P(x-coordinate in strip | t).

    The longitudinal motion is independent of the transverse one, so this is
    the conditional expectation of the raw strip counts given the y-paths.
    """
    w = strip_probability(st, ev["t"], x - hw, x + hw)
    idx = np.searchsorted(te, ev["t"], side="right") - 1
    idx[ev["t"] == te[-1]] = te.size - 2
    ok = (idx >= 0) & (idx < te.size - 1)
    # sequential per-bin sums keep subset sums <= full sums exactly
    return np.bincount(idx[ok], weights=w[ok], minlength=te.size - 1)


def _gap_metrics(btc, allc, expected, rel_floor=0.01):
    """Bins inside the first-arrival support with no first arrivals although
    the all-arrival histogram and the analytic density (>= rel_floor of its
    peak) carry mass there."""
    exceed = int(np.sum(btc > allc))
    nz = np.flatnonzero(btc > 0)
    if nz.size == 0:
        return {"n_gap_bins": 0, "gap_bins": [], "exceed_violations": exceed}
    inner = np.zeros(btc.size, bool)
    inner[nz[0]:nz[-1] + 1] = True
    gaps = inner & (btc == 0) & (allc > 0) & (expected >= rel_floor * expected.max())
    return {"n_gap_bins": int(gaps.sum()), "gap_bins": np.flatnonzero(gaps).tolist(),
            "exceed_violations": exceed}


def _trajectories(cfg, w, timer, seed, threads):
    st = cfg.state()
    tr, h = cfg["trajectories"], cfg["horizontal"]
    n = tr["n"]
    screen = ScreenGeometry.horizontal(tr["L_y"], (h["x_min"], h["x_max"]))
    with timer("ensemble"):
        log.info("trajectories: integrating %d trajectories", n)
        res = run_ensemble(st, screen, n, seed, t_max=tr["t_max"], tol=tr["tol"],
                           threads=threads)
    ev = res.events
    if tr["write_events"]:
        w.raw(write_event_dump(res, w.path("events.bin"),
                               {"L_y_um": tr["L_y"], "units": {"t": "ms", "x": "um"}}))
    ce, te = _coarse_edges((h["x_min"], h["x_max"]), tr["hist_n_x"], (0.0, tr["t_max"]),
                           tr["hist_n_t"])
    grid = _centre_grid(ce, te)
    first = res.first_arrivals()
    o = cfg["output"]
    jd_all = events_joint(ev, n, grid, "QF")
    jd_btc = events_joint(first, n, grid, "BTC")
    for name, jd in (("mc_all", jd_all), ("mc_btc", jd_btc)):
        counts = jd.meta.pop("counts")
        w.joint(f"joint_{name}.csv", jd, 1, 1)
        w.csv(f"counts_{name}.csv", ["t_bin_centre"] + [f"x{i}" for i in range(counts.shape[1])],
              ["ms"] + ["count"] * counts.shape[1], np.column_stack([grid.times, counts]))
        w.plot(plotting.joint, f"joint_{name}.png", jd)
    with timer("analytic_bins"):
        mass, moment = binned_joint(st, screen, ce, te, "QF")
    with timer("bootstrap"):
        boot = bootstrap_tv(ev["t"], ev["x"], ev["seed_index"].astype(np.int64), n, te, ce,
                            mass, n_boot=tr["bootstrap"], seed=seed)
    mc_mean, mc_se, cnt = column_means_from_events(ev["t"], ev["x"], ce, (te[0], te[-1]))
    bt_mean, bt_se, bt_cnt = column_means_from_events(first["t"], first["x"], ce,
                                                      (te[0], te[-1]))
    col_mass = mass.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        qf_mean = np.where(col_mass > 1e-14, moment.sum(axis=0) / col_mass, np.nan)
        z = np.abs(mc_mean - qf_mean) / mc_se
    ok = (cnt >= 30) & np.isfinite(z)
    xc = grid.screen_coords
    w.csv("local_mean_mc.csv", ["x", "QF_analytic", "MC_all", "MC_all_se", "MC_all_count",
                                "MC_btc", "MC_btc_se", "MC_btc_count"],
          ["um", "ms", "ms", "ms", "count", "ms", "ms", "count"],
          np.column_stack([xc, qf_mean, mc_mean, mc_se, cnt, bt_mean, bt_se, bt_cnt]))
    w.plot(plotting.lines, "local_mean_mc.png", xc * 1e-3,
           {"QF analytic": qf_mean, "MC all": mc_mean, "BTC first": bt_mean},
           "x (mm)", "local mean arrival time (ms)", f"{n} trajectories")
    sub = ev[: min(ev.size, 400000)]
    w.plot(plotting.scatter, "events_by_order.png", sub["x"] * 1e-3, sub["t"],
           np.minimum(sub["order"], 4), "x (mm)", "t (ms)", "crossing order (4 = 4+)")

    pt_edges = te
    probes = {}
    rows, plots_rows = [], []
    for x in h["probes"]:
        hw = h["probe_half_width"]
        allc = _probe_counts(ev, x, hw, pt_edges)
        btc = _probe_counts(first, x, hw, pt_edges)
        m_strip, _ = binned_joint(st, screen, [x - hw, x + hw], pt_edges, "QF")
        expected = n * m_strip[:, 0]
        # conditional (Rao-Blackwellized) counts: every crossing weighted by the
        # exact probability that the longitudinal coordinate lies in the strip
        all_w = _strip_weighted(st, ev, x, hw, pt_edges)
        btc_w = _strip_weighted(st, first, x, hw, pt_edges)
        gm = {"raw": _gap_metrics(btc, allc, expected),
              "conditional": _gap_metrics(btc_w, all_w, expected),
              "n_all": int(allc.sum()), "n_btc": int(btc.sum()),
              "expected_all": float(expected.sum()),
              "conditional_all": float(all_w.sum()), "conditional_btc": float(btc_w.sum())}
        gm["gap_times_ms"] = [[float(pt_edges[i]), float(pt_edges[i + 1])]
                              for i in gm["conditional"]["gap_bins"]]
        probes[_num(x)] = gm
        rows += [allc, btc, all_w, btc_w, expected]
        plots_rows.append({"QF all (conditional)": all_w, "BTC first (conditional)": btc_w})
    cols = [f"{k}_x{_num(x)}" for x in h["probes"]
            for k in ("all", "btc", "all_conditional", "btc_conditional", "expected_all")]
    w.csv("local_time_counts_mc.csv", ["t_lo", "t_hi"] + cols,
          ["ms", "ms"] + ["count"] * len(cols),
          np.column_stack([pt_edges[:-1], pt_edges[1:]] + rows))
    if w.plots and h["probes"]:
        for x, cnts in zip(h["probes"], plots_rows):
            w.plot(plotting.histograms, f"local_time_mc_x{_num(x)}.png", pt_edges, cnts,
                   "t (ms)", f"x = {x * 1e-3:g} mm, {n} trajectories")
    summary = {"n_trajectories": n, "seed": seed, "n_events": int(ev.size),
               "n_first": int(first.size), "integrator": res.integrator_stats,
               "flux_equivalence": {**boot, "ratio": boot["total_variation"]
                                    / boot["bootstrap_error"],
                                    "analytic_window_mass": float(mass.sum()),
                                    "mc_window_fraction": float(np.histogram2d(
                                        ev["t"], ev["x"], bins=[te, ce])[0].sum() / n)},
               "local_mean_coverage": {"columns": int(ok.sum()),
                                       "within_2se": float(np.mean(z[ok] <= 2.0))
                                       if ok.any() else None,
                                       "max_z": float(np.max(z[ok])) if ok.any() else None},
               "probes": probes}
    w.json("metrics_trajectories.json", summary)
    return summary


# detector back-action


def _backaction(cfg, w, timer, seed, threads):
    st = cfg.state()
    b, h, o = cfg["backaction"], cfg["horizontal"], cfg["output"]
    L = b["L_y"]
    acfg = AbrConfig(kappa=b["kappa"], dy=b["dy"], dt=b["dt"], t_max=b["t_max"])
    with timer("abr_solve"):
        log.info("backaction: ABR solve, kappa=%g", b["kappa"])
        sol = solve_abr_transverse(st, L, acfg)
    w.raw(export_boundary_trace(sol, w.path("abr_boundary_trace.csv")))
    flux_total = float(np.sum(sol.boundary_flux(st.alpha) * np.diff(sol.times)))
    pcfg = PabConfig(lam=b["lam"], t_max=b["t_max"], gradient=b["pab_gradient"])
    screen = ScreenGeometry.horizontal(L, (h["x_min"], h["x_max"]))
    grid = _horizontal_grid(h, t_max=b["t_max"])
    with timer("joints"):
        jds = {"ABR": abr_joint(st, screen, sol, grid),
               "PAB": pab_joint(st, screen, pcfg, grid, abr_solution=sol),
               "QF": proposal_joint(st, screen, grid, "QF")}
    for tag, jd in jds.items():
        if tag != "QF":
            w.joint(f"joint_{tag}.csv", jd, o["joint_stride_t"], o["joint_stride_x"])
            w.plot(plotting.joint, f"joint_{tag}.png", jd)
    with timer("btc_ensemble"):
        log.info("backaction: %d first-arrival trajectories", b["btc_trajectories"])
        tr = cfg["trajectories"]
        res = run_ensemble(st, screen, b["btc_trajectories"], seed, t_max=b["t_max"],
                           tol=tr["tol"], threads=threads, stop_at_first=True)
    ce, te = _coarse_edges((h["x_min"], h["x_max"]), tr["hist_n_x"], (0.0, b["t_max"]),
                           tr["hist_n_t"])
    cgrid = _centre_grid(ce, te)
    btc = events_joint(res.first_arrivals(), res.n_trajectories, cgrid, "BTC")
    btc.meta.pop("counts")
    w.joint("joint_BTC.csv", btc, 1, 1)
    w.plot(plotting.joint, "joint_BTC.png", btc)

    tags = ["ABR", "PAB", "QF"]
    t = grid.times
    tm = {g: time_marginal(jds[g]).density for g in tags}
    pm = {g: cumulative_position(jds[g]) for g in tags}
    lm = {g: local_mean_arrival_time(jds[g]).mean_time for g in tags}
    w.csv("time_marginals.csv", ["t"] + tags, ["ms"] + ["ms^-1"] * 3,
          np.column_stack([t] + [tm[g] for g in tags]))
    w.csv("position_marginals.csv", ["x"] + tags, ["um"] + ["um^-1"] * 3,
          np.column_stack([grid.screen_coords] + [pm[g] for g in tags]))
    w.csv("local_mean.csv", ["x"] + tags, ["um"] + ["ms"] * 3,
          np.column_stack([grid.screen_coords] + [lm[g] for g in tags]))
    btc_tm = time_marginal(btc).density
    btc_pm = cumulative_position(btc)
    btc_lm = local_mean_arrival_time(btc).mean_time
    w.csv("btc_marginals.csv", ["x", "position_density", "local_mean"], ["um", "um^-1", "ms"],
          np.column_stack([cgrid.screen_coords, btc_pm, btc_lm]))
    w.csv("btc_time_marginal.csv", ["t", "BTC"], ["ms", "ms^-1"],
          np.column_stack([cgrid.times, btc_tm]))
    lt = {}
    for x in h["probes"]:
        for g in tags:
            lt[(g, x)] = _local_or_nan(jds[g], x, h["probe_half_width"])
    cols = [f"{g}_x{_num(x)}" for x in h["probes"] for g in tags]
    w.csv("local_time.csv", ["t"] + cols, ["ms"] + ["ms^-1"] * len(cols),
          np.column_stack([t] + [lt[k] for k in ((g, x) for x in h["probes"] for g in tags)]))
    x_mm = grid.screen_coords * 1e-3
    w.plot(plotting.lines, "time_marginals.png", t, tm, "t (ms)", "density (1/ms)",
           f"kappa = {b['kappa']:g}/um, lambda = {b['lam']:g} um")
    w.plot(plotting.lines, "position_marginals.png", x_mm, {g: pm[g] * 1e3 for g in tags},
           "x (mm)", "density (1/mm)")
    w.plot(plotting.lines, "local_mean.png", x_mm, lm, "x (mm)", "local mean arrival time (ms)")
    w.plot(plotting.panels, "local_time.png", t,
           [{g: lt[(g, x)] for g in tags} for x in h["probes"]], "t (ms)", "1/ms",
           [f"x = {x * 1e-3:g} mm" for x in h["probes"]])

    pa, pp = pm["ABR"], pm["PAB"]
    rel = np.abs(pp - pa) / np.maximum(np.maximum(pa, pp), 1e-300)
    near = (grid.screen_coords >= 600.0) & (grid.screen_coords <= 1000.0)
    bulk = np.maximum(pa, pp) >= 1e-3 * max(pa.max(), pp.max())
    i_near = np.flatnonzero(near)[np.argmax(rel[near])]
    i_bulk = np.flatnonzero(bulk)[np.argmax(rel[bulk])]
    summary = {
        "L_y_um": L,
        "abr": {"kappa": b["kappa"], "absorbed": sol.absorbed,
                "flux_balance_rel_error": abs(flux_total - sol.absorbed) / sol.absorbed,
                "audit": sol.audit},
        "pab": {"lambda": b["lam"], "gradient": b["pab_gradient"],
                "absorbed": jds["PAB"].meta["absorbed"],
                "lambda_matching_abr": calibrate_lambda(st, L, sol.absorbed, pcfg)},
        "btc": {"n_trajectories": res.n_trajectories, "n_first": int(res.first_arrivals().size),
                "first_arrival_fraction": res.first_arrivals().size / res.n_trajectories},
        "marginal_difference": {
            "max_rel_near_0p8mm": float(rel[i_near]), "at_x_um": float(grid.screen_coords[i_near]),
            "rel_at_0p8mm": float(np.interp(800.0, grid.screen_coords, rel)),
            "max_rel_bulk": float(rel[i_bulk]), "bulk_at_x_um": float(grid.screen_coords[i_bulk]),
            "definition": "|P_PAB - P_ABR| / max(P_ABR, P_PAB) of the x-marginals"},
        "means": {g: mean_arrival_time(time_marginal(jds[g])).value for g in tags},
    }
    w.json("metrics_backaction.json", summary)
    return summary


# parameter sweeps


def _sweep(cfg, w, timer, seed):
    st = cfg.state()
    s, b = cfg["sweep"], cfg["backaction"]
    vals = list(s["values"])
    acfg = AbrConfig(kappa=b["kappa"], dy=b["dy"], dt=b["dt"], t_max=b["t_max"])
    pcfg = PabConfig(lam=b["lam"], t_max=b["t_max"], gradient="free")
    summary = {"param": s["param"], "values": vals}
    with timer(f"sweep_{s['param']}"):
        if s["param"] == "kappa":
            absorbed = kappa_sweep(st, b["L_y"], vals, acfg)
            k_opt, interior = refine_optimum(vals, absorbed)
            summary.update({"abr_absorbed": absorbed, "argmax": vals[int(np.argmax(absorbed))],
                            "refined_optimum": k_opt, "interior_maximum": interior})
            cols, units, data = ["kappa", "abr_absorbed"], ["um^-1", ""], [vals, absorbed]
        elif s["param"] == "lam":
            absorbed = [pab_absorbed(st, b["L_y"], PabConfig(lam=v, t_max=b["t_max"]))
                        for v in vals]
            summary["pab_absorbed"] = absorbed
            cols, units, data = ["lambda", "pab_absorbed"], ["um", ""], [vals, absorbed]
        else:
            abr, pab = [], []
            for L in vals:
                abr.append(solve_abr_transverse(st, L, acfg).absorbed)
                pab.append(pab_absorbed(st, L, pcfg))
            summary.update({"abr_absorbed": abr, "pab_absorbed": pab})
            cols, units, data = ["L_y", "abr_absorbed", "pab_absorbed"], ["um", "", ""], \
                [vals, abr, pab]
    w.csv(f"sweep_{s['param']}.csv", cols, units, np.column_stack(data))
    w.plot(plotting.lines, f"sweep_{s['param']}.png", np.asarray(vals),
           {c: np.asarray(d) for c, d in zip(cols[1:], data[1:])}, s["param"],
           "absorbed probability")
    w.json(f"metrics_sweep_{s['param']}.json", summary)
    return summary


def run_scenario(name, cfg, out=None, threads=None, seed=None):
    """Run a named scenario and write its products plus a hashed manifest."""
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; valid: {list(SCENARIOS)}")
    o = cfg["output"]
    out = out or os.path.join(o["dir"], name)
    threads = threads if threads is not None else (o["threads"] or None)
    seed = seed if seed is not None else (o["seed"] if o["seed"] is not None
                                          else cfg["trajectories"]["seed"])
    w = _Writer(out, plots=o["plots"])
    timer = _Timer()
    manifest = RunManifest(name, cfg.echo(), __version__,
                           environment={"python": platform.python_version(),
                                        "numpy": np.__version__, "seed": seed,
                                        "threads": threads})
    t0 = time.perf_counter()
    try:
        if name == "horizontal":
            _horizontal(cfg, w, timer, seed)
        elif name == "vertical":
            _vertical(cfg, w, timer, seed)
        elif name == "trajectories":
            _trajectories(cfg, w, timer, seed, threads)
        elif name == "backaction":
            _backaction(cfg, w, timer, seed, threads)
        else:
            _sweep(cfg, w, timer, seed)
    except SlitArrivalError as exc:
        manifest.status = "error"
        manifest.error = exc.record()
        write_json(os.path.join(out, f"error_{name}.json"), exc.record())
        raise
    finally:
        timer.timings["total"] = round(time.perf_counter() - t0, 3)
        manifest.timings = timer.timings
        manifest.files = [{"path": os.path.relpath(p, out), "sha256": sha256_file(p),
                           "bytes": os.path.getsize(p)} for p in sorted(set(w.paths))]
        write_json(os.path.join(out, f"manifest_{name}.json"), manifest.to_dict())
        with open(os.path.join(out, MANIFEST_LOG), "a") as f:
            f.write(json.dumps({"scenario": name, "status": manifest.status,
                                "files": manifest.hashes(), "timings": manifest.timings},
                               sort_keys=True) + "\n")
    return manifest
