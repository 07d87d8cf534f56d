"""Matplotlib PNGs written next to the CSV/JSON products."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {"SC": "-.", "STD": "-", "QF": "--", "QF+": ":", "QF-": ":",
         "BTC": "-", "ABR": "-", "PAB": "--", "MC": "o"}
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def lines(path, x, curves, xlabel, ylabel, title=None, vlines=None, logy=False):
    """One panel with a line per entry of `curves` (label -> y)."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, y in curves.items():
        ax.plot(x, y, STYLE.get(label.split()[0], "-"), lw=1.1, label=label)
    for label, v in (vlines or {}).items():
        ax.axvline(v, lw=0.7, ls=":", color="gray")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def xy_lines(path, curves, xlabel, ylabel, title=None):
    """Lines with their own abscissae (label -> (x, y))."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, (x, y) in curves.items():
        ax.plot(x, y, STYLE.get(label.split()[0], "-"), lw=1.0, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    return _save(fig, path)


def panels(path, x, rows, xlabel, ylabel, titles):
    """Stacked panels; rows is a list of {label: y} dicts."""
    fig, axes = plt.subplots(len(rows), 1, figsize=(6.4, 2.2 * len(rows)), sharex=True,
                             squeeze=False)
    for ax, curves, title in zip(axes[:, 0], rows, titles):
        for label, y in curves.items():
            ax.plot(x, y, STYLE.get(label.split()[0], "-"), lw=1.0, label=label)
        ax.set_ylabel(ylabel)
        ax.set_title(title, fontsize=9)
        ax.legend(fontsize=7)
    axes[-1, 0].set_xlabel(xlabel)
    return _save(fig, path)


def joint(path, jd, coord_scale=1e-3, coord_label="x (mm)", max_pixels=1200):
    """Density plot of a joint on (coordinate, time)."""
    st = max(1, jd.times.size // max_pixels)
    sc = max(1, jd.coords.size // max_pixels)
    d = jd.density[::st, ::sc]
    c = jd.coords[::sc] * coord_scale
    t = jd.times[::st]
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    im = ax.imshow(d, origin="lower", aspect="auto", cmap="magma",
                   extent=[c[0], c[-1], t[0], t[-1]], interpolation="nearest")
    fig.colorbar(im, ax=ax, label="density")
    ax.set_xlabel(coord_label)
    ax.set_ylabel("t (ms)")
    ax.set_title(jd.proposal_tag)
    return _save(fig, path)


def histograms(path, edges, counts, xlabel, title=None, reference=None):
    """Step histograms (label -> counts), optional reference curves (label -> (x, y))."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, cnt in counts.items():
        ax.stairs(cnt, edges, label=label)
    for label, (x, y) in (reference or {}).items():
        ax.plot(x, y, "--", lw=1.0, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("counts")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def scatter(path, x, y, labels, xlabel, ylabel, title=None, max_points=200000):
    """Event scatter coloured by an integer label (e.g. crossing order)."""
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    labels = np.asarray(labels)
    for lab in np.unique(labels):
        sel = np.flatnonzero(labels == lab)[:max_points]
        ax.plot(x[sel], y[sel], ",", label=str(lab))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8, markerscale=20)
    return _save(fig, path)
