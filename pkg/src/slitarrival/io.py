"""File formats: CSV with a unit-bearing header, row-major joint CSV with a JSON
axes sidecar, and JSON metrics. Number formatting is fixed so identical inputs
give byte-identical files."""
import hashlib
import json
import os

import numpy as np

from .screens import JointDistribution, SpaceTimeGrid

FMT = "%.12e"


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_csv(path, columns, units, data):
    """columns: names; units: matching unit strings; data: (n, ncol) array."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[1] != len(columns) or len(units) != len(columns):
        raise ValueError("column/unit/data mismatch")
    header = ",".join(f"{c}_{u}" if u else c for c, u in zip(columns, units))
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt=FMT)
    return path


def read_csv(path):
    with open(path) as f:
        header = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(_jsonable(obj), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_json(path):
    with open(path) as f:
        return json.load(f)


def write_joint(path, jd, stride_t=1, stride_c=1):
    """Row-major CSV (rows = times, columns = screen coords) plus path.json axes."""
    times = jd.times[::stride_t]
    coords = jd.coords[::stride_c]
    dens = jd.density[::stride_t, ::stride_c]
    np.savetxt(path, dens, delimiter=",", fmt=FMT,
               header=f"density_um^-1ms^-1 rows=t_ms({times.size}) cols=coord_um({coords.size})",
               comments="")
    meta = {k: v for k, v in jd.meta.items()
            if isinstance(v, (int, float, str, bool, np.floating, np.integer)) or v is None}
    side = {"proposal": jd.proposal_tag, "layout": "row-major, rows=time, cols=screen coordinate",
            "times_ms": times, "coords_um": coords, "stride": [stride_t, stride_c],
            "full_shape": list(jd.grid.shape), "meta": meta}
    write_json(str(path) + ".json", side)
    return path


def read_joint(path):
    """Load a joint written by write_joint back into a JointDistribution."""
    side = read_json(str(path) + ".json")
    dens = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    grid = SpaceTimeGrid(np.asarray(side["coords_um"]), np.asarray(side["times_ms"]))
    meta = side.get("meta", {})
    return JointDistribution(grid, dens, side["proposal"], meta)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
