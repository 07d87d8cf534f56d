"""Experiment configuration: TOML file -> validated ExperimentConfig.

Every key has a default, so an empty file gives the reference setup. Units
are fixed per key and listed in SCHEMA.
"""
import copy
import re
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:     # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .model import MASS_HE, TwoSlitState, alpha_from_mass

INTRINSIC = ("SC", "STD", "QF", "QF+", "QF-")

# key: (default, unit, kind); kind drives validation
SCHEMA = {
    "run": {
        "scenario": (None, "", "scenario_or_none"),
    },
    "state": {
        "alpha": (None, "um^2/ms", "pos_or_none"),
        "mass": (MASS_HE, "kg", "pos"),
        "s": (10.0, "um", "pos"),
        "sigma_x": (0.04, "um", "pos"),
        "sigma_y": (0.5, "um", "pos"),
        "u_x": (3000.0, "um/ms", "float"),
        "u_y": (0.0, "um/ms", "float"),
        "x0": (0.0, "um", "float"),
    },
    "horizontal": {
        "offsets": ([15.0, 20.0, 25.0, 30.0], "um", "pos_list"),
        "x_min": (0.0, "um", "float"),
        "x_max": (30000.0, "um", "float"),
        "n_x": (3000, "count", "count"),
        "t_min": (0.0, "ms", "nonneg"),
        "t_max": (12.0, "ms", "pos"),
        "n_t": (6000, "count", "count"),
        "proposals": (["SC", "STD", "QF", "QF+", "QF-"], "", "proposals"),
        "probes": ([16200.0, 17400.0, 18400.0, 19200.0], "um", "float_list"),
        "probe_half_width": (125.0, "um", "pos"),
        "gray_region": ([16200.0, 19200.0], "um", "range"),
        "samples": (10000, "count", "nonneg_int"),
        "kijowski_method": ("contour", "", "method"),
    },
    "vertical": {
        "offsets": ([3.0e5], "um", "pos_list"),
        "y_min": (-15000.0, "um", "float"),
        "y_max": (15000.0, "um", "float"),
        "n_y": (3001, "count", "count"),
        "t_window": ([0.7, 1.4], "L_x/u_x", "range"),
        "n_t": (1401, "count", "count"),
        "proposals": (["SC", "STD", "QF"], "", "proposals"),
    },
    "trajectories": {
        "n": (100000, "count", "count"),
        "seed": (20240601, "", "seed"),
        "tol": (1e-8, "relative", "pos"),
        "L_y": (15.0, "um", "pos"),
        "t_max": (12.0, "ms", "pos"),
        "hist_n_x": (150, "count", "count"),
        "hist_n_t": (300, "count", "count"),
        "bootstrap": (50, "count", "count"),
        "write_events": (True, "", "bool"),
    },
    "backaction": {
        "L_y": (15.0, "um", "pos"),
        "kappa": (1.0, "1/um", "pos"),
        "lam": (1.0, "um", "pos"),
        "dy": (0.1, "um", "pos"),
        "dt": (2e-4, "ms", "pos"),
        "t_max": (12.0, "ms", "pos"),
        "pab_gradient": ("free", "", "gradient"),
        "btc_trajectories": (100000, "count", "count"),
    },
    "sweep": {
        "param": ("kappa", "", "sweep_param"),
        "values": ([0.25, 0.5, 1.0, 2.0, 4.0], "", "pos_list"),
    },
    "output": {
        "dir": ("out", "", "str"),
        "seed": (None, "", "seed_or_none"),
        "threads": (0, "count", "nonneg_int"),
        "joint_stride_t": (10, "count", "count"),
        "joint_stride_x": (5, "count", "count"),
        "plots": (True, "", "bool"),
    },
}

SWEEP_PARAMS = ("kappa", "lam", "L_y")


def valid_keys():
    return {sec: sorted(keys) for sec, keys in SCHEMA.items()}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    source: str = None

    def __getitem__(self, section):
        return self.values[section]

    def state(self):
        s = self.values["state"]
        alpha = s["alpha"] if s["alpha"] is not None else alpha_from_mass(s["mass"])
        return TwoSlitState.symmetric(s=s["s"], sigma_x=s["sigma_x"], sigma_y=s["sigma_y"],
                                      u_x=s["u_x"], u_y=s["u_y"], x0=s["x0"], alpha=alpha)

    def with_overrides(self, **sections):
        new = copy.deepcopy(self.values)
        for sec, kv in sections.items():
            new[sec].update(kv)
        cfg = ExperimentConfig(new, self.source)
        _validate_all(cfg.values, None)
        return cfg

    def echo(self):
        """Plain dict with units, for manifests."""
        return {sec: {k: {"value": v, "unit": SCHEMA[sec][k][1]} for k, v in kv.items()}
                for sec, kv in self.values.items()}


def default_config():
    vals = {sec: {k: copy.deepcopy(spec[0]) for k, spec in keys.items()}
            for sec, keys in SCHEMA.items()}
    return ExperimentConfig(vals)


def _line_of(text, section, key):
    """Best-effort line number of `key` inside `[section]`."""
    if text is None:
        return None
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            continue
        if re.match(rf"\s*{re.escape(key)}\s*=", line) and (section is None or current == section):
            return i
    return None


def _check(sec, key, value, text):
    kind = SCHEMA[sec][key][2]
    line = _line_of(text, sec, key)
    name = f"{sec}.{key}"

    def fail(msg):
        raise ConfigError(msg, field=name, line=line)

    def num(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            fail(f"expected a number, got {v!r}")
        return float(v)

    if kind == "float":
        return num(value)
    if kind == "pos":
        v = num(value)
        if not v > 0:
            fail(f"must be positive, got {value!r}")
        return v
    if kind == "nonneg":
        v = num(value)
        if v < 0:
            fail(f"must be non-negative, got {value!r}")
        return v
    if kind == "pos_or_none":
        return None if value is None else _check_pos(value, fail)
    if kind in ("count", "nonneg_int"):
        if isinstance(value, bool) or not isinstance(value, int):
            fail(f"expected an integer, got {value!r}")
        if kind == "count" and value < 1:
            fail(f"must be >= 1, got {value}")
        if value < 0:
            fail(f"must be >= 0, got {value}")
        return int(value)
    if kind in ("seed", "seed_or_none"):
        if value is None and kind == "seed_or_none":
            return None
        if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 2 ** 64:
            fail(f"seed must be an integer in [0, 2^64), got {value!r}")
        return int(value)
    if kind == "bool":
        if not isinstance(value, bool):
            fail(f"expected true/false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str) or not value:
            fail(f"expected a non-empty string, got {value!r}")
        return value
    if kind in ("pos_list", "float_list", "range"):
        if not isinstance(value, list) or not value:
            fail(f"expected a non-empty list, got {value!r}")
        out = [num(v) for v in value]
        if kind == "pos_list" and any(v <= 0 for v in out):
            fail(f"all entries must be positive, got {value!r}")
        if kind == "range" and (len(out) != 2 or not out[1] > out[0]):
            fail(f"expected [low, high] with high > low, got {value!r}")
        return out
    if kind == "proposals":
        if not isinstance(value, list) or not value:
            fail("expected a non-empty list of proposal tags")
        bad = [v for v in value if v not in INTRINSIC]
        if bad:
            fail(f"unknown proposals {bad}; valid: {list(INTRINSIC)}")
        return list(value)
    if kind == "method":
        if value not in ("contour", "window"):
            fail(f"must be 'contour' or 'window', got {value!r}")
        return value
    if kind == "gradient":
        if value not in ("free", "abr"):
            fail(f"must be 'free' or 'abr', got {value!r}")
        return value
    if kind == "scenario_or_none":
        valid = ("vertical", "horizontal", "trajectories", "backaction", "sweep")
        if value is not None and value not in valid:
            fail(f"must be one of {list(valid)}, got {value!r}")
        return value
    if kind == "sweep_param":
        if value not in SWEEP_PARAMS:
            fail(f"must be one of {list(SWEEP_PARAMS)}, got {value!r}")
        return value
    raise AssertionError(kind)


def _check_pos(v, fail):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
        fail(f"must be a positive number, got {v!r}")
    return float(v)


def _validate_all(vals, text):
    for sec, keys in vals.items():
        for k, v in keys.items():
            keys[k] = _check(sec, k, v, text)
    h, v = vals["horizontal"], vals["vertical"]
    if not h["x_max"] > h["x_min"]:
        raise ConfigError("x_max must exceed x_min", field="horizontal.x_max",
                          line=_line_of(text, "horizontal", "x_max"))
    if not h["t_max"] > h["t_min"]:
        raise ConfigError("t_max must exceed t_min", field="horizontal.t_max",
                          line=_line_of(text, "horizontal", "t_max"))
    if not v["y_max"] > v["y_min"]:
        raise ConfigError("y_max must exceed y_min", field="vertical.y_max",
                          line=_line_of(text, "vertical", "y_max"))
    if v["t_window"][0] <= 0:
        raise ConfigError("t_window must start after t = 0", field="vertical.t_window",
                          line=_line_of(text, "vertical", "t_window"))
    for sec, key in (("horizontal", "n_x"), ("horizontal", "n_t"), ("vertical", "n_y"),
                     ("vertical", "n_t"), ("trajectories", "hist_n_x"),
                     ("trajectories", "hist_n_t")):
        if vals[sec][key] < 2:
            raise ConfigError("grids need at least two points", field=f"{sec}.{key}",
                              line=_line_of(text, sec, key))


def parse_config_text(text, source=None):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}",
                          line=int(m.group(1)) if m else None) from None
    cfg = default_config()
    for sec, body in raw.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]; valid sections: {sorted(SCHEMA)}",
                              field=sec, line=_line_of(text, None, sec) or _section_line(text, sec))
        if not isinstance(body, dict):
            raise ConfigError(f"[{sec}] must be a table", field=sec, line=_section_line(text, sec))
        for k, v in body.items():
            if k not in SCHEMA[sec]:
                raise ConfigError(f"unknown key; valid keys in [{sec}]: {sorted(SCHEMA[sec])}",
                                  field=f"{sec}.{k}", line=_line_of(text, sec, k))
            cfg.values[sec][k] = v
    _validate_all(cfg.values, text)
    cfg.source = source
    return cfg


def _section_line(text, sec):
    for i, line in enumerate(text.splitlines(), 1):
        if re.match(rf"\s*\[{re.escape(sec)}\]", line):
            return i
    return None


def parse_config(path):
    """Read and validate a TOML configuration file."""
    try:
        with open(path, "rb") as f:
            text = f.read().decode("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config_text(text, str(path))
