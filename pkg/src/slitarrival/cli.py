"""Command-line driver.

    slitarrival run <scenario> [--config F] [--out D] [--seed N] [--threads N]
                               [--trajectories N] [--paper-scale]
    slitarrival compare <jointA.csv> <jointB.csv> [--region LO HI] [--force]
    slitarrival sweep --param kappa --values 0.25 0.5 1 2 4

Exit codes: 0 success, 2 configuration error, 3 numerical diagnostic.
"""
import argparse
import json
import logging
import sys

from .config import SWEEP_PARAMS, default_config, parse_config
from .errors import ConfigError, NumericalDiagnostic
from .scenarios import SCENARIOS, run_scenario

PAPER_SCALE_TRAJECTORIES = 10 ** 8
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _common(p):
    p.add_argument("--config", help="TOML configuration file (defaults if omitted)")
    p.add_argument("--out", help="output directory (default: <output.dir>/<scenario>)")
    p.add_argument("--seed", type=int, help="RNG seed for trajectories and sampling")
    p.add_argument("--threads", type=int, help="worker threads for trajectory ensembles")
    p.add_argument("--trajectories", type=int, help="number of Bohmian trajectories")
    p.add_argument("--paper-scale", action="store_true",
                   help=f"use {PAPER_SCALE_TRAJECTORIES:.0e} trajectories (hours of CPU time)")
    p.add_argument("--no-plots", action="store_true", help="skip PNG output")
    p.add_argument("-q", "--quiet", action="store_true")


def build_parser():
    ap = argparse.ArgumentParser(prog="slitarrival", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run a named scenario")
    r.add_argument("scenario", nargs="?", choices=SCENARIOS,
                   help="scenario name (optional if the config sets run.scenario)")
    _common(r)
    c = sub.add_parser("compare", help="compare two joint-density CSV files")
    c.add_argument("file_a")
    c.add_argument("file_b")
    c.add_argument("--region", nargs=2, type=float, metavar=("LO", "HI"),
                   help="screen-coordinate range for the local-mean gap (um)")
    c.add_argument("--force", action="store_true",
                   help="compare even if a window captures < 0.999 of the mass")
    c.add_argument("--out", help="write the metrics JSON here instead of stdout")
    s = sub.add_parser("sweep", help="sweep a back-action parameter")
    s.add_argument("--param", choices=SWEEP_PARAMS, default="kappa")
    s.add_argument("--values", nargs="+", type=float, required=True)
    _common(s)
    return ap


def _load(args):
    cfg = parse_config(args.config) if args.config else default_config()
    over = {}
    n = args.trajectories
    if args.paper_scale:
        n = PAPER_SCALE_TRAJECTORIES
    if n is not None:
        if n < 1:
            raise ConfigError("must be >= 1", field="--trajectories")
        over["trajectories"] = {"n": n}
        over["backaction"] = {"btc_trajectories": n}
    if args.seed is not None:
        over["output"] = {"seed": args.seed}
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("must be >= 1", field="--threads")
        over.setdefault("output", {})["threads"] = args.threads
    if args.no_plots:
        over.setdefault("output", {})["plots"] = False
    if getattr(args, "param", None) is not None:
        over["sweep"] = {"param": args.param, "values": list(args.values)}
    return cfg.with_overrides(**over) if over else cfg


def _compare(args):
    from .io import read_joint, write_json
    from .observables import compare
    a = read_joint(args.file_a)
    b = read_joint(args.file_b)
    if a.grid.shape != b.grid.shape:
        raise NumericalDiagnostic("joint files live on different grids")
    rec = compare(a, b, region=args.region, force=args.force)
    rec["column_mean_shift_ms"] = rec.pop("column_mean_shift")
    rec["files"] = [args.file_a, args.file_b]
    if args.out:
        write_json(args.out, rec)
    else:
        from .io import _jsonable
        json.dump(_jsonable(rec), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(asctime)s %(message)s")
    try:
        if args.verb == "compare":
            _compare(args)
            return EXIT_OK
        cfg = _load(args)
        if args.verb == "sweep":
            name = "sweep"
        else:
            name = args.scenario or cfg["run"]["scenario"]
            if name is None:
                raise ConfigError("no scenario given on the command line or in [run]",
                                  field="run.scenario")
        manifest = run_scenario(name, cfg, out=args.out)
        print(json.dumps({"scenario": name, "status": manifest.status,
                          "files": len(manifest.files), "timings": manifest.timings},
                         sort_keys=True))
        return EXIT_OK
    except ConfigError as exc:
        print(json.dumps(exc.record()), file=sys.stderr)
        return EXIT_CONFIG
    except NumericalDiagnostic as exc:
        print(json.dumps(exc.record()), file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(json.dumps({"error": type(exc).__name__, "code": "io", "message": str(exc)}),
              file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
