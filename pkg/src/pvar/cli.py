"""``pvar`` command-line interface."""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .data import DatasetConfig, format_number, ingest, write_series_csv
from .diagnostics import diagnose
from .estimate import fit, fit_to_dict, with_standard_errors
from .exceptions import PvarError
from .lrv import LrvConfig
from .model import (
    NoiseKind,
    PvarSpec,
    SeriesData,
    constraints_from_dict,
    constraints_to_dict,
    forecast,
    model_from_dict,
    model_to_dict,
    simulate,
)
from .montecarlo import ExperimentConfig, run_power, run_size
from .quadform import survival


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_lrv_flags(p):
    g = p.add_argument_group("long-run variance")
    g.add_argument("--lrv-method", choices=["var", "hac"], default="var")
    g.add_argument("--lrv-rmax", type=int, default=5)
    g.add_argument("--lrv-order", type=int, default=None)
    g.add_argument("--lrv-bandwidth", type=int, default=None)
    g.add_argument("--lrv-ridge", type=float, default=1e-6)


def _lrv_from_args(args):
    return LrvConfig(args.lrv_method, args.lrv_rmax, args.lrv_order, args.lrv_ridge, args.lrv_bandwidth)


def _lrv_doc(cfg):
    return {"method": cfg.method.value, "r_max": cfg.r_max, "order": cfg.order,
            "ridge": cfg.ridge, "bandwidth": cfg.bandwidth}


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(doc):
    return json.dumps(doc, indent=2, allow_nan=False, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _nan_to_none(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


# --- commands -------------------------------------------------------------------

def cmd_simulate(args):
    model = model_from_dict(_load_json(args.model))
    data = simulate(model, args.years, NoiseKind(args.noise), args.burn_in, args.seed)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_series_csv(fh, data.values.T)
    else:
        write_series_csv(sys.stdout, data.values.T)


def _orders(text, s):
    orders = _ints(text)
    if len(orders) == 1:
        orders = orders * s
    if len(orders) != s:
        raise UsageError(f"--order needs 1 or {s} values, got {len(orders)}")
    return orders


def cmd_fit(args):
    cfg = DatasetConfig.from_json(args.data)
    series, info = ingest(cfg)
    s = series.s
    constraints = None
    if args.constraints:
        constraints = constraints_from_dict(_load_json(args.constraints), s)
    spec = PvarSpec(s, series.d, _orders(args.order, s), constraints)
    lrv = _lrv_from_args(args)
    result = fit(series, spec)
    modes = ("strong", "weak") if args.se == "both" else (args.se,)
    with_standard_errors(result, modes, lrv)
    doc = {
        "fit": fit_to_dict(result),
        "model": model_to_dict(result.to_model(info.mu)),
        "dataset": cfg.to_dict(),
        "preprocess": info.to_dict(),
        "lrv": _lrv_doc(lrv),
        "series": series.values.tolist(),
    }
    if constraints is not None:
        doc["constraints"] = constraints_to_dict(spec.constraints)
    _emit(_dump(_nan_to_none(doc)), args.out)
    if args.residuals:
        with open(args.residuals, "w", encoding="utf-8", newline="") as fh:
            write_series_csv(fh, result.residuals.values.T, info.columns)


def _refit(doc):
    """Rebuild the FitResult stored in a fit document."""
    f = doc["fit"]
    s, d = int(f["s"]), int(f["d"])
    spec = PvarSpec(s, d, f["p"], constraints_from_dict(doc.get("constraints"), s))
    series = SeriesData(np.asarray(doc["series"], dtype=float).reshape(d, -1), s)
    return fit(series, spec), np.asarray(doc["preprocess"]["mu"], dtype=float).reshape(s, d)


def cmd_diagnose(args):
    doc = _load_json(args.fit)
    result, _ = _refit(doc)
    lrv = _lrv_from_args(args)
    report = diagnose(result, args.max_lag, args.mode, lrv, args.global_, args.bands)
    report.config = {"fit": args.fit, "max_lag": args.max_lag, "mode": args.mode, "global": args.global_,
                     "bands": args.bands, "lrv": _lrv_doc(lrv)}
    _emit(_dump(_nan_to_none(report.to_dict())), args.out)
    if args.csv:
        _emit(report.to_csv(), args.csv)
    if args.bands_csv:
        if args.bands is None:
            raise UsageError("--bands-csv needs --bands")
        _emit(report.bands_csv(), args.bands_csv)


def cmd_forecast(args):
    doc = _load_json(args.fit)
    result, mu = _refit(doc)
    model = result.to_model()
    paths = forecast(model, result.data, args.horizon)
    s = result.spec.s
    names = doc["preprocess"]["columns"]
    rows = []
    for j in range(args.horizon):
        season = (result.data.n + j) % s
        rows.append([j + 1, season + 1] + list(paths[:, j] + mu[season]))
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["step", "season"] + list(names))
        for row in rows:
            w.writerow(row[:2] + [format_number(x) for x in row[2:]])
    finally:
        if args.out:
            out.close()


def _cmd_mc(args, runner):
    doc = _load_json(args.config)
    if args.workers is not None:
        doc["workers"] = args.workers
    config = ExperimentConfig.from_dict(doc)
    table = runner(config)
    if not args.paper_table:
        table.reference_table = None
    _emit(table.to_csv(), args.csv)
    if args.json:
        _emit(_dump(_nan_to_none(table.to_dict())), args.json)


def cmd_quadform(args):
    p = survival(args.weights, args.x, args.tol)
    print(format(p, ".10g"))


def build_parser():
    parser = argparse.ArgumentParser(prog="pvar", description="Periodic VAR fitting and portmanteau diagnostics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a model to CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--years", type=int, required=True)
    p.add_argument("--noise", choices=["strong", "weak"], default="strong")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model to a dataset")
    p.add_argument("--data", required=True, help="dataset configuration JSON")
    p.add_argument("--order", required=True, help="p or p1,...,ps")
    p.add_argument("--constraints")
    p.add_argument("--se", choices=["strong", "weak", "both"], default="both")
    p.add_argument("--out")
    p.add_argument("--residuals", help="write residuals CSV here")
    _add_lrv_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnose", help="portmanteau tests on a fit")
    p.add_argument("--fit", required=True)
    p.add_argument("--max-lag", type=int, required=True)
    p.add_argument("--mode", choices=["strong", "weak"], default="weak")
    p.add_argument("--global", dest="global_", action="store_true")
    p.add_argument("--bands", type=float, default=None, help="two-sided level alpha of the bands")
    p.add_argument("--out")
    p.add_argument("--csv")
    p.add_argument("--bands-csv")
    _add_lrv_flags(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("forecast", help="forecast from a fit")
    p.add_argument("--fit", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_forecast)

    for name, runner in (("mc-size", run_size), ("mc-power", run_power)):
        p = sub.add_parser(name, help=f"Monte Carlo {name[3:]} experiment")
        p.add_argument("--config", required=True)
        p.add_argument("--csv")
        p.add_argument("--json")
        p.add_argument("--workers", type=int)
        p.add_argument("--paper-table", action="store_true", help="label rows with the matching published table")
        p.set_defaults(func=lambda a, r=runner: _cmd_mc(a, r))

    p = sub.add_parser("quadform", help="tail probability of a weighted chi-squared sum")
    p.add_argument("--weights", type=_floats, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_quadform)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (PvarError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
