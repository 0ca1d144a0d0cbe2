"""Command-line interface: ``infers simulate | fit | sweep``.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
4 no autocovariance minima (or no subset solved), 5 no feasible region.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from contextlib import contextmanager

import numpy as np

from . import __version__
from .cohort import (
    SubsetSpec,
    atomic_write,
    exp_fit,
    load_csv,
    running_mean,
    sweep,
    write_csv,
)
from .errors import (
    ConfigError,
    DegenerateVariance,
    EmptyFile,
    EmptySubset,
    InfersError,
    MissingColumn,
    NoFeasibleRegion,
    NoMinimaFound,
    ParseError,
    SubsetTooSmall,
    TooFewRecords,
)
from .model import AUTOCOV_KEYS, GLOBCURRENT, fit
from .moments import TAGS
from .simulator import SimulationConfig, simulate, simulation_metadata

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NO_MINIMA, EXIT_NO_FEASIBLE = 0, 2, 3, 4, 5
FORMAT_VERSION = 1
CURVE_COLUMNS = ("sigma_t2",) + tuple(f"res_{k}" for k in AUTOCOV_KEYS) + ("feasible",)


class Report:
    """Run report written as JSON next to the outputs."""

    def __init__(self, command, args):
        self.data = {
            "tool_version": __version__,
            "format_version": FORMAT_VERSION,
            "command": command,
            "config_echo": {k: v for k, v in vars(args).items() if k != "func"},
            "timings_s": {},
            "warnings": [],
            "outputs": [],
        }

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.data["timings_s"][name] = round(time.perf_counter() - t0, 6)

    def output(self, path):
        self.data["outputs"].append(os.path.abspath(path))

    def warn(self, *messages):
        self.data["warnings"].extend(messages)

    def write(self, path):
        missing = [p for p in self.data["outputs"] if not (os.path.exists(p) and os.path.getsize(p) > 0)]
        if missing:
            self.data["warnings"].append(f"manifest: missing or empty outputs {missing}")
        self.data["manifest"] = [
            {"path": p, "bytes": os.path.getsize(p) if os.path.exists(p) else 0} for p in self.data["outputs"]
        ]
        text = json.dumps(clean(self.data), indent=2, allow_nan=False)
        atomic_write(path, lambda fh: fh.write(text + "\n"))


def clean(obj):
    """Make ``obj`` strict-JSON serializable (NaN/inf become null)."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, complex):
        return [clean(obj.real), clean(obj.imag)]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    return obj


def report_path(path):
    root, _ = os.path.splitext(path)
    return root + ".report.json"


def fail(code, message):
    print(f"infers: error: {message}", file=sys.stderr)
    return code


def _q(value, unit):
    return {"value": value, "unit": unit}


def params_document(result, n_records):
    p, d = result.params, result.diagnostics
    v2, v, one = "m^2 s^-2", "m s^-1", "1"
    return {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "n_records": n_records,
        "n_used": result.moments.n,
        "beta_N_method": "variance_match",
        "params": {
            "sigma_t2": _q(p.sigma_t2, v2),
            "sigma_t2_u": _q(p.sigma_t2_u, v2),
            "sigma_t2_v": _q(p.sigma_t2_v, v2),
            "beta": {t: _q(p.beta[t], one) for t in GLOBCURRENT},
            "lambda": {t: _q(p.lam[t], one) for t in GLOBCURRENT},
            "sigma2": {t: _q(p.sigma2[t], v2) for t in TAGS},
            "alpha": {t: {"u": _q(p.alpha[t].real, v), "v": _q(p.alpha[t].imag, v)} for t in GLOBCURRENT},
        },
        "search": {
            "target_sigma_t2": _q(result.curves.target, v2),
            "chosen_sigma_t2": _q(result.curves.chosen, v2),
            "grid_size": len(result.curves.grid),
            "minima": {k: [_q(x, v2) for x in xs] for k, xs in result.curves.minima.items()},
        },
        "diagnostics": {
            "components": {
                f"{tag}_{comp}": {
                    "sigma_total": _q(s.sigma_total, v),
                    "sigma_truth": _q(s.sigma_truth, v),
                    "sigma_err_total": _q(s.sigma_err_total, v),
                    "sigma_err_indiv": _q(s.sigma_err_indiv, v),
                    "corr_truth": _q(s.corr_truth, one),
                    "snr": _q(s.snr_db, "dB"),
                }
                for (tag, comp), s in d.stats.items()
            },
            "min_envelope_corr_u": _q(d.min_envelope_corr_u, one),
            "min_envelope_corr_v": _q(d.min_envelope_corr_v, one),
        },
        "warnings": list(result.warnings),
    }


def write_curves(curves, path):
    if curves is None:
        body = ",".join(CURVE_COLUMNS) + "\n"
        atomic_write(path, lambda fh: fh.write(body))
        return
    cols = [curves.grid] + [curves.residual[k] for k in range(len(AUTOCOV_KEYS))]
    table = np.column_stack(cols)

    def writer(fh):
        fh.write(",".join(CURVE_COLUMNS) + "\n")
        for row, ok in zip(table, curves.feasible):
            fh.write(",".join("" if not np.isfinite(x) else repr(float(x)) for x in row))
            fh.write(f",{int(ok)}\n")

    atomic_write(path, writer)


def _load(path, report):
    with report.stage("load"):
        col = load_csv(path)
    if len(col.rejected_lines):
        shown = ", ".join(str(i) for i in col.rejected_lines[:20])
        report.warn(f"ingest: rejected {len(col.rejected_lines)} rows (lines {shown})")
    report.data["records_loaded"] = len(col)
    report.data["records_rejected"] = int(len(col.rejected_lines))
    return col


INPUT_ERRORS = (MissingColumn, ParseError, EmptyFile)


def cmd_simulate(args):
    report = Report("simulate", args)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as exc:
        return fail(EXIT_IO, f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        return fail(EXIT_USAGE, f"config is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        return fail(EXIT_USAGE, "config must be a JSON object")
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.n is not None:
        raw["n"] = args.n
    try:
        cfg = SimulationConfig.from_dict(raw)
    except ConfigError as exc:
        return fail(EXIT_USAGE, f"config field {exc.field}: {exc}")
    report.data["simulation"] = clean(cfg.to_dict())
    report.data["rng"] = simulation_metadata(cfg)
    with report.stage("simulate"):
        col = simulate(cfg)
    try:
        with report.stage("write"):
            write_csv(col, args.out)
        report.output(args.out)
        report.write(report_path(args.out))
    except OSError as exc:
        return fail(EXIT_IO, str(exc))
    return EXIT_OK


def cmd_fit(args):
    report = Report("fit", args)
    try:
        col = _load(args.input, report)
    except OSError as exc:
        return fail(EXIT_IO, str(exc))
    except INPUT_ERRORS as exc:
        return fail(EXIT_USAGE, str(exc))
    code, curves, result = EXIT_OK, None, None
    try:
        with report.stage("fit"):
            result = fit(col, trim_fraction=args.trim, grid_size=args.grid, min_records=args.min_records)
        curves = result.curves
    except NoMinimaFound as exc:
        code, curves = EXIT_NO_MINIMA, exc.curves
        report.warn(str(exc))
    except DegenerateVariance as exc:
        code = EXIT_NO_MINIMA
        report.warn(f"degenerate input: {exc}")
    except NoFeasibleRegion as exc:
        code, curves = EXIT_NO_FEASIBLE, exc.curves
        report.warn(str(exc))
    except (SubsetTooSmall, TooFewRecords, EmptySubset) as exc:
        return fail(EXIT_USAGE, str(exc))
    except InfersError as exc:
        code = EXIT_NO_MINIMA
        report.warn(f"{type(exc).__name__}: {exc}")
    try:
        with report.stage("write"):
            if args.curves_out:
                write_curves(curves, args.curves_out)
                report.output(args.curves_out)
            if result is not None:
                report.warn(*result.warnings)
                if args.params_out:
                    doc = params_document(result, len(col))
                    text = json.dumps(clean(doc), indent=2, allow_nan=False)
                    atomic_write(args.params_out, lambda fh: fh.write(text + "\n"))
                    report.output(args.params_out)
        base = args.params_out or args.curves_out or args.input
        report.write(args.report or report_path(base))
    except OSError as exc:
        return fail(EXIT_IO, str(exc))
    if code == EXIT_NO_MINIMA:
        print("infers: no autocovariance minima found", file=sys.stderr)
    elif code == EXIT_NO_FEASIBLE:
        print("infers: no feasible region", file=sys.stderr)
    return code


def summary_columns():
    cols = ["sigma_t2", "sigma_t2_u", "sigma_t2_v", "target_sigma_t2"]
    cols += [f"beta_{t}" for t in GLOBCURRENT] + [f"lambda_{t}" for t in GLOBCURRENT]
    cols += [f"sigma2_{t}" for t in TAGS]
    cols += [f"alpha_{t}_{c}" for t in GLOBCURRENT for c in "uv"]
    for tag in TAGS:
        for c in "uv":
            cols += [f"{tag}_{c}_{k}" for k in ("sigma_total", "sigma_truth", "sigma_err_total",
                                                 "sigma_err_indiv", "corr_truth", "snr_db")]
    cols += ["min_envelope_corr_u", "min_envelope_corr_v"]
    return cols


def summary_row(entry):
    row = dict.fromkeys(summary_columns(), math.nan)
    if not entry.ok:
        return row
    r = entry.result
    p, d = r.params, r.diagnostics
    row.update(sigma_t2=p.sigma_t2, sigma_t2_u=p.sigma_t2_u, sigma_t2_v=p.sigma_t2_v,
               target_sigma_t2=r.curves.target)
    for t in GLOBCURRENT:
        row[f"beta_{t}"] = p.beta[t]
        row[f"lambda_{t}"] = p.lam[t]
        row[f"alpha_{t}_u"] = p.alpha[t].real
        row[f"alpha_{t}_v"] = p.alpha[t].imag
    for t in TAGS:
        row[f"sigma2_{t}"] = p.sigma2[t]
    for (tag, c), s in d.stats.items():
        for k, val in vars(s).items():
            row[f"{tag}_{c}_{k}"] = val
    row["min_envelope_corr_u"] = d.min_envelope_corr_u
    row["min_envelope_corr_v"] = d.min_envelope_corr_v
    return row


def parse_range(text, integer=False):
    """``start:stop:step`` inclusive of stop (within half a step), or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise argparse.ArgumentTypeError(f"bad range {text!r}")
        start, stop = float(parts[0]), float(parts[1])
        step = float(parts[2]) if len(parts) == 3 else 1.0
        if step <= 0 or stop < start:
            raise argparse.ArgumentTypeError(f"bad range {text!r}")
        count = int(math.floor((stop - start) / step + 0.5)) + 1
        values = [round(start + i * step, 12) for i in range(count)]
    else:
        values = [float(v) for v in text.split(",") if v.strip()]
    if integer:
        return [int(round(v)) for v in values]
    return values


def cmd_sweep(args):
    report = Report("sweep", args)
    try:
        os.makedirs(args.out, exist_ok=True)
        col = _load(args.input, report)
    except OSError as exc:
        return fail(EXIT_IO, str(exc))
    except INPUT_ERRORS as exc:
        return fail(EXIT_USAGE, str(exc))
    if args.years != "all":
        from .cohort import select

        col = select(col, SubsetSpec.even_years() if args.years == "even" else SubsetSpec.odd_years())
    try:
        if args.mode == "days":
            specs = [SubsetSpec.day_of_year(d, args.lat_min) for d in parse_range(args.days, integer=True)]
        else:
            specs = [SubsetSpec.speed_bin(t, args.k) for t in parse_range(args.targets)]
    except (ValueError, argparse.ArgumentTypeError) as exc:
        return fail(EXIT_USAGE, str(exc))
    workers = args.workers or os.cpu_count() or 1
    report.data["workers"] = workers
    with report.stage("sweep"):
        entries = sweep(col, specs, args.trim, args.grid, workers=workers, min_records=args.min_records)

    cols = summary_columns()
    rows = [summary_row(e) for e in entries]
    table = {c: np.array([r[c] for r in rows], dtype=float) for c in cols}
    for c in cols:
        table[c + "_rm5"] = running_mean(table[c], 5)
    coeffs = []
    if args.mode == "speeds":
        x = np.array([s.target for s in specs])
        for c in cols:
            y = table[c]
            use = np.isfinite(y) & ((x >= 0.3) if c.startswith("beta_") else True)
            fitted = np.full(len(x), np.nan)
            if use.sum() >= 4:
                ef = exp_fit(x[use], y[use])
                fitted = ef(x)
                coeffs.append({"column": c, "a": ef.a, "b": ef.b, "c": ef.c, "rss": ef.rss,
                               "n": int(use.sum()), "ill_conditioned": ef.ill_conditioned})
            else:
                coeffs.append({"column": c, "a": math.nan, "b": math.nan, "c": math.nan, "rss": math.nan,
                               "n": int(use.sum()), "ill_conditioned": True})
            table[c + "_expfit"] = fitted

    header = ["index", "kind", "day", "target", "n", "status"] + list(table)
    summary = os.path.join(args.out, "summary.csv")

    def fmt(x):
        if x is None:
            return ""
        if isinstance(x, float):
            return repr(x) if math.isfinite(x) else ""
        return str(x)

    def write_summary(fh):
        fh.write(",".join(header) + "\n")
        for i, (spec, e) in enumerate(zip(specs, entries)):
            meta = [i, spec.kind, spec.day, spec.target, e.n, e.status]
            vals = [float(table[c][i]) for c in table]
            fh.write(",".join(fmt(v) for v in meta + vals) + "\n")

    try:
        with report.stage("write"):
            atomic_write(summary, write_summary)
            report.output(summary)
            if coeffs:
                path = os.path.join(args.out, "expfit.csv")
                keys = ["column", "a", "b", "c", "rss", "n", "ill_conditioned"]
                body = ",".join(keys) + "\n" + "".join(
                    ",".join(fmt(r[k]) for k in keys) + "\n" for r in coeffs
                )
                atomic_write(path, lambda fh: fh.write(body))
                report.output(path)
            if args.curves:
                cdir = os.path.join(args.out, "curves")
                os.makedirs(cdir, exist_ok=True)
                for i, e in enumerate(entries):
                    if e.curves is not None:
                        path = os.path.join(cdir, f"{i:03d}.csv")
                        write_curves(e.curves, path)
                        report.output(path)
        n_ok = sum(e.ok for e in entries)
        report.data["subsets"] = len(entries)
        report.data["subsets_ok"] = n_ok
        report.data["status_counts"] = {s: sum(e.status == s for e in entries) for s in {e.status for e in entries}}
        for i, e in enumerate(entries):
            if e.ok:
                report.warn(*(f"subset {i} ({e.spec.label}): {w}" for w in e.result.warnings))
        report.write(os.path.join(args.out, "report.json"))
    except OSError as exc:
        return fail(EXIT_IO, str(exc))
    if n_ok == 0:
        print("infers: no subset produced a solution", file=sys.stderr)
        return EXIT_NO_MINIMA
    return EXIT_OK


def _grid(text):
    value = int(text)
    if value < 100:
        raise argparse.ArgumentTypeError(f"grid must be at least 100, got {value}")
    return value


def _trim(text):
    value = float(text)
    if not (value == 0 or 0 < value < 0.5):
        raise argparse.ArgumentTypeError("trim must be 0 or in (0, 0.5)")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="infers", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw synthetic collocations from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    def fit_options(p):
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--trim", type=_trim, default=0.10, help="outlier trim fraction (0 disables)")
        p.add_argument("--grid", type=_grid, default=2000, help="true-variance grid size (>= 100)")
        p.add_argument("--min-records", type=_positive_int, default=100,
                       help="minimum records after trimming")

    p = sub.add_parser("fit", help="fit the model to one collocation file")
    fit_options(p)
    p.add_argument("--params-out")
    p.add_argument("--curves-out")
    p.add_argument("--report", help="run report path (default: next to the outputs)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="fit day-of-year or speed-bin subsets")
    fit_options(p)
    p.add_argument("--mode", choices=("days", "speeds"), required=True)
    p.add_argument("--lat-min", type=float, default=15.0)
    p.add_argument("--days", default="1:366")
    p.add_argument("--targets", default="0.1:1.1:0.01")
    p.add_argument("--k", type=int, default=500)
    p.add_argument("--years", choices=("all", "even", "odd"), default="all")
    p.add_argument("--workers", type=int, default=0, help="worker processes (0 = all cores)")
    p.add_argument("--curves", action="store_true", help="also write per-subset residual curves")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
