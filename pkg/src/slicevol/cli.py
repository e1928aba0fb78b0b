"""Command-line entry point: ``slicevol preprocess|fit|simulate|evaluate|synth``.

Exit codes: 0 success, 2 data or IO error, 3 optimizer did not converge
(the report is still written), 4 parameter or format-version mismatch.
Set ``SLICEVOL_LOG`` (DEBUG, INFO, WARNING, ...) for diagnostics on stderr.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import estimation as est
from .errors import (
    DegenerateParamsError,
    SchemaError,
    SlicevolError,
    VersionMismatchError,
)
from .formats import FORMAT_VERSION, check_version, csv_text, json_text, write_text
from .sde_core import DEFAULT_DT
from .slice_data import DEFAULT_EPSILON, dataset_csv, dataset_json, load_dataset, preprocess
from .synth import SynthConfig, generate
from .volume_pipeline import QUANTILE_LEVELS, error_bins, evaluate, histogram, ratio_bins, simulate_heart

log = logging.getLogger("slicevol")

EXIT_OK, EXIT_DATA, EXIT_NOCONV, EXIT_PARAMS = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------------ helpers


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        write_text(out, text)


def _sibling(out, suffix):
    p = Path(out)
    return str(p.with_name(p.stem + suffix))


def _load_series(path, epsilon, need_truth=False):
    raws = load_dataset(path)
    if not raws:
        raise SchemaError(f"{path}: no heart records")
    if need_truth:
        missing = [r.id for r in raws if r.slice_areas_truth is None]
        if missing:
            raise SchemaError(f"{path}: column truth_area_mm2 is empty for {len(missing)} heart(s), e.g. {missing[0]!r}")
    return [preprocess(r, epsilon) for r in raws]


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc.msg})", EXIT_PARAMS) from None


def load_params(path):
    """Read a fit report, a bare parameter file or a binned fit.

    Returns ``("single", ModelParams)`` or ``("binned", [bin dicts with 'params']])``.
    """
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise CliError(f"{path}: expected a JSON object", EXIT_PARAMS)
    try:
        check_version(doc.get("format_version"), path)
        if "bins" in doc:
            bins = []
            for b in doc["bins"]:
                rep = est.FitReport.from_dict(b["report"])
                bins.append({"vol_lo_ml": b["vol_lo_ml"], "vol_hi_ml": b["vol_hi_ml"], "bin": b["bin"], "params": rep.params})
            return "binned", bins
        if "params" in doc:
            return "single", est.FitReport.from_dict(doc).params
        return "single", est.ModelParams.from_dict(doc)
    except (SlicevolError, KeyError, TypeError) as exc:
        if isinstance(exc, VersionMismatchError):
            raise
        raise CliError(f"{path}: unusable parameters ({exc})", EXIT_PARAMS) from None


def _params_for(kind, params, series):
    if kind == "single":
        return params, ""
    b = est.select_bin(params, series.point_volume_ml())
    return b["params"], b["bin"]


def _fit_config(args):
    return est.FitConfig(xatol=args.xatol, fatol=args.fatol, maxiter=args.maxiter, delta_max=args.delta_max)


# ------------------------------------------------------------------ commands


def cmd_preprocess(args):
    series = _load_series(args.input, args.epsilon)
    _emit(dataset_json(series) if args.format == "json" else dataset_csv(series), args.out)
    return EXIT_OK


def cmd_fit(args):
    series = _load_series(args.input, args.epsilon, need_truth=True)
    cfg = _fit_config(args)
    if args.bins:
        bins = est.fit_binned(series, args.bins, cfg)
        doc = {
            "format_version": FORMAT_VERSION,
            "bins": [
                {k: v for k, v in b.items() if k != "report"} | {"report": b["report"].to_dict()} for b in bins
            ],
        }
        reports = [b["report"] for b in bins]
    else:
        rep = est.fit_all(series, cfg)
        doc = rep.to_dict()
        reports = [rep]
    _emit(json_text(doc), args.out)
    if args.nll_grid:
        full = reports[0] if not args.bins else est.fit_all(series, cfg)
        if full.theta0 is not None:
            center = est.SdeParams(full.theta0, full.alpha)
            rows = est.nll_grid(series, center, span=args.grid_span, size=args.grid_size)
            header = ["theta0", "alpha", "nll"]
            if args.format == "json":
                text = json_text({"format_version": FORMAT_VERSION, "columns": header, "rows": rows})
            else:
                text = csv_text(header, rows)
            write_text(args.nll_grid, text)
    errors = [e for r in reports for e in r.errors]
    if errors:
        for e in errors:
            log.error("%s", e)
        return EXIT_DATA
    if not all(r.converged for r in reports):
        log.warning("optimizer did not converge in at least one stage")
        return EXIT_NOCONV
    return EXIT_OK


SIM_FIELDS = ["id", "n_slices", "pred_ml", "mean_ml", "std_ml"] + [f"q{int(round(q * 100)):02d}" for q in QUANTILE_LEVELS] + [
    "n_sims",
    "seed",
    "bin",
]


def cmd_simulate(args):
    series = _load_series(args.input, args.epsilon)
    kind, params = load_params(args.params)
    rows, records = [], []
    for s in series:
        p, b = _params_for(kind, params, s)
        d = simulate_heart(s, p, n_sims=args.n_sims, dt=args.dt, seed=args.seed, threads=args.threads)
        row = [s.id, s.N, s.point_volume_ml(), d.mean, d.std] + [d.quantiles[q] for q in QUANTILE_LEVELS]
        row += [d.n_sims, d.seed, b]
        rows.append(row)
        rec = dict(zip(SIM_FIELDS, row))
        if args.draws:
            rec["draws"] = [float(v) for v in d.draws]
        records.append(rec)
    if args.format == "json":
        _emit(json_text({"format_version": FORMAT_VERSION, "hearts": records}), args.out)
    else:
        _emit(csv_text(SIM_FIELDS, rows), args.out)
    return EXIT_OK


def _parse_kv(tokens, allowed):
    out = {}
    for tok in tokens or []:
        key, sep, value = tok.partition("=")
        if not sep or key not in allowed:
            raise CliError(f"bad option {tok!r}; expected one of {', '.join(k + '=N' for k in allowed)}", EXIT_DATA)
        try:
            out[key] = int(value)
        except ValueError:
            raise CliError(f"{key} must be an integer, got {value!r}", EXIT_DATA) from None
        if out[key] < 1:
            raise CliError(f"{key} must be >= 1", EXIT_DATA)
    return out


def _table(header, rows, fmt):
    if fmt == "json":
        return json_text({"format_version": FORMAT_VERSION, "rows": [dict(zip(header, r)) for r in rows]})
    return csv_text(header, rows)


def cmd_evaluate(args):
    stab = None
    if args.stability is not None:
        stab = {"splits": 3, "repeats": 3} | _parse_kv(args.stability, ("splits", "repeats"))
    series = _load_series(args.input, args.epsilon, need_truth=True)
    kind, params = load_params(args.params)
    if kind == "binned":
        ev_parts = []
        for s in series:
            p, _ = _params_for(kind, params, s)
            ev_parts.append(evaluate([s], p, n_sims=args.n_sims, seed=args.seed, dt=args.dt, threads=args.threads))
        ev = _merge_evaluations(ev_parts)
    else:
        ev = evaluate(series, params, n_sims=args.n_sims, seed=args.seed, dt=args.dt, threads=args.threads)
    fields = list(ev.ROW_FIELDS)
    _emit(_table(fields, [[r[k] for k in fields] for r in ev.rows], args.format), args.out)
    if args.out is None:
        return EXIT_OK
    ext = ".json" if args.format == "json" else ".csv"
    write_text(_sibling(args.out, ".calibration" + ext), _table(["nominal", "empirical", "n"], ev.calibration, args.format))
    eb = error_bins(ev.errors_truth, ev.errors_sim, n_bins=args.hist_bins)
    rb = ratio_bins(ev.edge_ratio_truth, ev.edge_ratio_sim)
    hist_header = ["bin_left", "bin_right", "count"]
    for name, values, edges in (
        ("errors_truth", ev.errors_truth, eb),
        ("errors_sim", ev.errors_sim, eb),
        ("edge_ratio_truth", ev.edge_ratio_truth, rb),
        ("edge_ratio_sim", ev.edge_ratio_sim, rb),
    ):
        write_text(_sibling(args.out, f".hist_{name}.csv"), csv_text(hist_header, histogram(values, edges)))
    code = EXIT_OK
    if stab is not None:
        cfg = _fit_config(args)
        full, rows = est.stability(series, splits=stab["splits"], repeats=stab["repeats"], seed=args.seed, config=cfg)
        header = ["repeat", "part", "direction", "n_hearts", "theta0", "alpha", "nll_full", "nll_full_min", "delta_nll", "converged"]
        write_text(_sibling(args.out, ".stability" + ext), _table(header, [[r[k] for k in header] for r in rows], args.format))
        if not all(r["converged"] for r in rows):
            code = EXIT_NOCONV
    return code


def _merge_evaluations(parts):
    first = parts[0]
    levels = [c[0] for c in first.calibration]
    calib = []
    for i, lv in enumerate(levels):
        n = sum(p.calibration[i][2] for p in parts)
        hits = sum(p.calibration[i][1] * p.calibration[i][2] for p in parts)
        calib.append((lv, hits / n, n))
    return type(first)(
        [r for p in parts for r in p.rows],
        calib,
        np.concatenate([p.errors_truth for p in parts]),
        np.concatenate([p.errors_sim for p in parts]),
        np.concatenate([p.edge_ratio_truth for p in parts]),
        np.concatenate([p.edge_ratio_sim for p in parts]),
    )


def _synth_config(args):
    fields = {}
    if args.config:
        doc = _read_json(args.config)
        if not isinstance(doc, dict):
            raise CliError(f"{args.config}: expected a JSON object", EXIT_DATA)
        check_version(doc.pop("format_version", None), args.config)
        fields.update(doc)
    for key in ("n_hearts", "profile", "slice_spacing"):
        value = getattr(args, key)
        if value is not None:
            fields[key] = value
    if args.slices_min is not None or args.slices_max is not None:
        lo, hi = fields.get("slices_range", SynthConfig.slices_range)
        fields["slices_range"] = (args.slices_min or lo, args.slices_max or hi)
    if args.peak_min is not None or args.peak_max is not None:
        lo, hi = fields.get("peak_area_range", SynthConfig.peak_area_range)
        fields["peak_area_range"] = (args.peak_min or lo, args.peak_max or hi)
    if "true_params" in fields:
        fields["true_params"] = est.ModelParams.from_dict(fields["true_params"])
    if args.true_params:
        kind, params = load_params(args.true_params)
        if kind != "single":
            raise CliError("--true-params must hold one parameter set", EXIT_PARAMS)
        fields["true_params"] = params
    fields["seed"] = args.seed
    try:
        return SynthConfig(**fields)
    except TypeError as exc:
        raise CliError(f"bad synth config: {exc}", EXIT_DATA) from None


def cmd_synth(args):
    cfg = _synth_config(args)
    data = generate(cfg, threads=args.threads)
    _emit(dataset_json(data) if args.format == "json" else dataset_csv(data), args.out)
    if args.params_out:
        doc = {"format_version": FORMAT_VERSION, "params": cfg.true_params.as_dict()}
        write_text(args.params_out, json_text(doc))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _common(p, out_help):
    p.add_argument("--seed", type=_u64, default=0, help="random seed (unsigned 64-bit)")
    p.add_argument("--threads", type=_positive_int, default=1, help="worker threads; results do not depend on it")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="format of tabular output")
    p.add_argument("--out", default=None, help=out_help + " (stdout if omitted)")


def _optimizer(p):
    p.add_argument("--xatol", type=_positive_float, default=1e-4, help="simplex size tolerance in log units")
    p.add_argument("--fatol", type=_positive_float, default=1e-6, help="objective tolerance")
    p.add_argument("--maxiter", type=_positive_int, default=500, help="iteration cap per optimisation")
    p.add_argument("--delta-max", type=_positive_float, default=est.DELTA_MAX, help="upper bound for the bridge length")


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="slicevol", description=__doc__.splitlines()[0], formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="canonicalise raw slice areas", formatter_class=fmt)
    p.add_argument("input", help="dataset (CSV or JSON)")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="areas below this (mm^2) count as zero")
    _common(p, "canonical dataset")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("fit", help="fit the eight model parameters", formatter_class=fmt)
    p.add_argument("input", help="dataset with truth_area_mm2")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="areas below this (mm^2) count as zero")
    p.add_argument("--bins", type=_positive_int, default=None, help="refit per equal-count predicted-volume bin")
    p.add_argument("--nll-grid", default=None, help="also write the SDE likelihood on a (theta0, alpha) log grid here")
    p.add_argument("--grid-size", type=_positive_int, default=25, help="grid points per axis")
    p.add_argument("--grid-span", type=_positive_float, default=4.0, help="grid covers [x / span, x * span] around the fit")
    _optimizer(p)
    _common(p, "fit report (JSON)")
    p.set_defaults(func=cmd_fit)

    for name, helptext in (("simulate", "Monte Carlo volume distributions"), ("evaluate", "score distributions against truth")):
        p = sub.add_parser(name, help=helptext, formatter_class=fmt)
        p.add_argument("input", help="dataset (CSV or JSON)")
        p.add_argument("params", help="fit report or parameter JSON")
        p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="areas below this (mm^2) count as zero")
        p.add_argument("--n-sims", type=_positive_int, default=1000, help="draws per heart")
        p.add_argument("--dt", type=_positive_float, default=DEFAULT_DT, help="SDE step in slice units")
        if name == "simulate":
            p.add_argument("--draws", action="store_true", default=False, help="include every draw (JSON only)")
            _common(p, "per-heart distribution table")
            p.set_defaults(func=cmd_simulate)
        else:
            p.add_argument("--hist-bins", type=_positive_int, default=40, help="bins of the error histograms")
            p.add_argument(
                "--stability", nargs="*", default=None, metavar="KEY=N",
                help="also run the subset-stability harness, e.g. splits=3 repeats=3",
            )
            _optimizer(p)
            _common(p, "evaluation table; side files are written next to it")
            p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic dataset", formatter_class=fmt)
    p.add_argument("--config", default=None, help="JSON file with SynthConfig fields")
    p.add_argument("--n-hearts", dest="n_hearts", type=_positive_int, default=None, help="hearts (config default 200)")
    p.add_argument("--slices-min", type=int, default=None, help="minimum N (config default 8)")
    p.add_argument("--slices-max", type=int, default=None, help="maximum N (config default 14)")
    p.add_argument("--peak-min", type=float, default=None, help="minimum peak area in mm^2 (config default 600)")
    p.add_argument("--peak-max", type=float, default=None, help="maximum peak area in mm^2 (config default 1500)")
    p.add_argument("--profile", choices=("parabolic", "plateau"), default=None, help="profile shape (config default parabolic)")
    p.add_argument("--slice-spacing", dest="slice_spacing", type=_positive_float, default=None, help="mm (config default 10)")
    p.add_argument("--true-params", default=None, help="parameter JSON to sample from (built-in defaults otherwise)")
    p.add_argument("--params-out", default=None, help="write the true parameters here")
    _common(p, "dataset")
    p.set_defaults(func=cmd_synth)
    return parser


def _setup_logging():
    level = os.environ.get("SLICEVOL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _code_for(exc):
    if isinstance(exc, (VersionMismatchError, DegenerateParamsError)):
        return EXIT_PARAMS
    return EXIT_DATA


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"slicevol: {exc}", file=sys.stderr)
        return exc.code
    except SlicevolError as exc:
        print(f"slicevol: {exc.code}: {exc}", file=sys.stderr)
        return _code_for(exc)
    except OSError as exc:
        print(f"slicevol: IO error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
