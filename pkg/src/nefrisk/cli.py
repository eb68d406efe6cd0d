"""Command-line interface: ``nefrisk {fit,sample,estimate,gof,tailplot,reproduce}``.

Exit codes: 0 success, 1 usage, 2 data error, 3 fit error, 4 simulation error.

Every subcommand accepts ``--config FILE``, a flat ``key = value`` file whose
keys are the long option names (``target-rel-se = 0.1``).  Command-line flags
override the file, which overrides the built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import presets
from .claims import CLAIM_FAMILIES, FitError
from .counting import COUNTING_FAMILIES, DominanceError, SamplerStallError, make_counting, poisson_log_pmf
from .data import DEFAULT_SCALE, DataError, get_filter, load_dataset, summarize
from .engine import (
    DEFAULT_SEED,
    InfeasibleTiltError,
    WeightOverflowError,
    adaptive_sample_size,
    estimate,
    sample_aggregate,
)
from .fitting import FittedModel, SampleMoments, fit_counting_dispersion, fit_model, recover_claim_moments
from .gof import chi_square_two_sample, histogram_pair
from .nef import DomainError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FIT, EXIT_SIM = 0, 1, 2, 3, 4
RESULT_HEADER = ("x", "M", "estimate", "std_error")
DEFAULT_M = 10_000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- output helpers -------------------------------------------------------------

def format_sci(value):
    """Three significant digits, e.g. ``1.08e-02``; blank for missing values."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.2e}"


def format_level(x):
    return f"{x:g}" if float(x) != int(x) else str(int(x))


def result_rows(results):
    """CSV rows for ``(x, M, estimate, std_error)`` tuples; ``None`` leaves a blank."""
    rows = [list(RESULT_HEADER)]
    for x, M, est, se in results:
        rows.append([format_level(x), "" if M is None else str(int(M)), format_sci(est), format_sci(se)])
    return rows


def write_csv(rows, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerows(rows)


def read_results_csv(text):
    """Inverse of the result-table writer: list of ``(x, M, estimate, std_error)``."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return []
    if tuple(header) != RESULT_HEADER:
        raise DataError(f"unexpected header {header!r}")

    def num(tok, kind=float):
        return kind(float(tok)) if tok else None

    return [(num(r[0]), num(r[1], int), num(r[2]), num(r[3])) for r in reader if r]


def _emit(args, text):
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _rows_text(rows):
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


# -- config -----------------------------------------------------------------------

def read_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    config = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected key = value")
        config[key.strip().replace("-", "_")] = value.strip()
    return config


def _apply_config(sub, config):
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in config.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"unknown config key {key!r} for '{sub.prog}'")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            continue
        convert = action.type or str
        try:
            if action.nargs in ("*", "+") or isinstance(action.nargs, int):
                values = [convert(tok) for tok in raw.replace(",", " ").split()]
            else:
                values = convert(raw)
        except (TypeError, ValueError):
            raise UsageError(f"config key {key!r}: cannot parse {raw!r}") from None
        if action.choices is not None:
            for v in values if isinstance(values, list) else [values]:
                if v not in action.choices:
                    raise UsageError(f"config key {key!r}: {v!r} not in {sorted(action.choices)}")
        defaults[key] = values
    sub.set_defaults(**defaults)


# -- parser -------------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="flat key = value file with defaults for these options")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"RNG seed (default {DEFAULT_SEED})")
    p.add_argument("--workers", type=int, default=1, help="parallel worker streams")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", "-o", help="write results here instead of stdout")


def _model_source(p, families_all=False):
    p.add_argument("--data", help="Swedish motor table (comma or whitespace delimited)")
    p.add_argument("--filter", default="larger_cities",
                   help="named subset (larger_cities, all) or inline 'zone=1,2;bonus=1-7'")
    p.add_argument("--scale", type=float, default=DEFAULT_SCALE, help="payment divisor")
    p.add_argument("--moments", type=float, nargs=4, metavar=("MEAN_N", "VAR_N", "MEAN_S", "VAR_S"),
                   help="summary moments instead of --data (default: case-study values)")
    p.add_argument("--records", type=int, default=presets.CASE_STUDY_SUMMARY["records"],
                   help="number of cells behind --moments")
    p.add_argument("--model", help="fitted-model JSON written by 'fit'")
    counting = sorted(COUNTING_FAMILIES) + ["poisson"] + (["all"] if families_all else [])
    claims = sorted(CLAIM_FAMILIES) + (["all"] if families_all else [])
    p.add_argument("--counting", choices=counting, default="all" if families_all else "abel")
    p.add_argument("--claim", choices=claims, default="all" if families_all else "ig")
    p.add_argument("--stable-root", choices=("lower", "upper"), default="lower",
                   help="branch of the stable index fit")


def build_parser():
    parser = _Parser(prog="nefrisk", description="Compound-sum tail probabilities with heavy-tailed NEF counts.")
    subs = parser.add_subparsers(dest="command", parser_class=_Parser)
    subs.required = True

    p = subs.add_parser("fit", help="two-moment fits from data or summary moments")
    _common(p)
    _model_source(p, families_all=True)
    p.set_defaults(func=cmd_fit)

    p = subs.add_parser("sample", help="draw counts, claims or aggregates")
    _common(p)
    _model_source(p)
    p.add_argument("--what", choices=("count", "claim", "aggregate"), default="aggregate")
    p.add_argument("-n", "--size", type=int, default=1000, help="number of draws")
    p.set_defaults(func=cmd_sample)

    p = subs.add_parser("estimate", help="estimate P(S_N > x) by MC or IS")
    _common(p)
    _model_source(p)
    p.add_argument("--x", type=float, nargs="*", default=[], help="levels")
    p.add_argument("--method", choices=("mc", "is"), default="is")
    size = p.add_mutually_exclusive_group()
    size.add_argument("--M", type=int, help=f"replications per level (default {DEFAULT_M})")
    size.add_argument("--target-rel-se", type=float, help="adaptive: grow M until se/estimate <= this")
    p.add_argument("--budget", type=int, default=2 ** 24, help="replication cap in adaptive mode")
    p.set_defaults(func=cmd_estimate)

    p = subs.add_parser("gof", help="chi-square p-values of every model against the data")
    _common(p)
    _model_source(p)
    p.add_argument("--n-sim", type=int, default=presets.GOF_SIMULATIONS)
    p.add_argument("--bins", type=int, default=presets.GOF_BINS, help="target chi-square bins")
    p.add_argument("--hist-bins", type=int, default=30)
    p.add_argument("--hist-output", help="CSV of density histograms, data and each model")
    p.set_defaults(func=cmd_gof)

    p = subs.add_parser("tailplot", help="count pmfs over a range of n")
    _common(p)
    _model_source(p)
    p.add_argument("--n-min", type=int, default=presets.FIGURE1_RANGE[0])
    p.add_argument("--n-max", type=int, default=presets.FIGURE1_RANGE[1])
    p.set_defaults(func=cmd_tailplot)

    p = subs.add_parser("reproduce", help="run the case-study tables into a directory")
    _common(p)
    _model_source(p)
    p.add_argument("--out-dir", default="reproduce_out")
    p.add_argument("--m-scale", type=float, default=1.0, help="multiply every replication count")
    p.set_defaults(func=cmd_reproduce)
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(sub, read_config(args.config))
        args = parser.parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        raise UsageError("--workers must be at least 1")
    return args


# -- model assembly ------------------------------------------------------------------

def _moments(args):
    """Count and claim moments, from --data or --moments (case study by default)."""
    if args.data:
        records = get_filter(args.filter).apply(load_dataset(args.data, args.scale))
        if len(records) < 2:
            raise DataError(f"{args.data}: filter '{args.filter}' leaves {len(records)} records, need 2")
        summary = summarize(records)
        claim = recover_claim_moments(summary.count_moments, summary.aggregate_moments,
                                      summary.total_claims, summary.total_payment)
        provenance = {"data": os.path.basename(args.data), "filter": args.filter, "scale": args.scale}
        provenance.update(summary.to_dict())
        return summary.count_moments, claim, provenance, records
    if not args.moments:
        mn, vn, my, vy = presets.case_study_moments()
        count = SampleMoments(mn, vn, presets.CASE_STUDY_SUMMARY["records"])
        claim = SampleMoments(my, vy, presets.CASE_STUDY_SUMMARY["total_claims"])
        return count, claim, {"source": "case-study summary"}, None
    mn, vn, ms, vs = args.moments
    count = SampleMoments(mn, vn, args.records)
    aggregate = SampleMoments(ms, vs, args.records)
    claim = recover_claim_moments(count, aggregate, mn * args.records, ms * args.records)
    provenance = {"moments": [mn, vn, ms, vs], "records": args.records}
    return count, claim, provenance, None


def _load_models(path):
    try:
        with open(path, encoding="utf-8") as fh:
            record = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    items = record["models"] if isinstance(record, dict) and "models" in record else [record]
    try:
        return [FittedModel.from_dict(item) for item in items]
    except ValueError as exc:
        if isinstance(exc, (FitError, DomainError)):
            raise
        raise DataError(f"{path}: {exc}") from None


def resolve_model(args, counting=None, claim=None):
    counting = counting or args.counting
    claim = claim or args.claim
    if args.model:
        models = _load_models(args.model)
        if len(models) == 1:
            return models[0]
        for m in models:
            if (m.counting_family, m.claim_family) == (counting, claim):
                return m
        raise DataError(f"{args.model} holds no {counting}+{claim} model")
    count_m, claim_m, provenance, _ = _moments(args)
    return fit_model(counting, claim, count_m, claim_m, provenance, args.stable_root)


# -- subcommands -----------------------------------------------------------------------

def _fit_tables(count_m, claim_m, fits):
    lines = [
        "data                      average        variance",
        f"claim number          {count_m.mean:12.2f}  {count_m.variance:14.2f}",
        f"individual claim size {claim_m.mean:12.2f}  {claim_m.variance:14.2f}",
        "",
        "count       p",
    ]
    seen = set()
    for f in fits:
        if f.counting_family not in seen and f.counting_family != "poisson":
            seen.add(f.counting_family)
            lines.append(f"{f.counting_family:<10s}{f.p_N:10.6f}")
    lines += ["", "claim          theta          p      alpha"]
    seen = set()
    for f in fits:
        if f.claim_family not in seen:
            seen.add(f.claim_family)
            par = f.claim_params
            alpha = f"{par['alpha']:10.6f}" if "alpha" in par else ""
            lines.append(f"{f.claim_family:<8s}{par['theta']:12.6f}{par['p']:11.6f}{alpha}")
    return "\n".join(lines) + "\n"


def cmd_fit(args):
    count_m, claim_m, provenance, _ = _moments(args)
    countings = list(COUNTING_FAMILIES) if args.counting == "all" else [args.counting]
    claims = list(CLAIM_FAMILIES) if args.claim == "all" else [args.claim]
    fits = [fit_model(c, y, count_m, claim_m, provenance, args.stable_root) for c in countings for y in claims]
    record = {
        "summary": {
            "count": {"mean": count_m.mean, "variance": count_m.variance},
            "claim": {"mean": claim_m.mean, "variance": claim_m.variance},
        },
        "models": [f.to_dict() for f in fits],
    }
    text = json.dumps(record, indent=2) + "\n"
    if args.format == "json" and not args.output:
        sys.stdout.write(text)
    else:
        sys.stdout.write(_fit_tables(count_m, claim_m, fits))
        if args.output:
            _emit(args, text)
    return EXIT_OK


def cmd_sample(args):
    if args.size < 0:
        raise UsageError("--size must be nonnegative")
    fitted = resolve_model(args)
    model = fitted.model()
    rng = np.random.default_rng(args.seed)
    if args.what == "count":
        columns = {"n": model.counting.sample(rng, args.size)}
    elif args.what == "claim":
        columns = {"y": model.claim.sample(rng, args.size)}
    else:
        n, s = sample_aggregate(model, rng, args.size)
        columns = {"n": n, "s": s}
    if args.format == "json":
        text = json.dumps({k: np.asarray(v).tolist() for k, v in columns.items()}) + "\n"
    else:
        names = list(columns)
        rows = [names] + [[repr(v.item()) for v in vals] for vals in zip(*(columns[k] for k in names))]
        text = _rows_text(rows)
    _emit(args, text)
    return EXIT_OK


def _run_levels(model, levels, method, M, target, budget, seed, workers):
    """One result per level; failures are reported and left blank."""
    results, records, failed = [], [], False
    for x in levels:
        try:
            if target is not None:
                r = adaptive_sample_size(model, x, target, method, seed, workers, budget=budget)
            else:
                r = estimate(model, x, M, method, seed, workers)
        except (InfeasibleTiltError, WeightOverflowError, SamplerStallError) as exc:
            print(f"nefrisk: level x={format_level(x)}: {exc}", file=sys.stderr)
            results.append((x, None, None, None))
            records.append({"x": x, "method": method, "error": str(exc)})
            failed = True
            continue
        if r.converged:
            results.append((x, r.M, r.estimate, r.std_error))
        else:
            print(f"nefrisk: level x={format_level(x)}: budget of {r.M} replications exhausted", file=sys.stderr)
            results.append((x, r.M, None, None))
        records.append(r.to_dict())
    return results, records, failed


def cmd_estimate(args):
    fitted = resolve_model(args)
    model = fitted.model()
    M = args.M if args.M is not None else DEFAULT_M
    if M < 1:
        raise UsageError("--M must be at least 1")
    if args.target_rel_se is not None and not 0 < args.target_rel_se < 1:
        raise UsageError("--target-rel-se must lie in (0, 1)")
    results, records, failed = _run_levels(model, args.x, args.method, M, args.target_rel_se,
                                           args.budget, args.seed, args.workers)
    if args.format == "json":
        text = json.dumps(records, indent=2) + "\n"
    else:
        text = _rows_text(result_rows(results))
    _emit(args, text)
    return EXIT_SIM if failed else EXIT_OK


def gof_grid(records, count_m, claim_m, n_sim, bins, seed, stable_root="lower"):
    """p-values for the Poisson baselines and every cubic-VF model, in table order."""
    data = np.array([r.payment for r in records])
    pairs = [("poisson", y) for y in CLAIM_FAMILIES] + [(c, y) for c in COUNTING_FAMILIES for y in CLAIM_FAMILIES]
    streams = np.random.SeedSequence(seed).spawn(len(pairs))
    out = []
    for (c, y), stream in zip(pairs, streams):
        fitted = fit_model(c, y, count_m, claim_m, stable_root=stable_root)
        _, sim = sample_aggregate(fitted.model(), np.random.default_rng(stream), n_sim)
        out.append((c, y, chi_square_two_sample(data, sim, bins), sim))
    return data, out


def cmd_gof(args):
    if not args.data:
        raise DataError("gof needs --data")
    count_m, claim_m, _, records = _moments(args)
    data, grid = gof_grid(records, count_m, claim_m, args.n_sim, args.bins, args.seed, args.stable_root)
    if args.format == "json":
        rows = [{"count": c, "claim": y, **g.to_dict()} for c, y, g, _ in grid]
        text = json.dumps(rows, indent=2) + "\n"
    else:
        rows = [["count", "claim", "statistic", "dof", "p_value"]]
        rows += [[c, y, f"{g.statistic:.6g}", str(g.dof), f"{g.p_value:.4g}"] for c, y, g, _ in grid]
        text = _rows_text(rows)
    _emit(args, text)
    if args.hist_output:
        with open(args.hist_output, "w", encoding="utf-8") as fh:
            write_csv(histogram_rows(data, grid, args.hist_bins), fh)
    return EXIT_OK


def histogram_rows(data, grid, bins):
    edges, dens, _ = histogram_pair(data, data, bins)
    header = ["lower", "upper", "data"] + [f"{c}_{y}" for c, y, _, _ in grid]
    cols = [dens]
    for _, _, _, sim in grid:
        counts, _ = np.histogram(sim, edges)
        cols.append(counts / (sim.size * np.diff(edges)))
    rows = [header]
    for i in range(bins):
        rows.append([f"{edges[i]:.6g}", f"{edges[i + 1]:.6g}"] + [f"{col[i]:.6e}" for col in cols])
    return rows


def tailplot_rows(count_m, n_min, n_max):
    n = np.arange(n_min, n_max + 1)
    cols = {}
    for family in COUNTING_FAMILIES:
        dist = make_counting(family, fit_counting_dispersion(family, count_m), count_m.mean)
        cols[family] = dist.pmf(n)
    cols["poisson"] = np.exp(poisson_log_pmf(n, count_m.mean))
    rows = [["n"] + [f"{k}_pmf" for k in cols]]
    for i, k in enumerate(n):
        rows.append([str(k)] + [f"{cols[f][i]:.6e}" for f in cols])
    return rows


def cmd_tailplot(args):
    if args.n_min < 0 or args.n_max < args.n_min:
        raise UsageError("need 0 <= --n-min <= --n-max")
    count_m, _, _, _ = _moments(args)
    _emit(args, _rows_text(tailplot_rows(count_m, args.n_min, args.n_max)))
    return EXIT_OK


def _scaled(M, factor):
    return None if M is None else max(1, int(round(M * factor)))


def cmd_reproduce(args):
    os.makedirs(args.out_dir, exist_ok=True)
    count_m, claim_m, provenance, records = _moments(args)
    fits = [fit_model(c, y, count_m, claim_m, provenance, args.stable_root)
            for c in COUNTING_FAMILIES for y in CLAIM_FAMILIES]

    def path(name):
        return os.path.join(args.out_dir, name)

    def log(msg):
        print(f"nefrisk reproduce: {msg}", file=sys.stderr)

    with open(path("fit.txt"), "w", encoding="utf-8") as fh:
        fh.write(_fit_tables(count_m, claim_m, fits))
    with open(path("fit.json"), "w", encoding="utf-8") as fh:
        json.dump({"models": [f.to_dict() for f in fits]}, fh, indent=2)
    log("fit tables written")

    failed = False
    for name, table, method in (("table1", presets.TABLE1, "mc"), ("table2", presets.TABLE2, "is"),
                                ("table3_mc", presets.TABLE3, "mc"), ("table3_is", presets.TABLE3, "is")):
        model = fit_model(table["counting"], table["claim"], count_m, claim_m, stable_root=args.stable_root).model()
        results = []
        for x, M in table[method].items():
            M = _scaled(M, args.m_scale)
            if M is None:
                results.append((x, None, None, None))
                continue
            res, _, bad = _run_levels(model, [x], method, M, None, None, args.seed, args.workers)
            failed |= bad
            results.extend(res)
        with open(path(f"{name}.csv"), "w", encoding="utf-8") as fh:
            write_csv(result_rows(results), fh)
        log(f"{name} written")

    if records is not None:
        data, grid = gof_grid(records, count_m, claim_m, presets.GOF_SIMULATIONS, presets.GOF_BINS,
                              args.seed, args.stable_root)
        rows = [["count", "claim", "p_value"]] + [[c, y, f"{g.p_value:.4g}"] for c, y, g, _ in grid]
        with open(path("table4.csv"), "w", encoding="utf-8") as fh:
            write_csv(rows, fh)
        with open(path("figure2_hist.csv"), "w", encoding="utf-8") as fh:
            write_csv(histogram_rows(data, grid, 30), fh)
        log("table4 written")
    else:
        log("table4 skipped: needs --data")

    with open(path("figure1.csv"), "w", encoding="utf-8") as fh:
        write_csv(tailplot_rows(count_m, *presets.FIGURE1_RANGE), fh)
    log("figure1 written")
    return EXIT_SIM if failed else EXIT_OK


def main(argv=None):
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"nefrisk: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FitError, DomainError) as exc:
        print(f"nefrisk: fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (InfeasibleTiltError, WeightOverflowError, SamplerStallError, DominanceError, RuntimeError) as exc:
        print(f"nefrisk: simulation error: {exc}", file=sys.stderr)
        return EXIT_SIM
    except ValueError as exc:
        # remaining invalid option values (bad filter spec, too few records, ...)
        print(f"nefrisk: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
