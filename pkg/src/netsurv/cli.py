"""Command-line front end.

Subcommands: ``fit``, ``test``, ``crude``, ``nessie``, ``ratetable info`` and
``bench``. Exit codes: 0 ok, 2 validation error, 3 computation error. Errors
print one line ``netsurv: error[<code>]: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import export
from ._parallel import set_num_threads
from .cohort import cut, parse_cohort_csv, parse_formula
from .crude import crude_mortality
from .errors import ComputationError, NetSurvError, ValidationError
from .estimators import DailyGrid, Method, fit_net_survival
from .inference import graffeo_test
from .nessie import nessie
from .ratetable import YEAR, demo_ratetable, load_hmd_csv, read_ratetable

BUILTIN_TABLES = {"demo": demo_ratetable}

EXIT_OK, EXIT_VALIDATION, EXIT_COMPUTATION = 0, 2, 3


class CliError(ValidationError):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _load_table(args):
    if args.table_file:
        path = Path(args.table_file)
        if not path.exists():
            raise CliError(f"rate table file {path} does not exist")
        if args.hmd:
            return load_hmd_csv(path, country=args.country)
        return read_ratetable(path)
    name = args.table or "demo"
    if name not in BUILTIN_TABLES:
        raise CliError(f"unknown built-in table {name!r}; available: {sorted(BUILTIN_TABLES)}")
    return BUILTIN_TABLES[name]()


def _parse_binding(items):
    binding = {}
    for item in items or ():
        axis, sep, col = item.partition("=")
        if not sep or not axis or not col:
            raise CliError(f"--bind expects AXIS=COLUMN, got {item!r}")
        binding[axis.strip()] = col.strip()
    return binding


def _floats(text, flag):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"{flag} expects comma-separated numbers, got {text!r}") from None


def _load_cohort(args, spec):
    path = Path(args.cohort)
    if not path.exists():
        raise CliError(f"cohort file {path} does not exist")
    cohort = parse_cohort_csv(
        path,
        time_col=spec.time_col,
        status_col=spec.status_col,
        age_col=args.age_col,
        date_col=args.date_col,
        calendar_dates=args.calendar_date or (),
        categorical=args.categorical or (),
    )
    if args.age_groups:
        breaks = _floats(args.age_groups, "--age-groups") + [np.inf]
        cohort = cohort.with_columns(agegr=cut(cohort.age / YEAR, breaks))
    return cohort


def _emit(text: str, output):
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _grid(args):
    return DailyGrid(args.grid) if args.grid else None


def _metadata(args, **extra):
    meta = {"formula": str(parse_formula(args.formula))}
    meta.update(extra)
    return meta


def cmd_fit(args):
    method = Method.parse(args.method)
    spec = parse_formula(args.formula)
    cohort, rt = _load_cohort(args, spec), _load_table(args)
    fits = fit_net_survival(cohort, rt, method, spec, binding=_parse_binding(args.bind),
                            grid=_grid(args), threads=args.threads)
    meta = _metadata(args, method=method.value, grid=fits[0].grid.t_max, level=args.level)
    _emit(export.fit_table(fits, args.level, meta).render(args.format), args.output)
    if args.plot:
        from .plotting import plot_fits
        plot_fits(fits, args.plot, args.level)
    return EXIT_OK


def cmd_test(args):
    spec = parse_formula(args.formula)
    cohort, rt = _load_cohort(args, spec), _load_table(args)
    result = graffeo_test(cohort, rt, spec, binding=_parse_binding(args.bind),
                          grid=_grid(args), threads=args.threads)
    meta = _metadata(args, test="graffeo")
    _emit(export.graffeo_table(result, meta).render(args.format), args.output)
    return EXIT_OK


def cmd_crude(args):
    method = Method.parse(args.method)
    spec = parse_formula(args.formula)
    cohort, rt = _load_cohort(args, spec), _load_table(args)
    fits = fit_net_survival(cohort, rt, method, spec, binding=_parse_binding(args.bind),
                            grid=_grid(args), threads=args.threads)
    results = [crude_mortality(f) for f in fits]
    cols = spec.group_cols + spec.strata_cols
    meta = _metadata(args, method=method.value, grid=fits[0].grid.t_max)
    _emit(export.crude_table(results, cols, meta).render(args.format), args.output)
    if args.plot:
        from .plotting import plot_crude
        plot_crude(results, args.plot, cols)
    return EXIT_OK


def cmd_nessie(args):
    spec = parse_formula(args.formula)
    cohort, rt = _load_cohort(args, spec), _load_table(args)
    points = _floats(args.time_points, "--time-points") if args.time_points else None
    result = nessie(cohort, rt, spec, binding=_parse_binding(args.bind),
                    time_points=points, threads=args.threads, lifetimes=not args.no_elt)
    meta = _metadata(args)
    ess = export.ess_table(result, meta).render(args.format)
    elt = None if args.no_elt else export.elt_table(result, meta).render(args.format)
    if args.output:
        _emit(ess, args.output)
        if elt is not None:
            _emit(elt, args.elt_output or str(Path(args.output).with_suffix("")) + "_elt"
                  + Path(args.output).suffix)
    else:
        _emit(ess if elt is None else ess + "\n" + elt, None)
    return EXIT_OK


def cmd_ratetable_info(args):
    rt = _load_table(args)
    m_a, M_a, m_d, M_d = rt.bounds
    lines = [repr(rt), ""]
    for axis in rt.axes:
        lines.append(f"available_covariates(:{axis}) = ("
                     + ", ".join(f":{v}" for v in rt.available_covariates(axis)) + ")")
    lines += [
        "",
        f"ages, in years from {m_a} to {M_a} (in days from {m_a * YEAR} to {M_a * YEAR})",
        f"date, in years from {m_d} to {M_d} (in days from {m_d * YEAR} to {M_d * YEAR})",
    ]
    _emit("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def cmd_bench(args):
    from .synthetic import synthetic_cohort

    if args.runs < 1:
        raise CliError("--runs must be >= 1")
    rt = _load_table(args)
    if args.cohort:
        spec = parse_formula(args.formula)
        cohort = _load_cohort(args, spec)
    else:
        cohort = synthetic_cohort(args.n, args.days, rate_table=rt, seed=args.seed)
    grid = DailyGrid(args.days) if args.days else None
    binding = _parse_binding(args.bind)
    group = args.group
    jobs = {
        "pohar-perme": lambda: fit_net_survival(cohort, rt, "pohar-perme", grid=grid,
                                                binding=binding, threads=args.threads),
        "ederer1": lambda: fit_net_survival(cohort, rt, "ederer1", grid=grid,
                                            binding=binding, threads=args.threads),
        "ederer2": lambda: fit_net_survival(cohort, rt, "ederer2", grid=grid,
                                            binding=binding, threads=args.threads),
        "graffeo": lambda: graffeo_test(cohort, rt, f"Surv(time, status) ~ {group}", grid=grid,
                                        binding=binding, threads=args.threads),
        "nessie": lambda: nessie(cohort, rt, binding=binding, threads=args.threads),
    }
    pp = jobs["pohar-perme"]()[0]
    jobs["crude"] = lambda: crude_mortality(pp)
    rows = []
    for name, job in jobs.items():
        job()  # warm-up / JIT
        times = []
        for _ in range(args.runs):
            t0 = time.perf_counter()
            job()
            times.append(time.perf_counter() - t0)
        rows.append([name, statistics.median(times), min(times), max(times)])
    meta = {"n": cohort.n, "days": pp.grid.t_max, "runs": args.runs, "threads": args.threads}
    table = export.Table(["task", "median_s", "min_s", "max_s"], rows, meta)
    _emit(table.render(args.format), args.output)
    return EXIT_OK


def _common(p, formula_default="Surv(time, status) ~ 1", cohort_required=True):
    p.add_argument("--cohort", required=cohort_required, help="cohort CSV file")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--table", help="built-in rate table name (default: demo)")
    src.add_argument("--table-file", help="rate table file (netsurv format, or HMD CSV with --hmd)")
    p.add_argument("--hmd", action="store_true", help="--table-file is an HMD-style long CSV")
    p.add_argument("--country", help="country code for an HMD file without a Country column")
    p.add_argument("--formula", default=formula_default)
    p.add_argument("--bind", action="append", metavar="AXIS=COLUMN",
                   help="map a rate-table axis to a differently named cohort column")
    p.add_argument("--age-col", default="age")
    p.add_argument("--date-col", default="year")
    p.add_argument("--calendar-date", action="append", metavar="COLUMN",
                   help="column holding YYYY-MM-DD dates to convert to days")
    p.add_argument("--categorical", action="append", metavar="COLUMN")
    p.add_argument("--age-groups", metavar="BREAKS",
                   help="add an 'agegr' column cutting age (years) at these breaks")
    p.add_argument("--grid", type=int, help="grid length in days (default: max follow-up)")
    p.add_argument("--output", "-o", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="netsurv", description="Non-parametric net survival analysis.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="net survival curves (Pohar Perme, Ederer I/II)")
    _common(p)
    p.add_argument("--method", default="pohar-perme",
                   help="pohar-perme | ederer1 | ederer2")
    p.add_argument("--level", type=float, default=0.05, help="CI error level (0.05 -> 95%%)")
    p.add_argument("--plot", metavar="SVG", help="also write an SVG plot")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="Graffeo log-rank-type test")
    _common(p, "Surv(time, status) ~ sex")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("crude", help="Cronin-Feuer crude mortality")
    _common(p)
    p.add_argument("--method", default="pohar-perme")
    p.add_argument("--plot", metavar="SVG")
    p.set_defaults(func=cmd_crude)

    p = sub.add_parser("nessie", help="expected net sample size and remaining lifetime")
    _common(p)
    p.add_argument("--time-points", help="comma-separated years (default: 0, 1, ...)")
    p.add_argument("--elt-output", help="file for the life-expectancy table")
    p.add_argument("--no-elt", action="store_true",
                   help="skip the life expectancy (needed when it diverges)")
    p.set_defaults(func=cmd_nessie)

    p = sub.add_parser("ratetable", help="rate table utilities")
    rsub = p.add_subparsers(dest="rt_command", required=True, parser_class=_Parser)
    info = rsub.add_parser("info", help="show axes, covariate values and bounds")
    src = info.add_mutually_exclusive_group()
    src.add_argument("--table")
    src.add_argument("--table-file")
    info.add_argument("--hmd", action="store_true")
    info.add_argument("--country")
    info.add_argument("--output", "-o")
    info.set_defaults(func=cmd_ratetable_info)

    p = sub.add_parser("bench", help="time fit/test/crude/nessie")
    _common(p, cohort_required=False)
    p.add_argument("--n", type=int, default=6000, help="synthetic cohort size")
    p.add_argument("--days", type=int, default=8149, help="grid length in days")
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--group", default="stage", help="grouping column for the test timing")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "threads", None) is not None:
            if args.threads < 1:
                raise CliError("--threads must be >= 1")
            set_num_threads(args.threads)
        if getattr(args, "level", None) is not None and not 0 < args.level < 1:
            raise CliError(f"--level must lie in (0, 1), got {args.level}")
        return args.func(args)
    except NetSurvError as exc:
        status = EXIT_COMPUTATION if isinstance(exc, ComputationError) else EXIT_VALIDATION
        msg = str(exc).replace("\n", " ")
        print(f"netsurv: error[{exc.code}]: {msg}", file=sys.stderr)
        return status
    except BrokenPipeError:
        # downstream reader closed early (e.g. `| head`)
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except (OSError, UnicodeDecodeError) as exc:
        print(f"netsurv: error[io]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"netsurv: error[computation]: {exc}", file=sys.stderr)
        return EXIT_COMPUTATION


if __name__ == "__main__":
    sys.exit(main())
