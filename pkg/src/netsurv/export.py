"""CSV / JSON writers for fits, tests, crude mortality and nessie results.

Floats are written with ``repr`` so that output is full precision and
byte-identical across runs.
"""

from __future__ import annotations

import csv
import io
import json
from typing import Sequence

import numpy as np

from .crude import CrudeMortality
from .estimators import NetSurvivalFit, confint
from .inference import GraffeoResult
from .nessie import NessieResult


def group_name(cols: Sequence[str], label: tuple) -> str:
    if not cols:
        return "all"
    return ",".join(f"{c}={v}" for c, v in zip(cols, label))


def _num(x):
    if isinstance(x, (np.integer, int)):
        return int(x)
    x = float(x)
    return x if np.isfinite(x) else repr(x)


class Table:
    """Column names + rows, rendered as CSV or as a JSON envelope."""

    def __init__(self, columns, rows, metadata=None):
        self.columns = list(columns)
        self.rows = rows
        self.metadata = metadata or {}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        data = [{c: _num(v) if not isinstance(v, str) else v for c, v in zip(self.columns, row)}
                for row in self.rows]
        return json.dumps({"metadata": self.metadata, "columns": self.columns, "data": data},
                          indent=1) + "\n"

    def render(self, fmt: str) -> str:
        return self.to_json() if fmt == "json" else self.to_csv()


def fit_table(fits: Sequence[NetSurvivalFit], level: float = 0.05, metadata=None) -> Table:
    """Rows of (day, dLambda, sigma_cum, S, lower, upper), one block per group."""
    grouped = bool(fits and fits[0].group_cols)
    cols = (["group"] if grouped else []) + ["day", "dLambda", "sigma_cum", "S", "lower", "upper"]
    rows = []
    for fit in fits:
        lo, hi = confint(fit, level)
        prefix = [group_name(fit.group_cols, fit.group_label)] if grouped else []
        for j, day in enumerate(fit.grid.days):
            rows.append(prefix + [int(day), fit.dLambda_E[j], fit.sigma[j], fit.S_E[j], lo[j], hi[j]])
    return Table(cols, rows, metadata)


def crude_table(results: Sequence[CrudeMortality], group_cols=(), metadata=None) -> Table:
    grouped = bool(group_cols)
    cols = (["group"] if grouped else []) + ["t", "one_minus_S_O", "M_E", "M_P"]
    rows = []
    for r in results:
        prefix = [group_name(group_cols, r.group_label)] if grouped else []
        for j, day in enumerate(r.grid.days):
            rows.append(prefix + [int(day), r.one_minus_S_O[j], r.M_E[j], r.M_P[j]])
    return Table(cols, rows, metadata)


def graffeo_table(result: GraffeoResult, metadata=None) -> Table:
    return Table(
        ["grouping", "strata", "statistic", "dof", "p_value"],
        [[
            "+".join(result.group_cols),
            "+".join(result.strata_cols) or "-",
            result.statistic, int(result.dof), result.p_value,
        ]],
        metadata,
    )


def ess_table(result: NessieResult, metadata=None) -> Table:
    names = [group_name(result.group_cols, g) for g in result.groups]
    rows = [[t, *result.ess[i]] for i, t in enumerate(result.time_points)]
    return Table(["years", *names], rows, metadata)


def elt_table(result: NessieResult, metadata=None) -> Table:
    rows = [[group_name(result.group_cols, g), e] for g, e in zip(result.groups, result.elt)]
    return Table(["group", "years"], rows, metadata)
