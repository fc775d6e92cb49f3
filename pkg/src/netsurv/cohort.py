"""Patient cohorts, the ``Surv(time, status) ~ ...`` formula, and axis binding."""

from __future__ import annotations

import csv
import datetime as _dt
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DomainError,
    FormulaSyntaxError,
    MissingColumnError,
    UnknownCovariateError,
    UnmatchedAxisError,
    ValidationError,
)
from .ratetable import YEAR, RateTable

__all__ = [
    "Cohort",
    "FormulaSpec",
    "AxisBinding",
    "parse_cohort_csv",
    "parse_formula",
    "render_formula",
    "bind_axes",
    "calendar_to_days",
    "cut",
]


def calendar_to_days(text: str) -> float:
    """``YYYY-MM-DD`` -> year * 365.241 + (day-of-year - 1)."""
    d = _dt.date.fromisoformat(text.strip())
    return d.year * YEAR + (d.timetuple().tm_yday - 1)


def _as_column(values: Sequence[str], force_categorical: bool) -> np.ndarray:
    if not force_categorical:
        try:
            if all(re.fullmatch(r"\s*[+-]?\d+\s*", v) for v in values):
                return np.array([int(v) for v in values], dtype=np.int64)
            return np.array([float(v) for v in values], dtype=np.float64)
        except ValueError:
            pass
    return np.array([sys.intern(v.strip()) for v in values], dtype=object)


@dataclass(frozen=True, eq=False)
class Cohort:
    """Columnar patient data.

    ``columns`` maps names to equal-length arrays: numeric columns are int64 or
    float64, categorical ones are object arrays of interned strings.
    ``time_col``/``status_col`` name the default follow-up columns and
    ``age_col``/``date_col`` the age and date at diagnosis, all in days.
    """

    columns: Mapping[str, np.ndarray]
    time_col: str = "time"
    status_col: str = "status"
    age_col: str = "age"
    date_col: str = "year"
    n: int = field(init=False)

    def __post_init__(self):
        cols = {}
        lengths = set()
        for name, values in self.columns.items():
            arr = np.asarray(values)
            if arr.dtype.kind in "US":
                arr = np.array([sys.intern(str(v)) for v in arr], dtype=object)
            arr = arr.copy()
            arr.setflags(write=False)
            cols[name] = arr
            lengths.add(arr.shape[0])
        if len(lengths) > 1:
            raise ValidationError(f"columns have differing lengths {sorted(lengths)}")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "n", lengths.pop() if lengths else 0)
        for name in (self.age_col, self.date_col):
            if name in cols:
                self.numeric(name)
        if self.age_col in cols and np.any(self.numeric(self.age_col) < 0):
            raise DomainError(f"column {self.age_col!r} (age in days) must be >= 0")

    def __len__(self):
        return self.n

    def __contains__(self, name):
        return name in self.columns

    def __getitem__(self, name) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise MissingColumnError(name, list(self.columns)) from None

    def numeric(self, name) -> np.ndarray:
        col = self[name]
        if col.dtype.kind not in "iuf":
            raise ValidationError(f"column {name!r} must be numeric")
        return col.astype(np.float64)

    def surv(self, time_col=None, status_col=None) -> tuple[np.ndarray, np.ndarray]:
        """Validated (time, status) arrays; time as float days, status as int8."""
        time_col = time_col or self.time_col
        status_col = status_col or self.status_col
        t = self.numeric(time_col)
        if np.any(~np.isfinite(t)) or np.any(t < 0):
            raise DomainError(f"column {time_col!r} must be finite and >= 0")
        s = self.numeric(status_col)
        if np.any((s != 0) & (s != 1)):
            bad = s[(s != 0) & (s != 1)][0]
            raise DomainError(f"column {status_col!r} must be 0 or 1, found {bad!r}")
        return t, s.astype(np.int8)

    @property
    def time(self):
        return self.surv()[0]

    @property
    def status(self):
        return self.surv()[1]

    @property
    def age(self):
        return self.numeric(self.age_col)

    @property
    def date(self):
        return self.numeric(self.date_col)

    def with_columns(self, **new) -> Cohort:
        cols = dict(self.columns)
        cols.update(new)
        return Cohort(cols, self.time_col, self.status_col, self.age_col, self.date_col)

    def subset(self, mask) -> Cohort:
        mask = np.asarray(mask)
        return Cohort(
            {k: v[mask] for k, v in self.columns.items()},
            self.time_col, self.status_col, self.age_col, self.date_col,
        )

    def groups(self, cols: Sequence[str]) -> tuple[list[tuple], np.ndarray]:
        """Observed level combinations of ``cols`` (sorted) and per-patient codes.

        With no columns every patient is in the single group ``()``.
        """
        if not cols:
            return [()], np.zeros(self.n, dtype=np.int64)
        keys = list(zip(*(self[c].tolist() for c in cols)))
        labels = sorted(set(keys))
        index = {k: i for i, k in enumerate(labels)}
        return labels, np.fromiter((index[k] for k in keys), np.int64, self.n)


def parse_cohort_csv(
    path,
    *,
    time_col: str = "time",
    status_col: str = "status",
    age_col: str = "age",
    date_col: str = "year",
    categorical: Sequence[str] = (),
    calendar_dates: Sequence[str] = (),
    required: Sequence[str] = (),
) -> Cohort:
    """Read a cohort from a UTF-8, comma-separated file with a header row.

    Columns whose every value parses as a number become numeric; the rest
    (and any listed in ``categorical``) become categorical. Columns in
    ``calendar_dates`` hold ``YYYY-MM-DD`` strings and are converted to days.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValidationError(f"{path}: empty file, expected a header row")
        header = [h.strip() for h in header]
        rows = [r for r in reader if r]
    for lineno, r in enumerate(rows, 2):
        if len(r) != len(header):
            raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(r)}")
    for name in (time_col, status_col, age_col, date_col, *required):
        if name not in header:
            raise MissingColumnError(name, header)
    raw = {h: [r[j] for r in rows] for j, h in enumerate(header)}
    cols = {}
    for name, values in raw.items():
        if name in calendar_dates:
            cols[name] = np.array([calendar_to_days(v) for v in values])
        else:
            cols[name] = _as_column(values, name in categorical)
    for name in (time_col, status_col, age_col, date_col):
        if cols[name].dtype == object:
            raise ValidationError(f"{path}: column {name!r} must be numeric")
    cohort = Cohort(cols, time_col, status_col, age_col, date_col)
    cohort.surv()
    return cohort


def cut(values, breaks: Sequence[float], labels: Sequence[str] | None = None) -> np.ndarray:
    """Bin ``values`` into left-closed intervals ``[b_k, b_{k+1})``.

    Labels default to ``"lo-hi"`` with ``"lo+"`` for an infinite upper edge.
    """
    breaks = list(breaks)
    if labels is None:
        def fmt(x):
            return str(int(x)) if float(x).is_integer() else str(x)
        labels = [
            f"{fmt(lo)}+" if np.isinf(hi) else f"{fmt(lo)}-{fmt(hi)}"
            for lo, hi in zip(breaks[:-1], breaks[1:])
        ]
    idx = np.searchsorted(breaks, np.asarray(values, float), side="right") - 1
    if np.any(idx < 0) or np.any(idx >= len(labels)):
        raise DomainError("values fall outside the cut breaks")
    return np.array([sys.intern(labels[i]) for i in idx], dtype=object)


# --------------------------------------------------------------------------
# formula


@dataclass(frozen=True)
class FormulaSpec:
    time_col: str
    status_col: str
    group_cols: tuple[str, ...] = ()
    strata_cols: tuple[str, ...] = ()

    def __str__(self):
        return render_formula(self)

    @property
    def columns(self) -> tuple[str, ...]:
        return (self.time_col, self.status_col, *self.group_cols, *self.strata_cols)

    def check(self, cohort: Cohort) -> None:
        for name in self.columns:
            if name not in cohort:
                raise MissingColumnError(name, list(cohort.columns))


_TOKEN = re.compile(r"\s*(?:(?P<id>[A-Za-z_][A-Za-z0-9_.]*)|(?P<one>1)|(?P<op>[(),~+]))")


def _tokenize(text):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            start = len(text) - len(text[pos:].lstrip())
            raise FormulaSyntaxError(f"unexpected character {text[start]!r}", text, start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def parse_formula(text: str) -> FormulaSpec:
    """Parse ``Surv(time, status) ~ 1`` or ``Surv(t, s) ~ a + b + Strata(c)``.

    >>> parse_formula("Surv(time,status) ~ stage + Strata(sex)")
    FormulaSpec(time_col='time', status_col='status', group_cols=('stage',), strata_cols=('sex',))
    """
    tokens = _tokenize(text)
    pos = 0

    def peek():
        return tokens[pos]

    def expect(kind, value=None, what=None):
        nonlocal pos
        k, v, at = tokens[pos]
        if k != kind or (value is not None and v != value):
            want = what or repr(value or kind)
            got = "end of input" if k == "end" else repr(v)
            raise FormulaSyntaxError(f"expected {want}, got {got}", text, at)
        pos += 1
        return v

    expect("id", "Surv", "'Surv'")
    expect("op", "(")
    time_col = expect("id", what="time column")
    expect("op", ",")
    status_col = expect("id", what="status column")
    expect("op", ")")
    expect("op", "~")
    groups, strata = [], []
    if peek()[0] == "one":
        pos += 1
    else:
        while True:
            k, v, at = peek()
            if k == "id" and v == "Strata" and tokens[pos + 1][1] == "(":
                if not groups:
                    raise FormulaSyntaxError("Strata() needs a preceding grouping term", text, at)
                pos += 2
                strata.append(expect("id", what="strata column"))
                expect("op", ")")
            elif strata:
                raise FormulaSyntaxError("grouping terms must precede Strata()", text, at)
            else:
                groups.append(expect("id", what="column name or 1"))
            if peek()[1] != "+":
                break
            pos += 1
    expect("end", what="end of formula")

    used = [time_col, status_col, *groups, *strata]
    seen = set()
    for name in used:
        if name in seen:
            raise FormulaSyntaxError(f"column {name!r} used more than once", text, text.rfind(name))
        seen.add(name)
    return FormulaSpec(time_col, status_col, tuple(groups), tuple(strata))


def render_formula(spec: FormulaSpec) -> str:
    rhs = " + ".join([*spec.group_cols, *(f"Strata({s})" for s in spec.strata_cols)]) or "1"
    return f"Surv({spec.time_col}, {spec.status_col}) ~ {rhs}"


# --------------------------------------------------------------------------
# axis binding


@dataclass(frozen=True)
class AxisBinding:
    """Rate-table axis -> cohort column, plus the resolved per-patient table index."""

    mapping: Mapping[str, str]
    table_index: np.ndarray = field(repr=False)


def bind_axes(cohort: Cohort, rate_table: RateTable, binding: Mapping[str, str] | None = None) -> AxisBinding:
    """Resolve every rate-table axis to a cohort column and check its values.

    Axes map to the identically named column unless ``binding`` overrides it.
    """
    binding = dict(binding or {})
    extra = set(binding) - set(rate_table.axes)
    if extra:
        raise ValidationError(
            f"binding names unknown axes {sorted(extra)}; rate table axes are {rate_table.axes}"
        )
    for name in (cohort.age_col, cohort.date_col):
        if name not in cohort:
            raise MissingColumnError(name, list(cohort.columns))
    mapping = {}
    for axis in rate_table.axes:
        col = binding.get(axis, axis)
        if col not in cohort:
            raise UnmatchedAxisError(axis, list(cohort.columns))
        mapping[axis] = col
    values = [[str(v) for v in cohort[mapping[a]].tolist()] for a in rate_table.axes]
    for axis, vals in zip(rate_table.axes, values):
        avail = set(rate_table.available_covariates(axis))
        for v in sorted(set(vals)):
            if v not in avail:
                raise UnknownCovariateError(axis, v, rate_table.available_covariates(axis))
    cache: dict[tuple, int] = {}
    idx = np.empty(cohort.n, dtype=np.int64)
    for i, key in enumerate(zip(*values) if values else [()] * cohort.n):
        if key not in cache:
            cache[key] = rate_table.index_of(*key)
        idx[i] = cache[key]
    idx.setflags(write=False)
    return AxisBinding(mapping, idx)
