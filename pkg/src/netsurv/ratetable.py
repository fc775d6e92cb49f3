"""Population mortality rate tables and the lives that follow them.

A :class:`BasicRateTable` is a dense matrix of daily hazards indexed by integer
age-year (rows) and calendar year (columns). Ages and dates are passed in
days, with years of exactly ``YEAR = 365.241`` days. Out-of-range queries are
clamped to the border rows/columns, so the terminal cell's rate applies for
ever.

A :class:`RateTable` keys several basic tables by covariates such as country
and sex. A :class:`Life` is the population lifetime of one individual: a basic
table plus a starting age and date.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels as K
from .errors import (
    ArityError,
    DivergentExpectationError,
    DomainError,
    FileFormatError,
    UnknownCovariateError,
    UnsupportedAxisError,
    ValidationError,
)

YEAR = K.YEAR

__all__ = [
    "YEAR",
    "clf",
    "BasicRateTable",
    "RateTable",
    "Life",
    "daily_hazard",
    "cumulative_hazard",
    "survival",
    "expectation",
    "sample",
    "from_annual_probabilities",
    "to_annual_probabilities",
    "read_ratetable",
    "write_ratetable",
    "load_hmd_csv",
    "demo_ratetable",
]


def clf(x: float, m: int, M: int) -> int:
    """Clamp ``x`` days between ``m`` and ``M`` years and floor to a year.

    >>> clf(20 * 365.241, 0, 110)
    20
    >>> clf(200 * 365.241, 0, 110)
    110
    """
    return int(math.floor(min(max(x / YEAR, m), M)))


@dataclass(frozen=True, eq=False)
class BasicRateTable:
    """Daily hazards on a yearly (age, date) lattice.

    ``rates[a - m_a, d - m_d]`` is the hazard per day for age-year ``a`` in
    calendar year ``d``; both bounds are inclusive.
    """

    rates: np.ndarray
    m_a: int
    M_a: int
    m_d: int
    M_d: int

    def __post_init__(self):
        rates = np.array(self.rates, dtype=np.float64, order="C", copy=True)
        m_a, M_a, m_d, M_d = (int(v) for v in (self.m_a, self.M_a, self.m_d, self.M_d))
        if not (m_a < M_a and m_d < M_d):
            raise ValidationError(
                f"need m_a < M_a and m_d < M_d, got ages {m_a}..{M_a}, dates {m_d}..{M_d}"
            )
        shape = (M_a - m_a + 1, M_d - m_d + 1)
        if rates.shape != shape:
            raise ValidationError(f"rate matrix has shape {rates.shape}, expected {shape}")
        bad = ~np.isfinite(rates) | (rates < 0)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise DomainError(
                f"rate at age {m_a + r}, date {m_d + c} is {rates[r, c]!r}; "
                "rates must be finite and non-negative"
            )
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        for name, v in zip(("m_a", "M_a", "m_d", "M_d"), (m_a, M_a, m_d, M_d)):
            object.__setattr__(self, name, v)

    @property
    def bounds(self) -> tuple[int, int, int, int]:
        return self.m_a, self.M_a, self.m_d, self.M_d

    def daily_hazard(self, age, date):
        """Hazard per day at ``age`` and ``date`` (both in days).

        Accepts scalars or broadcastable arrays.
        """
        if np.ndim(age) == 0 and np.ndim(date) == 0:
            return float(
                self.rates[clf(age, self.m_a, self.M_a) - self.m_a,
                           clf(date, self.m_d, self.M_d) - self.m_d]
            )
        a = np.floor(np.clip(np.asarray(age, float) / YEAR, self.m_a, self.M_a)).astype(np.int64)
        d = np.floor(np.clip(np.asarray(date, float) / YEAR, self.m_d, self.M_d)).astype(np.int64)
        return self.rates[a - self.m_a, d - self.m_d]

    def life(self, age0: float, date0: float) -> Life:
        return Life(self, age0, date0)

    def __repr__(self):
        return (
            "BasicRateTable:\n"
            f"ages, in years from {self.m_a} to {self.M_a} "
            f"(in days from {self.m_a * YEAR} to {self.M_a * YEAR})\n"
            f"date, in years from {self.m_d} to {self.M_d} "
            f"(in days from {self.m_d * YEAR} to {self.M_d * YEAR})"
        )


def from_annual_probabilities(q, m_a: int, M_a: int, m_d: int, M_d: int) -> BasicRateTable:
    """Build a table from yearly death probabilities, assuming the hazard is
    constant within each year: ``rate = -log(1 - q) / 365.241``."""
    q = np.asarray(q, dtype=np.float64)
    bad = ~np.isfinite(q) | (q < 0) | (q >= 1)
    if bad.any():
        r, c = np.argwhere(bad)[0] if q.ndim == 2 else (0, 0)
        raise DomainError(
            f"annual probability at age {m_a + r}, date {m_d + c} is {q[r, c]!r}; "
            "must lie in [0, 1)"
        )
    return BasicRateTable(-np.log(1.0 - q) / YEAR, m_a, M_a, m_d, M_d)


def to_annual_probabilities(table: BasicRateTable) -> np.ndarray:
    return -np.expm1(-YEAR * table.rates)


class RateTable:
    """Covariate-keyed collection of :class:`BasicRateTable` sharing one lattice.

    >>> rt = demo_ratetable()
    >>> rt
    RateTable(:sex)
    >>> rt.available_covariates("sex")
    ('female', 'male')
    """

    def __init__(self, axes: Sequence[str], tables: Mapping[tuple, BasicRateTable]):
        self.axes = tuple(axes)
        if not tables:
            raise ValidationError("a rate table needs at least one basic table")
        self._tables: dict[tuple, BasicRateTable] = {}
        for key, table in tables.items():
            key = key if isinstance(key, tuple) else (key,)
            if len(key) != len(self.axes):
                raise ArityError(
                    f"key {key!r} has {len(key)} values but the table has axes {self.axes}"
                )
            self._tables[tuple(str(k) for k in key)] = table
        bounds = {t.bounds for t in self._tables.values()}
        if len(bounds) != 1:
            raise ValidationError(f"basic tables disagree on bounds: {sorted(bounds)}")
        (self.bounds,) = bounds
        self._keys = tuple(sorted(self._tables))
        self._index = {key: i for i, key in enumerate(self._keys)}
        stacked = np.stack([self._tables[k].rates for k in self._keys])
        stacked.setflags(write=False)
        self._stacked = stacked

    @classmethod
    def single(cls, table: BasicRateTable) -> RateTable:
        """Wrap one basic table as a covariate-free rate table."""
        return cls((), {(): table})

    def __repr__(self):
        return "RateTable(" + ",".join(f":{a}" for a in self.axes) + ")"

    def __len__(self):
        return len(self._keys)

    def keys(self):
        return self._keys

    def available_covariates(self, axis: str) -> tuple[str, ...]:
        if axis not in self.axes:
            raise UnknownCovariateError("axis", axis, self.axes)
        j = self.axes.index(axis)
        return tuple(sorted({k[j] for k in self._keys}))

    def _key(self, values) -> tuple[str, ...]:
        values = tuple(str(v) for v in values)
        if len(values) != len(self.axes):
            raise ArityError(
                f"expected {len(self.axes)} covariate value(s) for axes {self.axes}, "
                f"got {len(values)}"
            )
        if values not in self._index:
            for axis, v in zip(self.axes, values):
                avail = self.available_covariates(axis)
                if v not in avail:
                    raise UnknownCovariateError(axis, v, avail)
            raise UnknownCovariateError(self.axes, values, self._keys)
        return values

    def __getitem__(self, key) -> BasicRateTable:
        key = key if isinstance(key, tuple) else (key,)
        return self._tables[self._key(key)]

    def index_of(self, *values) -> int:
        """Position of a covariate combination in :attr:`stacked_rates`."""
        return self._index[self._key(values)]

    @property
    def stacked_rates(self) -> np.ndarray:
        """All rate matrices as one read-only ``(n_tables, ages, dates)`` array."""
        return self._stacked

    def daily_hazard(self, age, date, *covariates):
        return self[covariates].daily_hazard(age, date)


def daily_hazard(rt, age, date, *covariates):
    """Daily hazard for a :class:`RateTable` or :class:`BasicRateTable`.

    Covariate values are matched in axis order.
    """
    if isinstance(rt, BasicRateTable):
        if covariates:
            raise ArityError("a BasicRateTable takes no covariate values")
        return rt.daily_hazard(age, date)
    return rt.daily_hazard(age, date, *covariates)


@dataclass(frozen=True)
class Life:
    """Population lifetime of one individual, time measured in days."""

    table: BasicRateTable
    age0: float
    date0: float
    _args: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.age0) and self.age0 >= 0):
            raise DomainError(f"starting age must be finite and >= 0, got {self.age0!r}")
        if not math.isfinite(self.date0):
            raise DomainError(f"starting date must be finite, got {self.date0!r}")
        t = self.table
        object.__setattr__(
            self, "_args",
            (t.rates, t.m_a, t.M_a, t.m_d, t.M_d, float(self.age0), float(self.date0)),
        )

    def hazard(self, t: float) -> float:
        return self.table.daily_hazard(self.age0 + t, self.date0 + t)

    def cumulative_hazard(self, t):
        """Exact integral of the hazard over ``[0, t]``; scalar or array ``t``."""
        ts = np.asarray(t, dtype=np.float64)
        if np.any(ts < 0) or np.any(np.isnan(ts)):
            raise DomainError("times must be >= 0")
        flat = ts.ravel()
        order = np.argsort(flat, kind="stable")
        out = np.empty_like(flat)
        K.cumhaz_sorted(*self._args, flat[order], out)
        res = np.empty_like(flat)
        res[order] = out
        return float(res[0]) if ts.ndim == 0 else res.reshape(ts.shape)

    def survival(self, t):
        return np.exp(-self.cumulative_hazard(t))

    def expectation(self) -> float:
        """Mean remaining lifetime in days, summed cell by cell."""
        e = K.expectation(*self._args)
        if math.isnan(e):
            raise DivergentExpectationError(
                "the terminal rate-table cell has a zero rate; the expectation diverges"
            )
        return e

    def sample(self, u: float) -> float:
        """Inverse-transform draw: the t with survival(t) == u."""
        if not 0.0 < u < 1.0:
            raise DomainError(f"u must lie in (0, 1), got {u!r}")
        return K.sample(*self._args, -math.log(u))

    def rand(self, rng: np.random.Generator, size: int | None = None):
        if size is None:
            return self.sample(1.0 - rng.random())
        u = 1.0 - rng.random(size)
        return np.array([K.sample(*self._args, -math.log(x)) for x in u])


def cumulative_hazard(life: Life, t):
    return life.cumulative_hazard(t)


def survival(life: Life, t):
    return life.survival(t)


def expectation(life: Life) -> float:
    return life.expectation()


def sample(life: Life, u: float) -> float:
    return life.sample(u)


# --------------------------------------------------------------------------
# file formats

FORMAT_MAGIC = "# netsurv-ratetable"
FORMAT_VERSION = 1


def write_ratetable(rt: RateTable, path, values: str = "rates") -> None:
    """Write ``rt`` in the versioned long-format text layout.

    ``values="annual_q"`` stores yearly death probabilities instead of rates.
    """
    if values not in ("rates", "annual_q"):
        raise ValidationError(f"values must be 'rates' or 'annual_q', got {values!r}")
    m_a, M_a, m_d, M_d = rt.bounds
    lines = [
        f"{FORMAT_MAGIC} {FORMAT_VERSION}",
        f"axes: {','.join(rt.axes)}",
    ]
    for axis in rt.axes:
        lines.append(f"{axis}: {','.join(rt.available_covariates(axis))}")
    lines += [
        f"bounds: {m_a} {M_a} {m_d} {M_d}",
        "step: 1 1",
        f"values: {values}",
        "data:",
    ]
    buf = io.StringIO()
    buf.write("\n".join(lines) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*rt.axes, "age", "date", "value"])
    for key in rt.keys():
        table = rt[key]
        mat = table.rates if values == "rates" else to_annual_probabilities(table)
        for r in range(M_a - m_a + 1):
            for c in range(M_d - m_d + 1):
                w.writerow([*key, m_a + r, m_d + c, repr(float(mat[r, c]))])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _parse_header(lines: Iterable[str], path) -> tuple[dict, int]:
    header: dict[str, str] = {}
    for n, raw in enumerate(lines, 1):
        line = raw.strip()
        if n == 1:
            if not line.startswith(FORMAT_MAGIC):
                raise FileFormatError(f"{path}: missing '{FORMAT_MAGIC} <version>' line")
            version = line[len(FORMAT_MAGIC):].strip()
            if version != str(FORMAT_VERSION):
                raise FileFormatError(f"{path}: unsupported format version {version!r}")
            continue
        if not line or line.startswith("#"):
            continue
        if line == "data:":
            return header, n
        key, sep, value = line.partition(":")
        if not sep:
            raise FileFormatError(f"{path}:{n}: expected 'key: value', got {line!r}")
        header[key.strip()] = value.strip()
    raise FileFormatError(f"{path}: no 'data:' section")


def read_ratetable(path) -> RateTable:
    """Load a rate table written by :func:`write_ratetable`."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    header, n_header = _parse_header(lines, path)
    for key in ("axes", "bounds", "values"):
        if key not in header:
            raise FileFormatError(f"{path}: header is missing '{key}'")
    axes = tuple(a.strip() for a in header["axes"].split(",") if a.strip())
    levels = {}
    for axis in axes:
        if axis not in header:
            raise FileFormatError(f"{path}: header lists axis {axis!r} but not its values")
        levels[axis] = tuple(v.strip() for v in header[axis].split(","))
    try:
        m_a, M_a, m_d, M_d = (int(v) for v in header["bounds"].split())
    except ValueError:
        raise FileFormatError(f"{path}: bounds must be four integers 'm_a M_a m_d M_d'") from None
    step = header.get("step", "1 1").split()
    if step != ["1", "1"]:
        raise UnsupportedAxisError(
            f"{path}: only yearly axes are supported (step '1 1'), got {header['step']!r}"
        )
    kind = header["values"]
    if kind not in ("rates", "annual_q"):
        raise FileFormatError(f"{path}: values must be 'rates' or 'annual_q', got {kind!r}")

    reader = csv.reader(lines[n_header:])
    columns = next(reader, None)
    expected = [*axes, "age", "date", "value"]
    if columns != expected:
        raise FileFormatError(f"{path}: data columns {columns} != {expected}")
    shape = (M_a - m_a + 1, M_d - m_d + 1)
    mats: dict[tuple, np.ndarray] = {}
    for lineno, row in enumerate(reader, n_header + 2):
        if not row:
            continue
        if len(row) != len(expected):
            raise FileFormatError(f"{path}:{lineno}: expected {len(expected)} fields")
        key = tuple(row[: len(axes)])
        for axis, v in zip(axes, key):
            if v not in levels[axis]:
                raise FileFormatError(f"{path}:{lineno}: value {v!r} not listed for axis {axis!r}")
        try:
            a, d, value = int(row[-3]), int(row[-2]), float(row[-1])
        except ValueError:
            raise FileFormatError(f"{path}:{lineno}: malformed number in {row}") from None
        if not (m_a <= a <= M_a and m_d <= d <= M_d):
            raise FileFormatError(f"{path}:{lineno}: age {a} / date {d} outside bounds")
        mat = mats.setdefault(key, np.full(shape, np.nan))
        if not np.isnan(mat[a - m_a, d - m_d]):
            raise FileFormatError(f"{path}:{lineno}: duplicate cell {key} age {a} date {d}")
        mat[a - m_a, d - m_d] = value
    tables = {}
    for key, mat in mats.items():
        if np.isnan(mat).any():
            r, c = np.argwhere(np.isnan(mat))[0]
            raise FileFormatError(f"{path}: missing cell {key} age {m_a + r} date {m_d + c}")
        if kind == "annual_q":
            tables[key] = from_annual_probabilities(mat, m_a, M_a, m_d, M_d)
        else:
            tables[key] = BasicRateTable(mat, m_a, M_a, m_d, M_d)
    return RateTable(axes, tables)


def _parse_age(text: str) -> int:
    return int(text.strip().rstrip("+"))


def load_hmd_csv(path, country: str | None = None) -> RateTable:
    """Load a long-format CSV export of HMD-style period life tables.

    Required columns are ``Year``, ``Age`` (``"110+"`` is accepted) and the
    death probabilities, given either as a ``Sex`` column plus ``qx``, or as
    one ``qx`` column per sex named ``qx_<sex>`` (e.g. ``qx_female``). An
    optional ``Country`` column adds a ``country`` axis; otherwise ``country``
    (when given) is used as its single value.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise FileFormatError(f"{path}: no data rows")
    cols = list(rows[0])
    for needed in ("Year", "Age"):
        if needed not in cols:
            raise FileFormatError(f"{path}: missing column {needed!r}; have {cols}")
    if "Sex" in cols:
        if "qx" not in cols:
            raise FileFormatError(f"{path}: a 'Sex' column needs a 'qx' column")
        sexes = None
    else:
        sexes = [c[3:] for c in cols if c.startswith("qx_")]
        if not sexes:
            raise FileFormatError(f"{path}: expected 'Sex' + 'qx' or 'qx_<sex>' columns")

    cells: dict[tuple, dict[tuple[int, int], float]] = {}
    for row in rows:
        ctry = row["Country"].strip() if "Country" in row else country
        year, age = int(row["Year"]), _parse_age(row["Age"])
        pairs = [(row["Sex"].strip().lower(), row["qx"])] if sexes is None else [
            (s.lower(), row["qx_" + s]) for s in sexes
        ]
        for sex, q in pairs:
            key = (sex,) if ctry is None else (ctry, sex)
            cells.setdefault(key, {})[(age, year)] = float(q)

    ages = sorted({a for c in cells.values() for a, _ in c})
    years = sorted({y for c in cells.values() for _, y in c})
    m_a, M_a, m_d, M_d = ages[0], ages[-1], years[0], years[-1]
    tables = {}
    for key, c in cells.items():
        q = np.full((M_a - m_a + 1, M_d - m_d + 1), np.nan)
        for (a, y), v in c.items():
            q[a - m_a, y - m_d] = v
        if np.isnan(q).any():
            r, cc = np.argwhere(np.isnan(q))[0]
            raise FileFormatError(f"{path}: no qx for {key} age {m_a + r} year {m_d + cc}")
        # HMD reports q = 1 in the open age group; cap just below 1
        q = np.minimum(q, np.nextafter(1.0, 0.0))
        tables[key] = from_annual_probabilities(q, m_a, M_a, m_d, M_d)
    axes = ("sex",) if all(len(k) == 1 for k in tables) else ("country", "sex")
    return RateTable(axes, tables)


def demo_ratetable() -> RateTable:
    """Small synthetic Gompertz-Makeham table (ages 0-110, years 1950-2030).

    Shipped for smoke tests and benchmarks; it is not real population data.
    """
    ages = np.arange(0, 111, dtype=float)[:, None]
    years = np.arange(1950, 2031, dtype=float)[None, :]
    improvement = 0.99 ** (years - 1950)
    tables = {}
    for sex, scale in (("female", 0.6), ("male", 1.0)):
        annual = scale * (5e-4 + 2.5e-5 * np.exp(0.095 * ages)) * improvement
        tables[(sex,)] = BasicRateTable(annual / YEAR, 0, 110, 1950, 2030)
    return RateTable(("sex",), tables)
