"""Kaplan-Meier and the non-parametric net survival estimators.

Everything is evaluated on a daily grid ``s = 1..t_max``. Day ``s`` covers the
interval ``(s - 1, s]``: an event at time ``T`` counts on day ``ceil(T)``, and
a patient is at risk on day ``s`` while ``T > s - 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Iterator, Mapping

import numpy as np

from . import _kernels as K
from ._parallel import kahan_fold, run_chunks
from .cohort import AxisBinding, Cohort, FormulaSpec, bind_axes, parse_formula
from .errors import EmptyGroupError, ValidationError
from .ratetable import RateTable

__all__ = [
    "Method",
    "DailyGrid",
    "SurvivalFit",
    "NetSurvivalFit",
    "PopulationTerms",
    "counting_increments",
    "kaplan_meier",
    "population_terms",
    "fit_net_survival",
    "confint",
    "product_limit",
]


class Method(enum.Enum):
    PoharPerme = "pohar-perme"
    EdererI = "ederer1"
    EdererII = "ederer2"

    @classmethod
    def parse(cls, value) -> Method:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for m in cls:
            if key in (m.value, m.name.lower()):
                return m
        raise ValidationError(
            f"unknown method {value!r}; expected one of {{{', '.join(m.value for m in cls)}}}"
        )


@dataclass(frozen=True)
class DailyGrid:
    t_max: int

    def __post_init__(self):
        if int(self.t_max) != self.t_max or self.t_max < 1:
            raise ValidationError(f"grid t_max must be an integer >= 1, got {self.t_max!r}")
        object.__setattr__(self, "t_max", int(self.t_max))

    @classmethod
    def from_times(cls, times) -> DailyGrid:
        return cls(max(1, int(math.ceil(float(np.max(times))))) if len(times) else 1)

    @property
    def days(self) -> np.ndarray:
        return np.arange(1, self.t_max + 1)

    def __len__(self):
        return self.t_max


def product_limit(increments: np.ndarray) -> np.ndarray:
    """S(s) = prod_{u <= s} (1 - dLambda(u))."""
    return np.cumprod(1.0 - increments)


def _day_indices(time, status, t_max):
    """Per patient: number of at-risk grid days and event day (0 = none)."""
    last = np.ceil(time).astype(np.int64)
    # a death at exactly t = 0 is booked on day 1
    last[(last == 0) & (status == 1)] = 1
    event = np.where((status == 1) & (last <= t_max), last, 0)
    return np.minimum(last, t_max), event


def _counts(last, event, codes, n_groups, t_max):
    """dN and Y per group and day, as exact int64 counts, shape (G, t_max)."""
    dn = np.zeros(n_groups * (t_max + 1), dtype=np.int64)
    has = event > 0
    np.add.at(dn, codes[has] * (t_max + 1) + event[has], 1)
    ends = np.zeros(n_groups * (t_max + 1), dtype=np.int64)
    np.add.at(ends, codes * (t_max + 1) + last, 1)
    dn = dn.reshape(n_groups, t_max + 1)[:, 1:]
    ends = ends.reshape(n_groups, t_max + 1)
    # Y(s) = #{last >= s}
    y = np.cumsum(ends[:, ::-1], axis=1)[:, ::-1][:, 1:]
    return dn, y


def counting_increments(cohort: Cohort, grid: DailyGrid | None = None, formula=None):
    """Daily event counts dN(s) and at-risk counts Y(s) for the whole cohort."""
    time_col, status_col = _surv_cols(formula)
    time, status = cohort.surv(time_col, status_col)
    grid = grid or DailyGrid.from_times(time)
    last, event = _day_indices(time, status, grid.t_max)
    dn, y = _counts(last, event, np.zeros(cohort.n, np.int64), 1, grid.t_max)
    return dn[0], y[0]


def _surv_cols(formula):
    if formula is None:
        return None, None
    spec = parse_formula(formula) if isinstance(formula, str) else formula
    return spec.time_col, spec.status_col


def _safe_ratio(num, den):
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


@dataclass(frozen=True, eq=False)
class SurvivalFit:
    """Kaplan-Meier fit with Greenwood variance on a daily grid."""

    grid: DailyGrid
    dLambda_O: np.ndarray
    var_cum: np.ndarray
    S_O: np.ndarray
    n_events: np.ndarray = field(repr=False)
    n_at_risk: np.ndarray = field(repr=False)
    group_label: tuple = ()

    @classmethod
    def from_counts(cls, grid, dn, y, group_label=()) -> SurvivalFit:
        dn = np.asarray(dn, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        dlam = _safe_ratio(dn, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            # Y == dN > 0 makes the Greenwood term infinite, as it should
            gw = np.where(dn > 0, dn / (y * (y - dn)), 0.0)
        return cls(grid, dlam, np.cumsum(gw), product_limit(dlam), dn, y, group_label)


def kaplan_meier(cohort: Cohort, grid: DailyGrid | None = None, formula=None) -> SurvivalFit:
    """Product-limit estimate of overall survival with Greenwood variance."""
    dn, y = counting_increments(cohort, grid, formula)
    grid = grid or DailyGrid(len(dn))
    return SurvivalFit.from_counts(grid, dn, y)


@dataclass(frozen=True, eq=False)
class NetSurvivalFit:
    """Net survival on a daily grid for one group.

    ``dLambda_E[s-1]`` is the excess hazard increment of day ``s`` (negative
    values are kept), ``var_cum`` the cumulative variance of the cumulative
    excess hazard, and ``S_E`` the product-limit net survival curve.
    """

    grid: DailyGrid
    dLambda_E: np.ndarray
    var_cum: np.ndarray
    S_E: np.ndarray
    method: Method
    group_label: tuple = ()
    group_cols: tuple = ()
    n_events: np.ndarray = field(default=None, repr=False)
    n_at_risk: np.ndarray = field(default=None, repr=False)

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.var_cum)

    def confint(self, level: float = 0.05):
        return confint(self, level)

    def kaplan_meier(self) -> SurvivalFit:
        """Overall survival of the same patients, rebuilt from the stored counts."""
        return SurvivalFit.from_counts(self.grid, self.n_events, self.n_at_risk, self.group_label)


def confint(fit: NetSurvivalFit, level: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise delta-method interval for ``S_E`` at error level ``level``.

    With Lambda = -log S_E and z the standard normal quantile at
    ``1 - level / 2``: lower = exp(-(Lambda + z sigma)),
    upper = exp(-(Lambda - z sigma)). Bounds are not clipped to [0, 1].
    """
    if not 0.0 < level < 1.0:
        raise ValidationError(f"level must lie in (0, 1), got {level!r}")
    z = NormalDist().inv_cdf(1.0 - level / 2.0)
    zs = z * fit.sigma
    return fit.S_E * np.exp(-zs), fit.S_E * np.exp(zs)


# --------------------------------------------------------------------------
# preparation shared by the estimators, the Graffeo test and nessie


@dataclass(frozen=True, eq=False)
class _Prepared:
    spec: FormulaSpec
    binding: AxisBinding
    rate_table: RateTable
    grid: DailyGrid
    age0: np.ndarray
    date0: np.ndarray
    time: np.ndarray
    status: np.ndarray
    last: np.ndarray
    event: np.ndarray
    labels: list
    codes: np.ndarray

    def kernel_bounds(self):
        return (self.rate_table.stacked_rates, *self.rate_table.bounds)


def _prepare(cohort, rate_table, formula, binding, grid, group_cols=None) -> _Prepared:
    spec = parse_formula(formula) if isinstance(formula, str) else formula
    if spec is None:
        spec = FormulaSpec(cohort.time_col, cohort.status_col)
    spec.check(cohort)
    if cohort.n == 0:
        raise EmptyGroupError("the cohort has no patients")
    if not isinstance(binding, AxisBinding):
        binding = bind_axes(cohort, rate_table, binding)
    time, status = cohort.surv(spec.time_col, spec.status_col)
    grid = grid if grid is not None else DailyGrid.from_times(time)
    if not isinstance(grid, DailyGrid):
        grid = DailyGrid(grid)
    last, event = _day_indices(time, status, grid.t_max)
    cols = spec.group_cols + spec.strata_cols if group_cols is None else group_cols
    labels, codes = cohort.groups(cols)
    return _Prepared(
        spec, binding, rate_table, grid,
        np.ascontiguousarray(cohort.age), np.ascontiguousarray(cohort.date),
        time, status, last, event, labels, codes,
    )


def _accumulate_at_risk(p: _Prepared, cells, n_cells, weighted, threads):
    """Per-cell, per-day (at_risk, pop, ev, ev2) sums, each shape (n_cells, t_max)."""
    t_max = p.grid.t_max
    mode = K.WEIGHTED if weighted else K.UNWEIGHTED
    tab = p.binding.table_index
    args = p.kernel_bounds()

    def work(sl):
        bufs = [np.zeros((n_cells, t_max)) for _ in range(8)]
        K.accumulate_at_risk(
            *args, p.age0[sl], p.date0[sl], tab[sl], cells[sl],
            p.last[sl], p.event[sl], mode, *bufs,
        )
        return bufs

    parts = run_chunks(work, len(cells), threads)
    return tuple(kahan_fold([(b[2 * k], b[2 * k + 1]) for b in parts]) for k in range(4))


def _accumulate_fixed(p: _Prepared, cells, n_cells, threads):
    t_max = p.grid.t_max
    tab = p.binding.table_index
    args = p.kernel_bounds()

    def work(sl):
        bufs = [np.zeros((n_cells, t_max)) for _ in range(4)]
        K.accumulate_fixed_cohort(
            *args, p.age0[sl], p.date0[sl], tab[sl], cells[sl], t_max, *bufs,
        )
        return bufs

    parts = run_chunks(work, len(cells), threads)
    return tuple(kahan_fold([(b[2 * k], b[2 * k + 1]) for b in parts]) for k in range(2))


def fit_net_survival(
    cohort: Cohort,
    rate_table: RateTable,
    method="pohar-perme",
    formula="Surv(time, status) ~ 1",
    *,
    binding: Mapping[str, str] | AxisBinding | None = None,
    grid: DailyGrid | int | None = None,
    threads: int | None = None,
) -> list[NetSurvivalFit]:
    """Fit one net survival curve per group.

    Groups are the observed level combinations of the formula's grouping and
    ``Strata()`` columns; ``~ 1`` gives one curve. ``method`` is one of
    ``pohar-perme``, ``ederer1`` or ``ederer2``.
    """
    method = Method.parse(method)
    p = _prepare(cohort, rate_table, formula, binding, grid)
    n_groups, t_max = len(p.labels), p.grid.t_max
    dn, y = _counts(p.last, p.event, p.codes, n_groups, t_max)
    for g, label in enumerate(p.labels):
        if y[g].sum() == 0:
            raise EmptyGroupError(f"group {label} has no patient at risk on the grid")
    dn_f, y_f = dn.astype(np.float64), y.astype(np.float64)

    if method is Method.PoharPerme:
        w_at_risk, w_pop, w_ev, w_ev2 = _accumulate_at_risk(p, p.codes, n_groups, True, threads)
        dlam = _safe_ratio(w_ev - w_pop, w_at_risk)
        dvar = _safe_ratio(w_ev2, w_at_risk**2)
    elif method is Method.EdererII:
        _, pop, _, _ = _accumulate_at_risk(p, p.codes, n_groups, False, threads)
        dlam = _safe_ratio(dn_f, y_f) - _safe_ratio(pop, y_f)
        dvar = _safe_ratio(dn_f, y_f**2)
    else:
        s_sum, s_pop = _accumulate_fixed(p, p.codes, n_groups, threads)
        dlam = _safe_ratio(dn_f, y_f) - _safe_ratio(s_pop, s_sum)
        dvar = _safe_ratio(dn_f, y_f**2)

    cols = p.spec.group_cols + p.spec.strata_cols
    return [
        NetSurvivalFit(
            p.grid, dlam[g], np.cumsum(dvar[g]), product_limit(dlam[g]), method,
            p.labels[g], cols, dn_f[g], y_f[g],
        )
        for g in range(n_groups)
    ]


# --------------------------------------------------------------------------
# per-patient population terms


class PopulationTerms:
    """Lazy per-patient ``(S_P(s-), dLambda_P(s))`` on a daily grid.

    Rows are computed on demand; :meth:`dense` materialises the full
    ``n x t_max`` matrices only when they fit within ``max_cells``.
    """

    DEFAULT_MAX_CELLS = 20_000_000

    def __init__(self, p: _Prepared, max_cells: int = DEFAULT_MAX_CELLS):
        self._p = p
        self.max_cells = max_cells
        self.n = len(p.age0)
        self.grid = p.grid

    def __len__(self):
        return self.n

    def __getitem__(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        p = self._p
        rates3, m_a, M_a, m_d, M_d = p.kernel_bounds()
        dl = np.empty(p.grid.t_max)
        K.daily_increments(
            rates3[p.binding.table_index[i]], m_a, M_a, m_d, M_d,
            float(p.age0[i]), float(p.date0[i]), dl,
        )
        lam_before = np.concatenate(([0.0], np.cumsum(dl)[:-1]))
        return np.exp(-lam_before), dl

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for i in range(self.n):
            yield self[i]

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        cells = self.n * self.grid.t_max
        if cells > self.max_cells:
            raise ValidationError(
                f"{self.n} x {self.grid.t_max} = {cells} cells exceeds the budget of "
                f"{self.max_cells}; iterate over the patients instead"
            )
        S = np.empty((self.n, self.grid.t_max))
        D = np.empty_like(S)
        for i in range(self.n):
            S[i], D[i] = self[i]
        return S, D


def population_terms(
    cohort: Cohort,
    rate_table: RateTable,
    binding=None,
    grid: DailyGrid | int | None = None,
    formula=None,
    max_cells: int = PopulationTerms.DEFAULT_MAX_CELLS,
) -> PopulationTerms:
    return PopulationTerms(_prepare(cohort, rate_table, formula, binding, grid, ()), max_cells)
