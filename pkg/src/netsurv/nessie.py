"""Expected net sample size and expected remaining lifetime per group."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from ._parallel import run_chunks
from .errors import DivergentExpectationError, ValidationError
from .estimators import _prepare
from .ratetable import YEAR

__all__ = ["NessieResult", "nessie"]


@dataclass(frozen=True, eq=False)
class NessieResult:
    groups: list
    time_points: np.ndarray  # years
    elt: np.ndarray | None  # expected mean remaining lifetime per group, years
    ess: np.ndarray  # (len(time_points), len(groups))
    group_cols: tuple = ()


def nessie(
    cohort,
    rate_table,
    formula="Surv(time, status) ~ 1",
    *,
    binding=None,
    time_points=None,
    threads: int | None = None,
    lifetimes: bool = True,
) -> NessieResult:
    """Expected number of patients still alive under population mortality only.

    ``ess[t, g]`` is the sum over group ``g`` of each patient's population
    survival after ``time_points[t]`` years; ``elt[g]`` the group mean of
    each patient's population life expectancy, in years. Censoring is
    ignored. Time points default to whole years up to the longest follow-up.

    A table whose terminal cell has a zero rate makes ``elt`` diverge and
    raises; pass ``lifetimes=False`` to compute ``ess`` alone (``elt`` is
    then ``None``).
    """
    p = _prepare(cohort, rate_table, formula, binding, None)
    if time_points is None:
        time_points = np.arange(0, math.floor(p.time.max() / YEAR) + 1, dtype=float)
    time_points = np.asarray(time_points, dtype=float)
    if np.any(time_points < 0) or np.any(np.diff(time_points) < 0):
        raise ValidationError("time points must be sorted and >= 0")
    days = time_points * YEAR
    args = p.kernel_bounds()
    tab = p.binding.table_index

    def work(sl):
        surv = np.empty((sl.stop - sl.start, len(days)))
        life = np.zeros(sl.stop - sl.start)
        K.survival_at(*args, p.age0[sl], p.date0[sl], tab[sl], days, surv)
        if lifetimes:
            K.expectations(*args, p.age0[sl], p.date0[sl], tab[sl], life)
        return surv, life

    parts = run_chunks(work, cohort.n, threads)
    surv = np.concatenate([s for s, _ in parts])
    life = np.concatenate([e for _, e in parts])
    if np.isnan(life).any():
        i = int(np.flatnonzero(np.isnan(life))[0])
        raise DivergentExpectationError(
            f"patient {i}: the terminal rate-table cell has a zero rate; "
            "the expected lifetime diverges"
        )

    n_g = len(p.labels)
    ess = np.empty((len(days), n_g))
    elt = np.empty(n_g) if lifetimes else None
    for g in range(n_g):
        members = p.codes == g
        # fsum: correctly rounded, so sums do not depend on patient order
        ess[:, g] = [math.fsum(col) for col in surv[members].T]
        if lifetimes:
            elt[g] = math.fsum(life[members]) / members.sum() / YEAR
    return NessieResult(list(p.labels), time_points, elt, ess, p.spec.group_cols + p.spec.strata_cols)
