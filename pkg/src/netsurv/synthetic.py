"""Synthetic cohorts drawn against a rate table, for tests and benchmarks."""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from .cohort import Cohort
from .ratetable import YEAR, RateTable, demo_ratetable


def synthetic_cohort(
    n: int,
    days: int,
    *,
    rate_table: RateTable | None = None,
    excess_rate: float = 1.5e-4,
    seed: int = 0,
) -> Cohort:
    """Patients aged 40-90 diagnosed in 1995-2005, followed up to ``days``.

    Observed death is the first of a population death (drawn from the rate
    table) and a constant-hazard excess death; censoring is uniform over
    ``[0, days]`` with administrative censoring at ``days``. One patient is
    censored exactly at ``days`` so the default grid spans the full window.
    """
    rng = np.random.default_rng(seed)
    rt = rate_table or demo_ratetable()
    if rt.axes != ("sex",):
        raise ValueError("synthetic cohorts need a rate table keyed by sex only")
    sexes = np.array(rt.available_covariates("sex"), dtype=object)
    sex = sexes[rng.integers(0, len(sexes), n)]
    age = rng.uniform(40, 90, n) * YEAR
    date = rng.uniform(1995, 2005, n) * YEAR
    rates3 = rt.stacked_rates
    bounds = rt.bounds
    pop = np.empty(n)
    for i in range(n):
        pop[i] = K.sample(rates3[rt.index_of(sex[i])], *bounds, age[i], date[i],
                          rng.exponential())
    excess = rng.exponential(1.0 / excess_rate, n)
    censor = np.minimum(rng.uniform(0, days * 1.5, n), days)
    death = np.minimum(pop, excess)
    time = np.ceil(np.minimum(death, censor))
    status = (death <= censor).astype(np.int64)
    time[0], status[0] = days, 0
    return Cohort({
        "time": time, "status": status, "age": age, "year": date, "sex": sex,
        "stage": rng.integers(1, 4, n),
    })
