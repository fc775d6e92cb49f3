"""Numba kernels for the hazard-path walk and the per-day estimator sums.

A life moves diagonally through a rate table: age and date both advance one
day per day. Its hazard is constant between cell boundaries, so every kernel
here walks boundary to boundary instead of sampling the table daily.

All kernels are ``nogil`` so that the Python side can fan chunks of patients
out to a thread pool; none of them allocate inside the patient loop.
"""

import math

import numpy as np
from numba import njit

YEAR = 365.241
INF = np.inf

# estimator modes for ``accumulate_at_risk``
WEIGHTED = 0  # inverse population survival weights (Pohar Perme, Graffeo)
UNWEIGHTED = 1  # plain at-risk sums (Ederer II)


@njit(cache=True, nogil=True)
def clf(x, m, M):
    y = x / YEAR
    if y < m:
        y = m
    if y > M:
        y = M
    return int(math.floor(y))


@njit(cache=True, nogil=True)
def _next_boundary(idx, top, origin):
    if idx >= top:
        return INF
    return (idx + 1) * YEAR - origin


@njit(cache=True, nogil=True)
def start_walk(age0, date0, m_a, M_a, m_d, M_d):
    """Initial (age index, date index, next age crossing, next date crossing)."""
    ai = clf(age0, m_a, M_a)
    di = clf(date0, m_d, M_d)
    ta = _next_boundary(ai, M_a, age0)
    td = _next_boundary(di, M_d, date0)
    # x / YEAR can round below an integral year; skip empty leading cells
    while ta <= 0.0:
        ai += 1
        ta = _next_boundary(ai, M_a, age0)
    while td <= 0.0:
        di += 1
        td = _next_boundary(di, M_d, date0)
    return ai, di, ta, td


@njit(cache=True, nogil=True)
def advance(ai, di, ta, td, age0, date0, M_a, M_d):
    """Cross the next breakpoint; coincident crossings move both indices."""
    t = min(ta, td)
    if ta <= t:
        ai += 1
        ta = _next_boundary(ai, M_a, age0)
    if td <= t:
        di += 1
        td = _next_boundary(di, M_d, date0)
    return ai, di, ta, td


@njit(cache=True, nogil=True)
def cumhaz_sorted(rates, m_a, M_a, m_d, M_d, age0, date0, times, out):
    """Exact cumulative hazard at each of the ascending ``times``."""
    ai, di, ta, td = start_walk(age0, date0, m_a, M_a, m_d, M_d)
    lam = 0.0
    cur = 0.0
    k = 0
    n = times.shape[0]
    while k < n:
        rate = rates[ai - m_a, di - m_d]
        seg_end = min(ta, td)
        while k < n and times[k] <= seg_end:
            out[k] = lam + rate * (times[k] - cur)
            k += 1
        if k == n:
            break
        lam += rate * (seg_end - cur)
        cur = seg_end
        ai, di, ta, td = advance(ai, di, ta, td, age0, date0, M_a, M_d)


@njit(cache=True, nogil=True)
def expectation(rates, m_a, M_a, m_d, M_d, age0, date0):
    """Mean lifetime in days; NaN when the terminal rate is zero."""
    ai, di, ta, td = start_walk(age0, date0, m_a, M_a, m_d, M_d)
    total = 0.0
    surv = 1.0
    cur = 0.0
    while True:
        rate = rates[ai - m_a, di - m_d]
        seg_end = min(ta, td)
        if seg_end == INF:
            if rate <= 0.0:
                return np.nan
            return total + surv / rate
        width = seg_end - cur
        if rate == 0.0:
            total += surv * width
        else:
            total += surv * -math.expm1(-width * rate) / rate
            surv *= math.exp(-width * rate)
        cur = seg_end
        ai, di, ta, td = advance(ai, di, ta, td, age0, date0, M_a, M_d)


@njit(cache=True, nogil=True)
def sample(rates, m_a, M_a, m_d, M_d, age0, date0, target):
    """Time at which the cumulative hazard reaches ``target`` (= -log u)."""
    ai, di, ta, td = start_walk(age0, date0, m_a, M_a, m_d, M_d)
    lam = 0.0
    cur = 0.0
    while True:
        rate = rates[ai - m_a, di - m_d]
        seg_end = min(ta, td)
        if seg_end == INF:
            if rate <= 0.0:
                return INF
            return cur + (target - lam) / rate
        step = rate * (seg_end - cur)
        if lam + step >= target and rate > 0.0:
            return cur + (target - lam) / rate
        lam += step
        cur = seg_end
        ai, di, ta, td = advance(ai, di, ta, td, age0, date0, M_a, M_d)


@njit(cache=True, nogil=True)
def daily_increments(rates, m_a, M_a, m_d, M_d, age0, date0, out):
    """Exact integral of the hazard over each day (s - 1, s], s = 1..len(out)."""
    ai, di, ta, td = start_walk(age0, date0, m_a, M_a, m_d, M_d)
    rate = rates[ai - m_a, di - m_d]
    seg_end = min(ta, td)
    for j in range(out.shape[0]):
        cur = float(j)
        day_end = cur + 1.0
        acc = 0.0
        while seg_end < day_end:
            acc += rate * (seg_end - cur)
            cur = seg_end
            ai, di, ta, td = advance(ai, di, ta, td, age0, date0, M_a, M_d)
            rate = rates[ai - m_a, di - m_d]
            seg_end = min(ta, td)
        acc += rate * (day_end - cur)
        out[j] = acc


@njit(cache=True, nogil=True)
def _kahan_add(acc, comp, k, j, x):
    y = x - comp[k, j]
    t = acc[k, j] + y
    comp[k, j] = (t - acc[k, j]) - y
    acc[k, j] = t


@njit(cache=True, nogil=True)
def accumulate_at_risk(
    rates3, m_a, M_a, m_d, M_d,
    age0, date0, table, cell, last_day, event_day, mode,
    at_risk, at_risk_c, pop, pop_c, ev, ev_c, ev2, ev2_c,
):
    """Per-day sums over the at-risk days of each patient in one chunk.

    For each patient i and day s <= last_day[i], with w = 1 / S_P(s-) in
    WEIGHTED mode and w = 1 otherwise::

        at_risk[cell, s] += w
        pop[cell, s]     += w * dLambda_P(s)
        ev[cell, s]      += w        (only on event_day)
        ev2[cell, s]     += w * w    (only on event_day)

    Each accumulator carries a Kahan compensation array.
    """
    for i in range(age0.shape[0]):
        rates = rates3[table[i]]
        a0 = age0[i]
        d0 = date0[i]
        k = cell[i]
        ndays = last_day[i]
        eday = event_day[i]
        ai, di, ta, td = start_walk(a0, d0, m_a, M_a, m_d, M_d)
        rate = rates[ai - m_a, di - m_d]
        seg_end = min(ta, td)
        lam = 0.0
        for j in range(ndays):
            cur = float(j)
            day_end = cur + 1.0
            dl = 0.0
            while seg_end < day_end:
                dl += rate * (seg_end - cur)
                cur = seg_end
                ai, di, ta, td = advance(ai, di, ta, td, a0, d0, M_a, M_d)
                rate = rates[ai - m_a, di - m_d]
                seg_end = min(ta, td)
            dl += rate * (day_end - cur)
            if mode == WEIGHTED:
                w = math.exp(lam)
            else:
                w = 1.0
            _kahan_add(at_risk, at_risk_c, k, j, w)
            _kahan_add(pop, pop_c, k, j, w * dl)
            if j + 1 == eday:
                _kahan_add(ev, ev_c, k, j, w)
                _kahan_add(ev2, ev2_c, k, j, w * w)
            lam += dl


@njit(cache=True, nogil=True)
def accumulate_fixed_cohort(
    rates3, m_a, M_a, m_d, M_d,
    age0, date0, table, cell, ndays,
    surv, surv_c, pop, pop_c,
):
    """Ederer I population sums: every patient, every day up to ``ndays``.

    surv[cell, s] += S_P(s-) and pop[cell, s] += S_P(s-) * dLambda_P(s).
    """
    for i in range(age0.shape[0]):
        rates = rates3[table[i]]
        a0 = age0[i]
        d0 = date0[i]
        k = cell[i]
        ai, di, ta, td = start_walk(a0, d0, m_a, M_a, m_d, M_d)
        rate = rates[ai - m_a, di - m_d]
        seg_end = min(ta, td)
        lam = 0.0
        for j in range(ndays):
            cur = float(j)
            day_end = cur + 1.0
            dl = 0.0
            while seg_end < day_end:
                dl += rate * (seg_end - cur)
                cur = seg_end
                ai, di, ta, td = advance(ai, di, ta, td, a0, d0, M_a, M_d)
                rate = rates[ai - m_a, di - m_d]
                seg_end = min(ta, td)
            dl += rate * (day_end - cur)
            s = math.exp(-lam)
            _kahan_add(surv, surv_c, k, j, s)
            _kahan_add(pop, pop_c, k, j, s * dl)
            lam += dl


@njit(cache=True, nogil=True)
def survival_at(rates3, m_a, M_a, m_d, M_d, age0, date0, table, times, out):
    """out[i, k] = S_P_i(times[k]) for ascending ``times``."""
    buf = np.empty(times.shape[0])
    for i in range(age0.shape[0]):
        cumhaz_sorted(rates3[table[i]], m_a, M_a, m_d, M_d, age0[i], date0[i], times, buf)
        for k in range(times.shape[0]):
            out[i, k] = math.exp(-buf[k])


@njit(cache=True, nogil=True)
def expectations(rates3, m_a, M_a, m_d, M_d, age0, date0, table, out):
    for i in range(age0.shape[0]):
        out[i] = expectation(rates3[table[i]], m_a, M_a, m_d, M_d, age0[i], date0[i])
