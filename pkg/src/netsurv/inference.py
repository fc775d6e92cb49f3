"""Log-rank-type test for equality of net survival across groups (Graffeo)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc

from .errors import ArityError, ValidationError
from .estimators import _accumulate_at_risk, _prepare

__all__ = ["GraffeoResult", "graffeo_test", "chisq_sf"]

COND_LIMIT = 1e12


def chisq_sf(x: float, dof: float) -> float:
    """Upper tail of the chi-square law: Q(dof / 2, x / 2)."""
    if dof < 1:
        raise ValidationError(f"dof must be >= 1, got {dof!r}")
    if x < 0:
        raise ValidationError(f"x must be >= 0, got {x!r}")
    return float(gammaincc(dof / 2.0, x / 2.0))


@dataclass(frozen=True, eq=False)
class GraffeoResult:
    statistic: float
    dof: int
    p_value: float
    per_group_Z: np.ndarray
    covariance: np.ndarray = field(repr=False)
    groups: list = field(default_factory=list)
    group_cols: tuple = ()
    strata_cols: tuple = ()
    warnings: tuple = ()


def _stratum_terms(at_risk, pop, ev, ev2):
    """Z vector and covariance contribution of one stratum; arrays are (G, T)."""
    dn_e = ev - pop
    total = at_risk.sum(axis=0)
    live = total > 0
    at_risk, dn_e, v = at_risk[:, live], dn_e[:, live], ev2[:, live]
    total = total[live]
    pooled = dn_e.sum(axis=0) / total
    R = at_risk / total
    z = (dn_e - at_risk * pooled).sum(axis=1)
    # sum_l (d_gl - R_g)(d_hl - R_h) V_l
    #   = d_gh V_g - R_h V_g - R_g V_h + R_g R_h sum_l V_l
    v_tot = v.sum(axis=0)
    cross = (R[:, None, :] * v[None, :, :]).sum(axis=-1)
    outer = (R[:, None, :] * R[None, :, :] * v_tot).sum(axis=-1)
    cov = np.diag(v.sum(axis=1)) - cross - cross.T + outer
    return z, cov


def _quadratic_form(z, cov):
    """z' cov^-1 z with a rank fallback; returns (statistic, dof, note)."""
    k = len(z)
    if k == 0:
        return 0.0, 0, None
    cond = np.linalg.cond(cov)
    if np.isfinite(cond) and cond <= COND_LIMIT:
        return float(z @ np.linalg.solve(cov, z)), k, None
    vals, vecs = np.linalg.eigh((cov + cov.T) / 2)
    keep = vals > max(vals.max(), 0.0) * (1.0 / COND_LIMIT)
    proj = vecs[:, keep].T @ z
    stat = float(np.sum(proj**2 / vals[keep]))
    return stat, int(keep.sum()), (
        f"reduced covariance is near-singular (condition {cond:.3g}); "
        f"used a pseudo-inverse of rank {int(keep.sum())}"
    )


def graffeo_test(
    cohort,
    rate_table,
    formula,
    *,
    binding=None,
    grid=None,
    threads: int | None = None,
) -> GraffeoResult:
    """Test H0: equal cumulative excess hazards across the formula's groups.

    ``Strata()`` terms allow heterogeneity between strata: the per-group
    statistics and their covariance are summed over strata before the
    quadratic form is taken. The last group (label order) is dropped to
    invert the covariance; the statistic is chi-square with k - 1 dof.
    """
    p = _prepare(cohort, rate_table, formula, binding, grid, ())
    spec = p.spec
    if not spec.group_cols:
        raise ArityError("the Graffeo test needs at least one grouping column")
    groups, gcode = cohort.groups(spec.group_cols)
    strata, scode = cohort.groups(spec.strata_cols)
    n_g, n_s = len(groups), len(strata)
    if n_g < 2:
        raise ArityError(f"the Graffeo test needs >= 2 groups, found {n_g}: {groups}")
    cells = scode * n_g + gcode
    sums = _accumulate_at_risk(p, cells, n_g * n_s, True, threads)
    at_risk, pop, ev, ev2 = (a.reshape(n_s, n_g, -1) for a in sums)

    notes = []
    active = at_risk.sum(axis=(0, 2)) > 0
    if not active.all():
        dropped = [groups[g] for g in np.flatnonzero(~active)]
        notes.append(f"groups {dropped} have no patient at risk and were excluded")
    idx = np.flatnonzero(active)
    if len(idx) < 2:
        raise ArityError("fewer than two groups have patients at risk")

    Z = np.zeros(len(idx))
    cov = np.zeros((len(idx), len(idx)))
    for st in range(n_s):
        z, c = _stratum_terms(at_risk[st, idx], pop[st, idx], ev[st, idx], ev2[st, idx])
        Z += z
        cov += c

    stat, dof, note = _quadratic_form(Z[:-1], cov[:-1, :-1])
    if note:
        notes.append(note)
    for n in notes:
        warnings.warn(n, RuntimeWarning, stacklevel=2)
    per_group = np.full(n_g, np.nan)
    per_group[idx] = Z
    full_cov = np.full((n_g, n_g), np.nan)
    full_cov[np.ix_(idx, idx)] = cov
    stat = max(stat, 0.0)
    p_value = chisq_sf(stat, dof) if dof >= 1 else 1.0
    return GraffeoResult(
        stat, dof, p_value, per_group, full_cov, list(groups),
        spec.group_cols, spec.strata_cols, tuple(notes),
    )
