"""Cronin-Feuer crude probabilities of death from the disease and other causes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError
from .estimators import DailyGrid, NetSurvivalFit, SurvivalFit

__all__ = ["CrudeMortality", "crude_mortality"]


@dataclass(frozen=True, eq=False)
class CrudeMortality:
    grid: DailyGrid
    M_E: np.ndarray
    M_P: np.ndarray
    one_minus_S_O: np.ndarray
    group_label: tuple = ()


def _exact_complement(total, part):
    """``other`` with ``part + other == total`` exactly in floating point."""
    other = total - part
    for _ in range(8):
        miss = (part + other) != total
        if not miss.any():
            break
        direction = np.where(part + other < total, np.inf, -np.inf)
        other = np.where(miss, np.nextafter(other, direction), other)
    return other


def crude_mortality(net_fit: NetSurvivalFit, km: SurvivalFit | None = None) -> CrudeMortality:
    """Split overall mortality 1 - S_O into disease and other-cause parts.

    M_E(s) = sum_{u <= s} S_O(u - 1) dLambda_E(u) with S_O(0) = 1, and
    M_P = (1 - S_O) - M_E. ``km`` defaults to the Kaplan-Meier curve of the
    patients behind ``net_fit``.
    """
    if km is None:
        km = net_fit.kaplan_meier()
    if km.grid != net_fit.grid:
        raise GridMismatchError(
            f"net survival grid has {net_fit.grid.t_max} days, Kaplan-Meier {km.grid.t_max}"
        )
    if net_fit.n_at_risk is not None and not np.array_equal(net_fit.n_at_risk, km.n_at_risk):
        raise GridMismatchError("the Kaplan-Meier fit was computed on a different cohort")
    s_prev = np.concatenate(([1.0], km.S_O[:-1]))
    m_e = np.cumsum(s_prev * net_fit.dLambda_E)
    total = 1.0 - km.S_O
    return CrudeMortality(
        net_fit.grid, m_e, _exact_complement(total, m_e), total, net_fit.group_label
    )
