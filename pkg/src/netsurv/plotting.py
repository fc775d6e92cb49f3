"""Static SVG plots of net survival curves and crude mortality."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .crude import CrudeMortality  # noqa: E402
from .estimators import NetSurvivalFit, confint  # noqa: E402
from .export import group_name  # noqa: E402

# fixed salt + no date stamp keep the SVG byte-identical between runs
_RC = {"svg.hashsalt": "netsurv", "svg.fonttype": "none"}


def plot_fits(fits: Sequence[NetSurvivalFit], path, level: float = 0.05) -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8, 5))
        for fit in fits:
            lo, hi = confint(fit, level)
            label = group_name(fit.group_cols, fit.group_label) if fit.group_cols else None
            (line,) = ax.plot(fit.grid.days, fit.S_E, lw=1.2, label=label)
            ax.fill_between(fit.grid.days, lo, hi, color=line.get_color(), alpha=0.25, lw=0)
        ax.set_xlabel("Time (days)")
        ax.set_ylabel("Net survival")
        if any(f.group_cols for f in fits):
            ax.legend()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def plot_crude(results: Sequence[CrudeMortality], path, group_cols=()) -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8, 5))
        for r in results:
            name = group_name(group_cols, r.group_label)
            days = r.grid.days
            ax.plot(days, r.M_E, lw=1.2, label=f"M_E {name}")
            ax.plot(days, r.M_P, lw=1.2, ls="--", label=f"M_P {name}")
        ax.set_xlabel("Time (days)")
        ax.set_ylabel("Crude mortality")
        ax.legend()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
