"""Figures written next to the CSV output.  Uses the non-interactive Agg backend."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .risk import RateReport, RiskCurve, Setting, gap_region, theoretical_rate  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "axes.grid": True,
    "grid.linestyle": ":",
    "savefig.bbox": "tight",
}
COLORS = {"standard": "#1f77b4", "local": "#d62728"}


def _color(name: str, i: int) -> str:
    for key, c in COLORS.items():
        if name.startswith(key):
            return c
    return f"C{i}"


def _x_axis(curve: RiskCurve, log_argument: str) -> np.ndarray:
    n = np.array(curve.n_grid, dtype=float)
    A = n + np.array(curve.m_grid, dtype=float) if log_argument == "NPlusM" else n
    return n / np.log(A)


def risk_curves_figure(curves: dict[str, RiskCurve], reports: dict[str, RateReport | None], path) -> Path:
    """Log-log plot of replicate risks, their medians and the fitted power law per estimator."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i, (name, curve) in enumerate(curves.items()):
            rep = reports.get(name)
            log_arg = rep.log_argument if rep else "N"
            x = _x_axis(curve, log_arg)
            color = _color(name, i)
            for xi, (_, _, risks) in zip(x, curve.per_point):
                ax.scatter(np.full(len(risks), xi), risks, s=4, alpha=0.25, color=color, linewidths=0)
            label = name
            if rep is not None:
                label += f" (slope {rep.fitted_slope:.3f} ± {rep.slope_stderr:.3f})"
            ax.plot(x, curve.medians(), "o", color=color, label=label)
            if rep is not None:
                xx = np.geomspace(x.min(), x.max(), 50)
                ax.plot(xx, np.exp(rep.intercept) * xx ** -rep.fitted_slope, "-", color=color)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("n / log A")
        ax.set_ylabel("excess risk on target design")
        ax.legend()
        fig.savefig(path)
        plt.close(fig)
    return path


def rates_figure(beta: float, d: int, path, gamma: float | None = None, gamma_max: float | None = None) -> Path:
    """Standard and local one-sample exponents as functions of ``gamma``, with the gap region shaded."""
    path = Path(path)
    lo, hi = gap_region(beta, d)
    top = gamma_max or max(2.0 * hi, 1.0)
    gs = np.linspace(top / 400, top, 400)
    local = [theoretical_rate(Setting.LOCAL_ONE_SAMPLE, beta, d, gamma=g).rate for g in gs]
    standard = [theoretical_rate(Setting.STANDARD_ONE_SAMPLE, beta, d, gamma=g).rate for g in gs]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(gs, standard, color=COLORS["standard"], label="standard k-NN")
        ax.plot(gs, local, color=COLORS["local"], label="local k-NN")
        ax.axhline(2 * beta / (2 * beta + d), color="0.5", ls="--", lw=0.8, label="2β/(2β+d)")
        ax.axvspan(lo, hi, color="0.9", zorder=0, label="gap region")
        if gamma is not None and math.isfinite(gamma) and gamma <= top:
            ax.axvline(gamma, color="k", lw=0.8, ls=":")
        ax.set_xlabel("density ratio exponent γ")
        ax.set_ylabel("risk exponent")
        ax.set_xlim(0, top)
        ax.set_ylim(0, 1)
        ax.legend(loc="lower right")
        fig.savefig(path)
        plt.close(fig)
    return path
