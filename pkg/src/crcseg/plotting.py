"""Figures for sweep reports.

Colours follow the usual convention for these plots: the calibrated loss in
blue, its companion in green (orange in the ratio ablation) and the target
risk level as a red dashed line.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from crcseg.experiments import REFERENCE_ALPHA, SweepReport  # noqa: E402
from crcseg.losses import LossKind  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 8,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
}

# fixed metadata keeps PNG bytes stable across runs
_PNG_METADATA = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=_PNG_METADATA if path.suffix == ".png" else None, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_alpha_sweep(report: SweepReport, path, title: str | None = None) -> Path:
    """Mean test loss vs alpha with +/- one std bands."""
    kind = report.kind
    rows = report.rows
    alphas = np.array([r.alpha for r in rows])
    own = np.array([r.calibrated() for r in rows], dtype=float)
    other = np.array([r.companion() for r in rows], dtype=float)

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        ax.plot(alphas, alphas, "r--", lw=1.2, label=r"$\alpha$")
        ax.plot(alphas, own[:, 0], "o-", color="tab:blue", ms=3, label=f"mean {kind.value.upper()}")
        ax.fill_between(alphas, own[:, 0] - own[:, 1], own[:, 0] + own[:, 1], color="tab:blue", alpha=0.2)
        ax.plot(alphas, other[:, 0], "s-", color="tab:green", ms=3, label=f"mean {kind.companion.value.upper()}")
        ax.fill_between(
            alphas, other[:, 0] - other[:, 1], other[:, 0] + other[:, 1], color="tab:green", alpha=0.2
        )
        if alphas.min() <= REFERENCE_ALPHA <= alphas.max():
            ax.axvline(REFERENCE_ALPHA, color="0.6", lw=0.8, ls=":")
        ax.set_xlabel(r"risk level $\alpha$")
        ax.set_ylabel("test loss")
        ax.set_ylim(-0.02, 1.02)
        ax.set_title(title or f"{kind.value.upper()} control")
        ax.legend(frameon=False, loc="upper left")
        return _save(fig, path)


def plot_ratio_sweep(report: SweepReport, path, alpha: float | None = None, title: str | None = None) -> Path:
    """FDR and FNR at the calibrated threshold for each calibration share."""
    rows = report.rows
    labels = [f"{r.ratio * 10:.0f}:{(1 - r.ratio) * 10:.0f}" for r in rows]
    x = np.arange(len(rows))
    fdr = [r.mean["mean_test_fdr"] for r in rows]
    fnr = [r.mean["mean_test_fnr"] for r in rows]
    alpha = rows[0].alpha if alpha is None else alpha

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        ax.plot(x, fdr, "o-", color="tab:blue", ms=3, label="FDR")
        ax.plot(x, fnr, "s-", color="tab:orange", ms=3, label="FNR")
        ax.axhline(alpha, color="r", ls="--", lw=1.2, label=rf"$\alpha$ = {alpha:g}")
        infeasible = [i for i, r in enumerate(rows) if r.n_feasible == 0]
        for i in infeasible:
            ax.axvspan(i - 0.4, i + 0.4, color="0.9", zorder=0)
        ax.set_xticks(x)
        ax.set_xticklabels(labels)
        ax.set_xlabel("calibration : test")
        ax.set_ylabel("test loss")
        ax.set_ylim(-0.02, 1.02)
        ax.set_title(title or f"ratio ablation ({report.kind.value.upper()} calibrated)")
        ax.legend(frameon=False, loc="upper left")
        return _save(fig, path)


def plot_loss_curves(grid, losses: np.ndarray, kind: LossKind, path, max_curves: int = 50) -> Path:
    """Per-sample loss curves (thin grey) and their mean (black)."""
    lam = np.asarray(grid.values)
    losses = np.asarray(losses)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        for row in losses[:max_curves]:
            ax.plot(lam, row, color="0.75", lw=0.5)
        ax.plot(lam, losses.mean(axis=0), color="k", lw=1.5, label=r"$L_n(\lambda)$")
        ax.set_xlabel(r"$\lambda$")
        ax.set_ylabel(f"{LossKind.parse(kind).value.upper()} loss")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(frameon=False)
        return _save(fig, path)
