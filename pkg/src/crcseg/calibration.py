"""Threshold selection with a finite-sample risk guarantee.

Given ``n`` exchangeable calibration samples with per-sample loss curves
bounded by ``B``, the selected threshold is the smallest grid value ``lam``
whose mean calibration loss satisfies

    L_n(lam) <= alpha - (B - alpha) / n

which is the same as ``(n * L_n(lam) + B) / (n + 1) <= alpha``. The expected
loss on a fresh exchangeable sample at that threshold is then at most
``alpha``. The whole grid is scanned; no monotonicity of the loss is assumed,
so FDR curves (which can go up and down) are handled by the same rule.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from crcseg.core import LambdaGrid
from crcseg.errors import ConfigInvalid, EmptyCalibrationSet, GridMismatch, NotFeasible
from crcseg.losses import LossCurve, LossKind, exact_column_mean

CERTIFICATE_TOL = 1e-12


@dataclass(frozen=True)
class RiskSpec:
    alpha: float
    kind: LossKind
    bound_b: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind.parse(self.kind))
        if not 0.0 < self.alpha < 1.0:
            raise ConfigInvalid(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not self.bound_b >= self.alpha:
            raise ConfigInvalid(
                f"loss bound B={self.bound_b!r} must be at least alpha={self.alpha!r}"
            )
        if self.bound_b > 1.0:
            warnings.warn(
                f"B={self.bound_b} exceeds the largest possible loss (1); "
                "the resulting threshold is valid but needlessly conservative",
                stacklevel=3,
            )

    def corrected_level(self, n: int) -> float:
        """Right-hand side ``alpha - (B - alpha) / n`` of the selection rule."""
        return self.alpha - (self.bound_b - self.alpha) / n


@dataclass(frozen=True)
class CalibrationResult:
    lambda_hat: float
    lambda_index: int
    spec: RiskSpec
    n_cal: int
    achieved_calibration_loss: float
    feasible: bool

    @property
    def threshold(self) -> float:
        """Probability cut-off ``1 - lambda_hat``."""
        return 1.0 - self.lambda_hat


def expected_loss_bound(n: int, mean_loss: float, bound_b: float = 1.0) -> float:
    """Upper bound ``(n * L_n + B) / (n + 1)`` on the expected test loss."""
    return (n * mean_loss + bound_b) / (n + 1)


def select_from_losses(losses: np.ndarray, grid: LambdaGrid, spec: RiskSpec) -> CalibrationResult:
    """Select a threshold from an ``(n, len(grid))`` matrix of losses."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.ndim != 2 or losses.shape[0] == 0:
        raise EmptyCalibrationSet("need at least one calibration sample")
    if losses.shape[1] != len(grid):
        raise GridMismatch(f"{losses.shape[1]} loss columns for a grid of {len(grid)} points")
    n = losses.shape[0]
    mean = exact_column_mean(losses)
    ok = mean <= spec.corrected_level(n)
    if ok.any():
        qualifying = np.flatnonzero(ok)
        j = int(qualifying[np.argmin(grid.values[qualifying])])
        feasible = True
    else:
        j = 0  # lambda = 1: the most inclusive threshold, not certified
        feasible = False
    return CalibrationResult(
        lambda_hat=float(grid.values[j]),
        lambda_index=j,
        spec=spec,
        n_cal=n,
        achieved_calibration_loss=float(mean[j]),
        feasible=feasible,
    )


def select_threshold(curves: Sequence[LossCurve], spec: RiskSpec) -> CalibrationResult:
    """Pick the smallest grid ``lambda`` meeting the corrected risk condition.

    If nothing on the grid qualifies the result has ``feasible=False`` and
    ``lambda_hat=1.0``; callers must check the flag before relying on it.
    """
    if len(curves) == 0:
        raise EmptyCalibrationSet("need at least one calibration curve")
    grid = curves[0].grid
    for c in curves:
        if c.grid != grid:
            raise GridMismatch("loss curves were evaluated on different grids")
        if c.kind is not spec.kind:
            raise GridMismatch(
                f"curve kind {c.kind.value} does not match risk spec kind {spec.kind.value}"
            )
    return select_from_losses(np.stack([c.losses for c in curves]), grid, spec)


def certified_bound(result: CalibrationResult) -> float:
    if not result.feasible:
        raise NotFeasible(
            f"no certified threshold at alpha={result.spec.alpha} with n={result.n_cal}"
        )
    return expected_loss_bound(result.n_cal, result.achieved_calibration_loss, result.spec.bound_b)
