"""Prediction sets and the FDR / FNR calibration losses.

A prediction set at level ``lam`` contains every pixel whose probability is at
least ``1 - lam`` (inclusive). The comparison is carried out in float64 after
upcasting the stored float32 probabilities, in every code path.

Undefined ratios follow one convention throughout:

* FDR of an empty prediction set is 0 (no discoveries, no false ones).
* FNR against an empty ground truth is 0 (nothing to miss).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from crcseg.core import BinaryMask, LambdaGrid, ProbabilityMap, Sample
from crcseg.errors import EmptyCalibrationSet, GridMismatch, LambdaOutOfRange, ShapeMismatch


class LossKind(str, enum.Enum):
    FDR = "fdr"
    FNR = "fnr"

    @classmethod
    def parse(cls, value) -> LossKind:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown loss kind {value!r}; expected 'fdr' or 'fnr'") from None

    @property
    def companion(self) -> LossKind:
        return LossKind.FNR if self is LossKind.FDR else LossKind.FDR


def prediction_set(prob: ProbabilityMap, lam: float) -> BinaryMask:
    if not 0.0 <= lam <= 1.0:
        raise LambdaOutOfRange(f"lambda {lam!r} outside [0, 1]")
    threshold = 1.0 - float(lam)
    return BinaryMask(prob.values.astype(np.float64) >= threshold)


def _overlap(pred: BinaryMask, truth: BinaryMask) -> tuple[int, int, int]:
    if pred.shape != truth.shape:
        raise ShapeMismatch(f"prediction {pred.shape} and truth {truth.shape} differ")
    hits = int(np.count_nonzero(pred.values & truth.values))
    return hits, pred.count(), truth.count()


def fdr_loss(pred: BinaryMask, truth: BinaryMask) -> float:
    """``1 - |pred & truth| / |pred|``; 0 when the prediction is empty."""
    hits, n_pred, _ = _overlap(pred, truth)
    if n_pred == 0:
        return 0.0
    return 1.0 - hits / n_pred


def fnr_loss(pred: BinaryMask, truth: BinaryMask) -> float:
    """``1 - |pred & truth| / |truth|``; 0 when the truth is empty."""
    hits, _, n_truth = _overlap(pred, truth)
    if n_truth == 0:
        return 0.0
    return 1.0 - hits / n_truth


_LOSS_FUNCS = {LossKind.FDR: fdr_loss, LossKind.FNR: fnr_loss}


def loss(pred: BinaryMask, truth: BinaryMask, kind: LossKind) -> float:
    return _LOSS_FUNCS[LossKind.parse(kind)](pred, truth)


@dataclass(frozen=True, eq=False)
class LossCurve:
    """Per-sample losses ``l_i(lambda)`` evaluated on every grid point."""

    kind: LossKind
    grid: LambdaGrid
    losses: np.ndarray

    def __post_init__(self):
        arr = np.array(self.losses, dtype=np.float64, copy=True)
        if arr.shape != (len(self.grid),):
            raise GridMismatch(f"{arr.size} losses for a grid of {len(self.grid)} points")
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise ValueError("loss values must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "losses", arr)
        object.__setattr__(self, "kind", LossKind.parse(self.kind))


def _ratio_losses(numer: np.ndarray, denom: np.ndarray) -> np.ndarray:
    # Mirrors fdr_loss/fnr_loss bit for bit: 1.0 - hits / size, 0 on empty.
    out = np.zeros(np.broadcast(numer, denom).shape, dtype=np.float64)
    denom = np.broadcast_to(denom, out.shape)
    numer = np.broadcast_to(numer, out.shape)
    nz = denom > 0
    out[nz] = 1.0 - numer[nz] / denom[nz]
    return out


@dataclass(frozen=True, eq=False)
class CountTable:
    """Pixel counts for many samples over one grid.

    ``pred_size[i, j]`` is ``|C_i(lambda_j)|``, ``hits[i, j]`` is
    ``|C_i(lambda_j) & y_i|`` and ``truth_size[i]`` is ``|y_i|``. Both losses
    and the prediction-set sizes follow from these counts, so a dataset only
    has to be thresholded once per experiment.
    """

    ids: tuple
    grid: LambdaGrid
    pred_size: np.ndarray
    hits: np.ndarray
    truth_size: np.ndarray

    def __len__(self):
        return len(self.ids)

    def losses(self, kind: LossKind) -> np.ndarray:
        kind = LossKind.parse(kind)
        if kind is LossKind.FDR:
            return _ratio_losses(self.hits, self.pred_size)
        return _ratio_losses(self.hits, self.truth_size[:, None])

    def curves(self, kind: LossKind) -> list[LossCurve]:
        kind = LossKind.parse(kind)
        return [LossCurve(kind, self.grid, row) for row in self.losses(kind)]

    def empty_flags(self, kind: LossKind) -> np.ndarray:
        """Boolean ``(n, grid)`` array marking where the loss fell back to 0."""
        kind = LossKind.parse(kind)
        if kind is LossKind.FDR:
            return self.pred_size == 0
        return np.broadcast_to(self.truth_size[:, None] == 0, self.pred_size.shape)

    def subset(self, index) -> CountTable:
        index = np.asarray(index, dtype=np.intp)
        return CountTable(
            ids=tuple(self.ids[i] for i in index),
            grid=self.grid,
            pred_size=self.pred_size[index],
            hits=self.hits[index],
            truth_size=self.truth_size[index],
        )


def _counts_direct(sample: Sample, grid: LambdaGrid):
    prob = sample.prob.values.astype(np.float64)
    truth = sample.truth.values.astype(bool)
    pred_size = np.empty(len(grid), dtype=np.int64)
    hits = np.empty(len(grid), dtype=np.int64)
    for j, t in enumerate(grid.thresholds):
        inside = prob >= t
        pred_size[j] = np.count_nonzero(inside)
        hits[j] = np.count_nonzero(inside & truth)
    return pred_size, hits


def _counts_sorted(sample: Sample, grid: LambdaGrid):
    prob = sample.prob.values.astype(np.float64).ravel()
    truth = sample.truth.values.ravel().astype(bool)
    thresholds = grid.thresholds
    everything = np.sort(prob)
    positives = np.sort(prob[truth])
    pred_size = everything.size - np.searchsorted(everything, thresholds, side="left")
    hits = positives.size - np.searchsorted(positives, thresholds, side="left")
    return pred_size.astype(np.int64), hits.astype(np.int64)


_COUNTERS = {"direct": _counts_direct, "sorted": _counts_sorted}


def count_table(samples: Sequence[Sample], grid: LambdaGrid, method: str = "sorted") -> CountTable:
    """Threshold every sample at every grid point and record the pixel counts.

    ``method="direct"`` compares the whole map against each threshold in turn;
    ``method="sorted"`` sorts the pixels once and uses binary search. The two
    give identical integer counts.
    """
    counter = _COUNTERS[method]
    n, g = len(samples), len(grid)
    pred_size = np.empty((n, g), dtype=np.int64)
    hits = np.empty((n, g), dtype=np.int64)
    truth_size = np.empty(n, dtype=np.int64)
    for i, s in enumerate(samples):
        pred_size[i], hits[i] = counter(s, grid)
        truth_size[i] = s.truth.count()
    return CountTable(
        ids=tuple(s.id for s in samples),
        grid=grid,
        pred_size=pred_size,
        hits=hits,
        truth_size=truth_size,
    )


def loss_curve(sample: Sample, grid: LambdaGrid, kind: LossKind, method: str = "direct") -> LossCurve:
    kind = LossKind.parse(kind)
    table = count_table([sample], grid, method=method)
    return LossCurve(kind, grid, table.losses(kind)[0])


def exact_column_mean(matrix: np.ndarray) -> np.ndarray:
    """Column means with correctly rounded sums.

    ``math.fsum`` makes the result independent of row order, so a shuffled
    calibration set produces bit-identical averages.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    return np.array([math.fsum(col) / n for col in matrix.T.tolist()], dtype=np.float64)


def average_loss_curve(curves: Sequence[LossCurve]) -> np.ndarray:
    """Pointwise mean ``L_n(lambda)`` of a set of loss curves."""
    if len(curves) == 0:
        raise EmptyCalibrationSet("cannot average an empty set of loss curves")
    first = curves[0]
    for c in curves[1:]:
        if c.grid != first.grid:
            raise GridMismatch("loss curves were evaluated on different grids")
        if c.kind is not first.kind:
            raise GridMismatch(f"mixed loss kinds {first.kind.value} and {c.kind.value}")
    return exact_column_mean(np.stack([c.losses for c in curves]))
