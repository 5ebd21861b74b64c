"""Experimental protocol: random calibration/test splits, alpha sweeps and the
calibration-ratio ablation.

Every dataset is thresholded once (see :func:`crcseg.losses.count_table`);
trials then work on row subsets of the resulting counts, which is exactly
equivalent to recomputing each sample's losses from scratch.

Coverage (ECR) for a segmentation mask is read at the loss level: a test
sample is covered when its own loss at the calibrated threshold is at most
``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from crcseg.calibration import CalibrationResult, RiskSpec, certified_bound, select_from_losses
from crcseg.core import LambdaGrid, Sample
from crcseg.errors import ConfigInvalid, EmptyCalibrationSet, TooFewSamples
from crcseg.losses import CountTable, LossKind, count_table, exact_column_mean, prediction_set, loss

DEFAULT_ALPHAS = tuple(round(0.1 * k, 12) for k in range(1, 10))
DEFAULT_RATIOS = tuple((9 - k, 1 + k) for k in range(9))  # 9:1 ... 1:9
REFERENCE_ALPHA = 0.25
METRICS = ("lambda_hat", "mean_test_fdr", "mean_test_fnr", "ecr", "apss")


@dataclass(frozen=True)
class SplitSpec:
    cal_fraction: float = 0.5
    n_trials: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.cal_fraction < 1.0:
            raise ConfigInvalid(f"cal_fraction must lie in (0, 1), got {self.cal_fraction!r}")
        if self.n_trials < 1:
            raise ConfigInvalid(f"n_trials must be positive, got {self.n_trials!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigInvalid(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


def split_sizes(n: int, cal_fraction: float) -> tuple[int, int]:
    """Calibration size ``round(n * cal_fraction)`` (half up) and the remainder."""
    n_cal = math.floor(n * cal_fraction + 0.5)
    n_test = n - n_cal
    if n < 2 or n_cal < 1 or n_test < 1:
        raise TooFewSamples(
            f"cannot split {n} samples at cal_fraction={cal_fraction}: "
            f"would give {n_cal} calibration and {n_test} test samples"
        )
    return n_cal, n_test


def split_indices(n: int, spec: SplitSpec, trial: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly random partition of ``range(n)``, fixed by ``(spec.seed, trial)``."""
    n_cal, _ = split_sizes(n, spec.cal_fraction)
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(spec.seed, spawn_key=(trial,)))
    )
    perm = rng.permutation(n)
    return np.sort(perm[:n_cal]), np.sort(perm[n_cal:])


def split(samples: Sequence[Sample], spec: SplitSpec, trial: int):
    cal_idx, test_idx = split_indices(len(samples), spec, trial)
    return [samples[i] for i in cal_idx], [samples[i] for i in test_idx]


@dataclass(frozen=True)
class TrialReport:
    trial_index: int
    alpha: float
    kind: LossKind
    ratio: float
    lambda_hat: float
    feasible: bool
    mean_test_fdr: float
    mean_test_fnr: float
    ecr: float
    apss: float
    n_cal: int
    n_test: int
    calibration: CalibrationResult = field(repr=False, compare=False)

    @property
    def calibrated_loss(self) -> float:
        """Mean test loss of the kind that was calibrated."""
        return self.mean_test_fdr if self.kind is LossKind.FDR else self.mean_test_fnr

    @property
    def companion_loss(self) -> float:
        return self.mean_test_fnr if self.kind is LossKind.FDR else self.mean_test_fdr

    @property
    def certified_bound(self) -> float | None:
        return certified_bound(self.calibration) if self.feasible else None

    def row(self) -> dict:
        """Flat record in report column order."""
        return {
            "trial": self.trial_index,
            "alpha": self.alpha,
            "kind": self.kind.value,
            "ratio": self.ratio,
            "lambda_hat": self.lambda_hat,
            "feasible": self.feasible,
            "mean_test_fdr": self.mean_test_fdr,
            "mean_test_fnr": self.mean_test_fnr,
            "ecr": self.ecr,
            "apss": self.apss,
            "n_cal": self.n_cal,
            "n_test": self.n_test,
        }


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def evaluate_tables(
    cal: CountTable,
    test: CountTable,
    spec: RiskSpec,
    trial_index: int = 0,
    ratio: float | None = None,
) -> TrialReport:
    """Calibrate on ``cal`` counts and score the chosen threshold on ``test``."""
    if len(cal) == 0:
        raise EmptyCalibrationSet("calibration split is empty")
    if len(test) == 0:
        raise TooFewSamples("test split is empty")
    result = select_from_losses(cal.losses(spec.kind), cal.grid, spec)
    j = result.lambda_index
    fdr = test.losses(LossKind.FDR)[:, j]
    fnr = test.losses(LossKind.FNR)[:, j]
    own = fdr if spec.kind is LossKind.FDR else fnr
    n_cal, n_test = len(cal), len(test)
    return TrialReport(
        trial_index=trial_index,
        alpha=spec.alpha,
        kind=spec.kind,
        ratio=n_cal / (n_cal + n_test) if ratio is None else ratio,
        lambda_hat=result.lambda_hat,
        feasible=result.feasible,
        mean_test_fdr=_mean(fdr.tolist()),
        mean_test_fnr=_mean(fnr.tolist()),
        ecr=_mean((own <= spec.alpha).tolist()),
        apss=_mean(test.pred_size[:, j].tolist()),
        n_cal=n_cal,
        n_test=n_test,
        calibration=result,
    )


def run_trial(
    cal: Sequence[Sample],
    test: Sequence[Sample],
    spec: RiskSpec,
    grid: LambdaGrid,
    trial_index: int = 0,
) -> TrialReport:
    """Calibrate on ``cal`` and evaluate FDR, FNR, ECR and APSS on ``test``.

    An infeasible calibration is still evaluated, at ``lambda = 1``, and
    reported with ``feasible=False``.
    """
    if len(cal) == 0:
        raise EmptyCalibrationSet("calibration split is empty")
    if len(test) == 0:
        raise TooFewSamples("test split is empty")
    return evaluate_tables(count_table(cal, grid), count_table(test, grid), spec, trial_index)


def ecr(test: Sequence[Sample], lambda_hat: float, alpha: float, kind: LossKind) -> float:
    """Fraction of test samples whose own loss at ``lambda_hat`` is at most ``alpha``."""
    if len(test) == 0:
        raise TooFewSamples("ECR needs at least one test sample")
    covered = [loss(prediction_set(s.prob, lambda_hat), s.truth, kind) <= alpha for s in test]
    return sum(covered) / len(covered)


def apss(test: Sequence[Sample], lambda_hat: float) -> float:
    """Mean prediction-set size in pixels."""
    if len(test) == 0:
        raise TooFewSamples("APSS needs at least one test sample")
    return _mean(prediction_set(s.prob, lambda_hat).count() for s in test)


# -- aggregation --------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    """Mean and (population) std of the trial metrics for one (alpha, ratio) cell.

    Means and stds are taken over feasible trials only; ``n_infeasible`` counts
    the excluded ones. When no trial is feasible the statistics are NaN.
    """

    alpha: float
    ratio: float
    kind: LossKind
    n_trials: int
    n_infeasible: int
    mean: dict
    std: dict

    @property
    def n_feasible(self) -> int:
        return self.n_trials - self.n_infeasible

    def calibrated(self) -> tuple[float, float]:
        key = f"mean_test_{self.kind.value}"
        return self.mean[key], self.std[key]

    def companion(self) -> tuple[float, float]:
        key = f"mean_test_{self.kind.companion.value}"
        return self.mean[key], self.std[key]


@dataclass(frozen=True)
class SweepReport:
    kind: LossKind
    trials: list
    rows: list

    def row_for(self, alpha: float, ratio: float | None = None) -> SweepRow:
        for r in self.rows:
            if math.isclose(r.alpha, alpha, abs_tol=1e-9) and (
                ratio is None or math.isclose(r.ratio, ratio, abs_tol=1e-9)
            ):
                return r
        raise KeyError((alpha, ratio))


def _population_std(values: list, mean: float) -> float:
    return math.sqrt(math.fsum((v - mean) ** 2 for v in values) / len(values))


def aggregate(trials: Sequence[TrialReport]) -> list[SweepRow]:
    """Group trials by (alpha, ratio) and summarise each group.

    The result does not depend on the order of ``trials``: groups are sorted
    by key, members by trial index, and sums are correctly rounded.
    """
    groups: dict = {}
    for t in trials:
        groups.setdefault((t.alpha, t.ratio, t.kind), []).append(t)
    rows = []
    for (alpha, ratio, kind), members in sorted(groups.items(), key=lambda kv: (kv[0][0], -kv[0][1])):
        members = sorted(members, key=lambda t: t.trial_index)
        feasible = [t for t in members if t.feasible]
        mean, std = {}, {}
        for name in METRICS:
            values = [float(getattr(t, name)) for t in feasible]
            if values:
                mean[name] = _mean(values)
                std[name] = _population_std(values, mean[name])
            else:
                mean[name] = std[name] = math.nan
        rows.append(
            SweepRow(
                alpha=alpha,
                ratio=ratio,
                kind=kind,
                n_trials=len(members),
                n_infeasible=len(members) - len(feasible),
                mean=mean,
                std=std,
            )
        )
    return rows


# -- sweeps -------------------------------------------------------------------


def _as_table(samples, grid: LambdaGrid) -> CountTable:
    if isinstance(samples, CountTable):
        if samples.grid != grid:
            raise ConfigInvalid("count table was built on a different grid")
        return samples
    return count_table(samples, grid)


def alpha_sweep(
    samples,
    split_spec: SplitSpec,
    kind: LossKind,
    grid: LambdaGrid,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    bound_b: float = 1.0,
) -> SweepReport:
    """Run every alpha on ``split_spec.n_trials`` random splits.

    All alphas share the same splits: trial ``t`` always uses the partition
    drawn from ``(split_spec.seed, t)``. ``samples`` may be a list of samples
    or a precomputed :class:`CountTable`.
    """
    kind = LossKind.parse(kind)
    if len(alphas) == 0:
        raise ConfigInvalid("need at least one alpha")
    specs = [RiskSpec(alpha=a, kind=kind, bound_b=bound_b) for a in alphas]
    table = _as_table(samples, grid)
    trials = []
    for t in range(split_spec.n_trials):
        cal_idx, test_idx = split_indices(len(table), split_spec, t)
        cal, test = table.subset(cal_idx), table.subset(test_idx)
        for spec in specs:
            trials.append(evaluate_tables(cal, test, spec, t, ratio=split_spec.cal_fraction))
    return SweepReport(kind=kind, trials=trials, rows=aggregate(trials))


def parse_ratio(text: str) -> float:
    """``"9:1"`` -> 0.9 calibration fraction; plain fractions pass through."""
    text = text.strip()
    if ":" in text:
        cal, test = (float(x) for x in text.split(":"))
        if cal <= 0 or test <= 0:
            raise ConfigInvalid(f"ratio parts must be positive: {text!r}")
        return round(cal / (cal + test), 12)
    value = float(text)
    if not 0.0 < value < 1.0:
        raise ConfigInvalid(f"calibration fraction must lie in (0, 1): {text!r}")
    return value


def ratio_sweep(
    samples,
    ratios: Sequence[float],
    kind: LossKind,
    grid: LambdaGrid,
    alpha: float = REFERENCE_ALPHA,
    bound_b: float = 1.0,
    seed: int = 0,
) -> SweepReport:
    """One random partition per calibration fraction, all at a fixed alpha.

    Ratio number ``k`` (in the given order) uses the partition for trial ``k``
    of ``seed``, so different ratios draw independent partitions.
    """
    kind = LossKind.parse(kind)
    spec = RiskSpec(alpha=alpha, kind=kind, bound_b=bound_b)
    table = _as_table(samples, grid)
    trials = []
    for k, frac in enumerate(ratios):
        split_spec = SplitSpec(cal_fraction=frac, n_trials=1, seed=seed)
        cal_idx, test_idx = split_indices(len(table), split_spec, k)
        trials.append(
            evaluate_tables(table.subset(cal_idx), table.subset(test_idx), spec, 0, ratio=frac)
        )
    return SweepReport(kind=kind, trials=trials, rows=aggregate(trials))


def min_achievable_loss(table: CountTable, kind: LossKind, index) -> float:
    """Smallest mean loss over the grid for a given calibration subset."""
    return float(exact_column_mean(table.subset(index).losses(kind)).min())
