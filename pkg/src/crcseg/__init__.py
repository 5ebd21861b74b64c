"""Conformal risk control for binary segmentation thresholds."""

from crcseg.calibration import (
    CalibrationResult,
    RiskSpec,
    certified_bound,
    expected_loss_bound,
    select_from_losses,
    select_threshold,
)
from crcseg.core import (
    BinaryMask,
    LambdaGrid,
    ProbabilityMap,
    Sample,
    default_lambda_grid,
    lambda_grid,
    validate_sample,
)
from crcseg.experiments import (
    SplitSpec,
    SweepReport,
    TrialReport,
    alpha_sweep,
    apss,
    ecr,
    ratio_sweep,
    run_trial,
    split,
)
from crcseg.losses import (
    CountTable,
    LossCurve,
    LossKind,
    average_loss_curve,
    count_table,
    fdr_loss,
    fnr_loss,
    loss_curve,
    prediction_set,
)
from crcseg.synthgen import SynthConfig, SynthDataset, generate

__version__ = "0.1.0"
