"""Grid types shared by the whole package.

Probability maps and masks are thin, immutable wrappers around 2-D numpy
arrays. Probabilities are stored as float32 (the natural precision of model
outputs); every loss computation upcasts to float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from crcseg.errors import (
    InvalidGrid,
    NonBinaryMask,
    ShapeMismatch,
    ValidationError,
    ValueOutOfRange,
)

DEFAULT_GRID_POINTS = 101


def _as_grid_array(values, dtype, height=None, width=None) -> np.ndarray:
    arr = np.asarray(values)
    if height is not None or width is not None:
        if height is None or width is None:
            raise ValidationError("height and width must be given together")
        if arr.size != height * width:
            raise ShapeMismatch(
                f"values length {arr.size} != height*width = {height * width}"
            )
        arr = arr.reshape(height, width)
    if arr.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D grid, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatch(f"grid dimensions must be positive, got {arr.shape}")
    out = np.array(arr, dtype=dtype, copy=True, order="C")
    out.setflags(write=False)
    return out


def _check_probabilities(values: np.ndarray) -> None:
    # NaN fails both comparisons, so it is reported as out of range too.
    bad = ~((values >= 0.0) & (values <= 1.0))
    if bad.any():
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise ValueOutOfRange(
            f"probability {values.ravel()[idx]!r} at flat index {idx} is outside [0, 1]",
            index=idx,
        )


def _check_binary(values: np.ndarray) -> None:
    bad = (values != 0) & (values != 1)
    if bad.any():
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise NonBinaryMask(
            f"mask element {values.ravel()[idx]!r} at flat index {idx} is not 0 or 1",
            index=idx,
        )


@dataclass(frozen=True, eq=False)
class ProbabilityMap:
    """Per-pixel foreground probabilities, shape ``(height, width)``."""

    values: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.values)
        if raw.ndim == 2 and raw.size:
            _check_probabilities(raw.astype(np.float64))
        arr = _as_grid_array(raw, np.float32)
        _check_probabilities(arr)
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_flat(cls, height: int, width: int, values) -> ProbabilityMap:
        return cls(_as_grid_array(values, np.float64, height, width))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, ProbabilityMap):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """A pixel set encoded as a ``(height, width)`` grid of 0/1 bytes."""

    values: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.values)
        if raw.ndim == 2:
            _check_binary(raw)
        arr = _as_grid_array(raw, np.uint8)
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_flat(cls, height: int, width: int, values) -> BinaryMask:
        return cls(_as_grid_array(values, np.int64, height, width))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def count(self) -> int:
        return int(np.count_nonzero(self.values))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Sample:
    """A (probability map, ground-truth mask) pair."""

    id: str
    prob: ProbabilityMap
    truth: BinaryMask

    def __post_init__(self):
        validate_sample(self)

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return self.id == other.id and self.prob == other.prob and self.truth == other.truth

    __hash__ = None


def validate_sample(sample: Sample) -> None:
    """Raise if ``sample`` breaks any grid invariant; return None otherwise.

    Raises ShapeMismatch, ValueOutOfRange or NonBinaryMask. The two value errors
    carry the flat (row-major) index of the first offending element.
    """
    prob = np.asarray(sample.prob.values)
    truth = np.asarray(sample.truth.values)
    if prob.ndim != 2 or truth.ndim != 2:
        raise ShapeMismatch(f"sample {sample.id!r}: grids must be 2-D")
    if prob.shape != truth.shape:
        raise ShapeMismatch(
            f"sample {sample.id!r}: probability map is {prob.shape[0]}x{prob.shape[1]} "
            f"but mask is {truth.shape[0]}x{truth.shape[1]}"
        )
    _check_probabilities(prob)
    _check_binary(truth)


@dataclass(frozen=True, eq=False)
class LambdaGrid:
    """Candidate thresholds, strictly decreasing from 1 to 0."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 1 or arr.size < 2:
            raise InvalidGrid("a lambda grid needs at least two points")
        if arr[0] != 1.0 or arr[-1] != 0.0:
            raise InvalidGrid(f"grid must run from 1 to 0, got {arr[0]} .. {arr[-1]}")
        if not np.all(np.diff(arr) < 0):
            raise InvalidGrid("grid values must be strictly decreasing")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return self.values.size

    def __getitem__(self, j):
        return float(self.values[j])

    def __iter__(self):
        return (float(v) for v in self.values)

    def __eq__(self, other):
        if not isinstance(other, LambdaGrid):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None

    @property
    def thresholds(self) -> np.ndarray:
        """Probability cut-offs ``1 - lambda`` in grid order (increasing)."""
        return 1.0 - self.values

    def index_of(self, lam: float) -> int:
        hits = np.flatnonzero(self.values == lam)
        if hits.size == 0:
            raise InvalidGrid(f"lambda {lam!r} is not on the grid")
        return int(hits[0])


def lambda_grid(points: int = DEFAULT_GRID_POINTS) -> LambdaGrid:
    """Uniform grid ``linspace(1, 0, points)``."""
    if points < 2:
        raise InvalidGrid("a lambda grid needs at least two points")
    return LambdaGrid(np.linspace(1.0, 0.0, points))


def default_lambda_grid() -> LambdaGrid:
    """The 101-point grid 1.00, 0.99, ..., 0.00."""
    return lambda_grid(DEFAULT_GRID_POINTS)
