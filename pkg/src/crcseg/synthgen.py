"""Toy segmentation model producing exchangeable (probability, mask) pairs.

Each sample gets its own random stream: numpy's PCG64 bit generator seeded
with ``SeedSequence(seed, spawn_key=(index,))``. Sample ``k`` therefore never
depends on any other sample, generation order does not matter, and a given
``(config, seed)`` always yields the same dataset on the same numpy version.

Per sample:

1. draw a blob (ellipse or axis-aligned rectangle) whose area is a uniform
   fraction of the image between ``size_min`` and ``size_max``; the pixels
   whose centres fall inside it form the ground truth (the pixel nearest the
   blob centre is always included);
2. every pixel gets ``fg_mean`` or ``bg_mean`` plus ``N(0, noise_std)``
   noise, clamped to [0, 1]. Clamping puts point masses at exactly 0 and 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from crcseg.core import BinaryMask, ProbabilityMap, Sample
from crcseg.errors import ConfigInvalid

SHAPES = ("ellipse", "rectangle")
MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class SynthConfig:
    height: int = 64
    width: int = 64
    n_samples: int = 1024
    fg_mean: float = 0.8
    bg_mean: float = 0.2
    noise_std: float = 0.15
    shape: str = "ellipse"
    size_min: float = 0.1
    size_max: float = 0.3
    seed: int = 0

    def __post_init__(self):
        for name in ("height", "width", "n_samples"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigInvalid(f"{name} must be a positive integer, got {value!r}")
        for name in ("fg_mean", "bg_mean"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigInvalid(f"{name} must lie in (0, 1), got {value!r}")
        if not self.fg_mean > self.bg_mean:
            raise ConfigInvalid(
                f"fg_mean ({self.fg_mean}) must exceed bg_mean ({self.bg_mean})"
            )
        if not 0.0 <= self.noise_std <= 1.0:
            raise ConfigInvalid(f"noise_std must lie in [0, 1], got {self.noise_std!r}")
        if self.shape not in SHAPES:
            raise ConfigInvalid(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if not 0.0 < self.size_min <= self.size_max <= 1.0:
            raise ConfigInvalid("blob size range must satisfy 0 < size_min <= size_max <= 1")
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigInvalid(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    @classmethod
    def weak(cls, **overrides) -> SynthConfig:
        """A poorly separated model: foreground and background overlap heavily."""
        params = dict(fg_mean=0.6, bg_mean=0.4, noise_std=0.2)
        params.update(overrides)
        return cls(**params)


@dataclass(frozen=True, eq=False)
class SynthDataset:
    samples: list = field(repr=False)
    config: SynthConfig

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def _blob_mask(rng: np.random.Generator, config: SynthConfig) -> np.ndarray:
    h, w = config.height, config.width
    area = rng.uniform(config.size_min, config.size_max) * h * w
    aspect = math.exp(rng.uniform(math.log(0.5), math.log(2.0)))  # width / height
    if config.shape == "ellipse":
        # pi * a * b = area, a / b = aspect
        b = math.sqrt(area / (math.pi * aspect))
        a = aspect * b
        half_w, half_h = min(a, w / 2), min(b, h / 2)
    else:
        rw = math.sqrt(area * aspect)
        rh = area / rw
        half_w, half_h = min(rw, w) / 2, min(rh, h) / 2
    cx = rng.uniform(half_w, w - half_w)
    cy = rng.uniform(half_h, h - half_h)

    ys = np.arange(h)[:, None] + 0.5
    xs = np.arange(w)[None, :] + 0.5
    dx, dy = (xs - cx) / half_w, (ys - cy) / half_h
    if config.shape == "ellipse":
        mask = dx * dx + dy * dy <= 1.0
    else:
        mask = (np.abs(dx) <= 1.0) & (np.abs(dy) <= 1.0)
    mask[min(int(cy), h - 1), min(int(cx), w - 1)] = True
    return mask


def generate_sample(config: SynthConfig, index: int) -> Sample:
    rng = sample_rng(config.seed, index)
    truth = _blob_mask(rng, config)
    mean = np.where(truth, config.fg_mean, config.bg_mean)
    if config.noise_std > 0:
        mean = mean + rng.normal(0.0, config.noise_std, size=mean.shape)
    prob = np.clip(mean, 0.0, 1.0)
    return Sample(id=f"s{index:05d}", prob=ProbabilityMap(prob), truth=BinaryMask(truth.astype(np.uint8)))


def generate(config: SynthConfig) -> SynthDataset:
    return SynthDataset(
        samples=[generate_sample(config, i) for i in range(config.n_samples)],
        config=config,
    )
