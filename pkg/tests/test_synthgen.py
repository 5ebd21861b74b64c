import numpy as np
import pytest

from crcseg.calibration import RiskSpec, select_threshold
from crcseg.core import default_lambda_grid
from crcseg.errors import ConfigInvalid
from crcseg.io import encode_mask, encode_prob
from crcseg.losses import count_table
from crcseg.synthgen import SynthConfig, generate, generate_sample


def test_zero_noise_values_are_exact(noise_free_synth):
    for s in noise_free_synth:
        fg = s.prob.values[s.truth.values == 1]
        bg = s.prob.values[s.truth.values == 0]
        assert np.all(fg == np.float32(0.9))
        assert np.all(bg == np.float32(0.1))


def _bytes(ds):
    return b"".join(encode_prob(s.prob) + encode_mask(s.truth) + s.id.encode() for s in ds)


def test_same_config_same_bytes():
    cfg = SynthConfig(height=20, width=24, n_samples=30, seed=99)
    assert _bytes(generate(cfg)) == _bytes(generate(cfg))
    assert _bytes(generate(cfg)) != _bytes(generate(SynthConfig(height=20, width=24, n_samples=30, seed=100)))


def test_samples_are_generated_independently():
    cfg = SynthConfig(height=16, width=16, n_samples=12, seed=5)
    ds = generate(cfg)
    # any sample can be regenerated alone, in any order
    for k in reversed(range(12)):
        assert generate_sample(cfg, k) == ds[k]
    bigger = generate(SynthConfig(height=16, width=16, n_samples=40, seed=5))
    assert all(bigger[k] == ds[k] for k in range(12))


@pytest.mark.parametrize("shape", ["ellipse", "rectangle"])
def test_foreground_fraction_follows_size_range(shape):
    ds = generate(SynthConfig(height=64, width=64, n_samples=1000, shape=shape, seed=11))
    fracs = np.array([s.truth.count() / 4096 for s in ds])
    assert 0.08 <= fracs.mean() <= 0.32
    assert fracs.min() > 0.05 and fracs.max() < 0.35


def test_noisy_probabilities_are_clamped():
    ds = generate(SynthConfig(height=32, width=32, n_samples=50, noise_std=0.5, seed=2))
    vals = np.concatenate([s.prob.values.ravel() for s in ds])
    assert vals.min() == 0.0 and vals.max() == 1.0
    assert np.all((vals >= 0) & (vals <= 1))


def test_tiny_images_still_have_foreground():
    ds = generate(SynthConfig(height=2, width=3, n_samples=50, seed=1))
    assert all(s.truth.count() >= 1 for s in ds)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(fg_mean=0.1, bg_mean=0.9),
        dict(fg_mean=0.5, bg_mean=0.5),
        dict(fg_mean=1.0),
        dict(noise_std=-0.1),
        dict(noise_std=1.5),
        dict(height=0),
        dict(n_samples=0),
        dict(shape="star"),
        dict(size_min=0.5, size_max=0.2),
        dict(seed=-1),
        dict(seed=2**64),
    ],
)
def test_config_invalid(kwargs):
    with pytest.raises(ConfigInvalid):
        SynthConfig(**kwargs)


def test_weak_preset():
    cfg = SynthConfig.weak(n_samples=3)
    assert cfg.fg_mean - cfg.bg_mean < 0.3
    assert len(generate(cfg)) == 3


@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.5, 0.9])
def test_zero_noise_fnr_threshold_sits_below_foreground_level(noise_free_synth, alpha):
    g = default_lambda_grid()
    curves = count_table(noise_free_synth.samples, g).curves("fnr")
    r = select_threshold(curves, RiskSpec(alpha, "fnr"))
    assert r.feasible
    assert 1 - r.lambda_hat <= 0.9
    assert r.achieved_calibration_loss == 0.0
