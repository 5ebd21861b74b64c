import numpy as np
import pytest
from hypothesis import strategies as st

from crcseg.core import BinaryMask, ProbabilityMap, Sample
from crcseg.synthgen import SynthConfig, generate


def random_sample(rng, max_side=4, sid="r", levels=None):
    """Small random sample; ``levels`` snaps probabilities to a coarse set so
    that thresholds hit pixel values exactly now and then."""
    h, w = rng.integers(1, max_side + 1, size=2)
    if levels is None:
        prob = rng.random((h, w))
    else:
        prob = rng.choice(levels, size=(h, w))
    truth = rng.integers(0, 2, size=(h, w))
    return Sample(sid, ProbabilityMap(prob), BinaryMask(truth))


@st.composite
def samples(draw, max_side=4):
    h = draw(st.integers(1, max_side))
    w = draw(st.integers(1, max_side))
    probs = st.one_of(
        st.floats(0.0, 1.0, width=32),
        st.sampled_from([0.0, 0.25, 0.5, 0.7, 0.99, 1.0]),
    )
    prob = draw(st.lists(probs, min_size=h * w, max_size=h * w))
    truth = draw(st.lists(st.integers(0, 1), min_size=h * w, max_size=h * w))
    return Sample("h", ProbabilityMap.from_flat(h, w, prob), BinaryMask.from_flat(h, w, truth))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_synth():
    return generate(SynthConfig(height=16, width=16, n_samples=200, seed=7))


@pytest.fixture(scope="session")
def noise_free_synth():
    return generate(
        SynthConfig(height=16, width=16, n_samples=200, fg_mean=0.9, bg_mean=0.1, noise_std=0.0, seed=3)
    )


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[number])
