"""Shared fixtures: a small fitted corpus and synthetic power series."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import clearsky_corpus as cc  # noqa: E402
import preprocess  # noqa: E402
import synth_validate  # noqa: E402
from synth_validate import SystemGeometry  # noqa: E402


# ── Corpus ───────────────────────────────────────────────────────────────────

@pytest.fixture(scope="session")
def small_corpus():
    """Corpus over a narrow grid around a south-facing system; 9 geometries x 47 bins."""
    return cc.build_default_corpus(k=6, lat_grid=(34.0,), tilt_grid=(10.0, 20.0, 30.0),
                                   azimuth_grid=(150.0, 180.0, 210.0), progress=False)


# ── Synthetic series ─────────────────────────────────────────────────────────

@pytest.fixture(scope="session")
def clear_series():
    """Two cloudless, unshaded years at 15-minute cadence."""
    return synth_validate.simulate_system(SystemGeometry(), years=2, interval=900)


@pytest.fixture(scope="session")
def cloudy_case():
    """Two years at 5-minute cadence, 35% cloudy days, no shade, with labels."""
    series = synth_validate.simulate_system(SystemGeometry(), years=2, interval=300)
    weathered, labels = synth_validate.inject_weather(series, cloud_prob=0.35, seed=7)
    return weathered, labels


@pytest.fixture(scope="session")
def cloudy_prepared(cloudy_case):
    series, _ = cloudy_case
    return preprocess.prepare_signal(series)


@pytest.fixture(scope="session")
def clear_prepared(clear_series):
    return preprocess.prepare_signal(clear_series)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
