"""
End-to-end recovery of injected shade on synthetic systems.

Two years of 5-minute data at 34N per case; every test here is slow.
"""

import numpy as np
import pytest

import clearsky_corpus as cc
import main as pipeline
import sd_engine
import shade_report
from synth_validate import Obstruction, SystemGeometry

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def corpus():
    return cc.build_default_corpus(k=6, progress=False)


@pytest.fixture(scope="module")
def medium_case(corpus):
    return pipeline.run_synthetic_case(SystemGeometry(), Obstruction.southern(40.0, 0.5), corpus,
                                       seed=42)


# ── Shade recovery ───────────────────────────────────────────────────────────

def test_medium_shade_recovery(medium_case):
    assert 3.0 < medium_case.truth.loss_fraction < 8.0
    assert abs(medium_case.re) <= 4.0
    assert medium_case.rmse <= 2.5
    assert medium_case.result.report.loss_fraction > 0
    assert medium_case.result.decomposition.converged


def test_unshaded_control(corpus):
    case = pipeline.run_synthetic_case(SystemGeometry(), Obstruction(), corpus, seed=42)
    assert case.truth.yearly_loss_ref == 0.0
    assert case.result.report.loss_fraction <= 1.0
    assert abs(case.re) <= 1.5


def test_heavy_shade_is_underestimated(corpus):
    case = pipeline.run_synthetic_case(SystemGeometry(), Obstruction.tree_line(45.0, 1.0), corpus,
                                       seed=42)
    assert case.truth.loss_fraction >= 20.0
    assert case.re <= 0
    assert case.result.report.yearly_loss >= 0.5 * case.truth.yearly_loss_ref


def test_east_and_west_overestimate_relative_to_south(corpus):
    table = pipeline.azimuth_sweep(corpus).set_index("azimuth")
    assert list(table.index) == [90.0, 135.0, 180.0, 225.0, 270.0]
    assert table.loc[90.0, "re_pct"] >= table.loc[180.0, "re_pct"]
    assert table.loc[270.0, "re_pct"] >= table.loc[180.0, "re_pct"]


# ── Structure of every run ───────────────────────────────────────────────────

def test_signal_shape_and_invariants(medium_case):
    result = medium_case.result
    assert result.prepared.signal.shape == (47, 256)
    inv = result.invariants
    assert inv["reconstruction"] <= 1e-12
    assert inv["residual_outside_known"] == 0.0
    for name in ("shade_positive", "clear_negative", "clear_concavity", "clear_boundary"):
        assert inv[name] <= 1e-7, name
    assert inv["corpus_span"] <= 1e-6


def test_inverted_components(medium_case):
    result = medium_case.result
    prepared = result.prepared
    for day in shade_report.representative_days(prepared.geometry, prepared.clear):
        series = shade_report.invert_transform(result.decomposition, prepared.signal,
                                               prepared.geometry, day, prepared.matrix.n_per_day)
        assert np.all(series.x3 <= 0)
        assert np.all(series.x2 >= 0)


def test_rerun_is_bit_identical(medium_case):
    prob = sd_engine.with_params(medium_case.result.problem, max_iter=50)
    a, b = sd_engine.solve(prob), sd_engine.solve(prob)
    np.testing.assert_array_equal(a.x2, b.x2)
    np.testing.assert_array_equal(a.x3, b.x3)
    assert a.objective == b.objective
