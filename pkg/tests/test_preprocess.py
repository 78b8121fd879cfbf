"""Clear-day detection, masking/resampling, normalization and bin averaging."""

from datetime import date

import numpy as np
import pytest

import ingest
import preprocess
import solar_geometry as sg
from errors import ArgumentError, InsufficientCoverageError, InvalidDataError
from preprocess import DayProfile, PrepSettings


def _geometry(n_days, sunrise=6.0, sunset=18.0, interval=3600, bins=None):
    rise = np.full(n_days, float(sunrise))
    sset = np.full(n_days, float(sunset))
    doy = np.arange(1, n_days + 1)
    delta = sg.declination(doy)
    return sg.DayGeometry(day_of_year=doy, declination=delta,
                          bin_index=sg.bin_declination(delta) if bins is None else np.asarray(bins),
                          sunrise_idx=rise, sunset_idx=sset,
                          day_length=(sset - rise) * interval / 3600.0)


def _matrix(columns, interval=3600):
    values = np.column_stack(columns).astype(float)
    return ingest.DayMatrix(values=values, gap_mask=np.zeros_like(values, dtype=bool),
                            start_date=date(2019, 1, 1), interval=interval)


def _profile(values, day, b, clear=True):
    return DayProfile(values=np.asarray(values, dtype=float), day_index=day, bin_index=b,
                      clear_flag=clear)


# ── Settings ─────────────────────────────────────────────────────────────────

def test_settings_validation():
    with pytest.raises(ArgumentError):
        PrepSettings(n_samples=2)
    with pytest.raises(ArgumentError):
        PrepSettings(min_known_rows=48)
    with pytest.raises(ArgumentError):
        PrepSettings(smooth_factor=0.0)


# ── mask_resample ────────────────────────────────────────────────────────────

def test_constant_day_resamples_to_flat_profile():
    day = np.zeros(24)
    day[6:19] = 1.0
    profiles = preprocess.mask_resample(_matrix([day]), _geometry(1))
    assert len(profiles) == 1
    values = profiles[0].values
    assert values.shape == (256,)
    assert values[0] == 0.0 and values[-1] == 0.0
    np.testing.assert_allclose(values[1:-1], 1.0)


def test_ramp_day_stays_linear():
    day = np.arange(24.0)
    profiles = preprocess.mask_resample(_matrix([day]), _geometry(1))
    expected = np.linspace(6.0, 18.0, 256)
    np.testing.assert_allclose(profiles[0].values[1:-1], expected[1:-1])


def test_short_day_dropped():
    day = np.ones(24)
    geo = _geometry(2)
    geo.sunrise_idx[1], geo.sunset_idx[1] = 10.0, 13.0
    geo.day_length[1] = 3.0
    profiles = preprocess.mask_resample(_matrix([day, day]), geo)
    assert [p.day_index for p in profiles] == [0]


def test_unusable_days_skipped():
    day = np.ones(24)
    m = _matrix([day, day])
    m = ingest.DayMatrix(values=m.values, gap_mask=m.gap_mask, start_date=m.start_date,
                         interval=m.interval, usable=np.array([False, True]))
    profiles = preprocess.mask_resample(m, _geometry(2))
    assert [p.day_index for p in profiles] == [1]


# ── normalize ────────────────────────────────────────────────────────────────

def test_normalize_constant_data():
    values = np.full(256, 4.0)
    values[[0, -1]] = 0.0
    normalized, scale = preprocess.normalize([_profile(values, 0, 0), _profile(values, 1, 0)])
    assert scale == 4.0
    np.testing.assert_allclose(normalized[0].values[1:-1], 1.0)


def test_normalize_robust_to_outlier(rng):
    profiles = [_profile(np.concatenate([[0], rng.uniform(0.5, 1.0, 254), [0]]), d, 0)
                for d in range(10)]
    _, base = preprocess.normalize(profiles)
    spiked = profiles[3].values.copy()
    spiked[100] *= 100.0
    profiles[3] = _profile(spiked, 3, 0)
    normalized, scale = preprocess.normalize(profiles)
    assert scale == pytest.approx(base, rel=0.02)
    assert normalized[3].values.max() <= PrepSettings().clip_max


def test_normalize_all_zero():
    with pytest.raises(InvalidDataError):
        preprocess.normalize([_profile(np.zeros(256), 0, 0)])


def test_normalize_without_clear_days_uses_all():
    values = np.full(256, 2.0)
    _, scale = preprocess.normalize([_profile(values, 0, 0, clear=False)])
    assert scale == 2.0


# ── bin_average ──────────────────────────────────────────────────────────────

def test_identical_profiles_average_to_themselves():
    shape = np.sin(np.linspace(0, np.pi, 256))
    profiles = [_profile(shape, 0, 5), _profile(shape, 1, 5), _profile(shape * 0.2, 2, 5, clear=False)]
    geo = _geometry(3, bins=[5, 5, 5])
    ts = preprocess.bin_average(profiles, geo, settings=PrepSettings(min_known_rows=1))
    np.testing.assert_allclose(ts.y[5], shape)
    assert ts.bin_members[5] == [0, 1]
    assert ts.bin_day_length[5] == pytest.approx(12.0)


def test_empty_bin_is_missing_row():
    shape = np.sin(np.linspace(0, np.pi, 256))
    geo = _geometry(2, bins=[3, 4])
    ts = preprocess.bin_average([_profile(shape, 0, 3), _profile(shape, 1, 4, clear=False)], geo,
                                settings=PrepSettings(min_known_rows=1))
    assert ts.y.shape == (47, 256)
    assert ts.known_rows[3] and not ts.known_rows[4]
    assert np.isnan(ts.y[4]).all()
    assert not ts.known_mask[4].any()
    assert np.isnan(ts.bin_day_length[4])


def test_too_few_bins():
    shape = np.sin(np.linspace(0, np.pi, 256))
    with pytest.raises(InsufficientCoverageError):
        preprocess.bin_average([_profile(shape, 0, 3)], _geometry(1, bins=[3]))


# ── Clear days and the full chain ────────────────────────────────────────────

def test_clear_day_versus_noisy_half_day():
    rows = np.arange(288)
    clear = np.clip(np.sin(np.pi * (rows - 72) / 144), 0.0, None) * 4.0
    rng = np.random.default_rng(3)
    noisy = clear * 0.5 * (1.0 + 0.3 * rng.standard_normal(288))
    noisy = np.clip(noisy, 0.0, None)
    columns = [clear] * 6 + [noisy]
    m = _matrix(columns, interval=300)
    geo = _geometry(7, sunrise=72, sunset=216, interval=300, bins=[10] * 7)
    flags = preprocess.detect_clear_days(m, geo)
    assert flags[:6].all()
    assert not flags[6]


def test_cloudy_labels_recovered(cloudy_case, cloudy_prepared):
    _, labels = cloudy_case
    clear = cloudy_prepared.clear
    assert len(clear) == len(labels)
    cloudy = ~labels
    assert np.mean(~clear[cloudy]) >= 0.9


def test_prepared_signal_shape_and_bounds(cloudy_prepared):
    ts = cloudy_prepared.signal
    assert ts.shape == (47, 256)
    known = ts.known_rows
    assert known.sum() >= 45
    rows = ts.y[known]
    assert np.all((rows >= 0) & (rows <= 1.05))
    np.testing.assert_allclose(rows[:, [0, -1]], 0.0, atol=1e-9)
    # each row is either fully known or fully missing
    assert np.all(ts.known_mask.all(axis=1) | ~ts.known_mask.any(axis=1))


def test_clear_year_fills_every_bin(clear_prepared):
    assert clear_prepared.signal.known_rows.all()
    assert clear_prepared.clear.sum() >= 0.9 * clear_prepared.matrix.n_days


def test_preparation_is_deterministic(clear_series, clear_prepared):
    again = preprocess.prepare_signal(clear_series)
    assert again.signal.params_hash == clear_prepared.signal.params_hash
    np.testing.assert_array_equal(again.signal.y, clear_prepared.signal.y)


def test_params_hash_tracks_settings(clear_series, clear_prepared):
    other = preprocess.prepare_signal(clear_series, PrepSettings(energy_factor=0.7))
    assert other.signal.params_hash != clear_prepared.signal.params_hash


def test_signal_export_reads_back(tmp_path, cloudy_prepared):
    ts = cloudy_prepared.signal
    paths = preprocess.save_signal(ts, tmp_path)
    assert paths["y"].read_text().startswith(f"# params_hash: {ts.params_hash}")
    back = preprocess.load_signal(tmp_path)
    np.testing.assert_array_equal(back.y, ts.y)
    np.testing.assert_array_equal(back.known_mask, ts.known_mask)
    assert back.scale == ts.scale
    assert back.bin_members == ts.bin_members
