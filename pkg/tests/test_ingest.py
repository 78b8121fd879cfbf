"""Parsing, regularization, day-matrix embedding and gap filling."""

from datetime import date

import numpy as np
import pytest

import ingest
import solar_geometry as sg
from errors import InputError, InsufficientDataError, UnsupportedCadenceError


def _series(seconds, power, start="2019-01-01T00:00:00"):
    t0 = np.datetime64(start, "s")
    stamps = t0 + np.asarray(seconds, dtype=np.int64) * np.timedelta64(1, "s")
    return ingest.RawSeries(timestamps=stamps, power=np.asarray(power, dtype=float),
                            interval=ingest._modal_spacing(stamps))


def _hourly_text(n_days):
    rows = []
    start = np.datetime64("2019-01-01T00:00", "s")
    for h in range(24 * n_days):
        stamp = start + np.timedelta64(h, "h")
        rows.append(f"{str(stamp)},{1.0 if 8 <= h % 24 <= 16 else 0.0}")
    return "\n".join(rows)


# ── parse_series ─────────────────────────────────────────────────────────────

def test_parse_two_samples():
    s = ingest.parse_series("2019-01-01T08:00,1.2\n2019-01-01T08:05,1.3", min_days=0)
    assert len(s) == 2
    assert s.interval == 300
    np.testing.assert_array_equal(s.power, [1.2, 1.3])


def test_parse_non_numeric_power_is_missing():
    text = "2019-01-01T08:00,1.0\n2019-01-01T08:05,abc\n2019-01-01T08:10,NaN\n2019-01-01T08:15,"
    s = ingest.parse_series(text, min_days=0)
    assert s.power[0] == 1.0
    assert np.isnan(s.power[1:]).all()


def test_parse_header_and_tab_delimiter():
    text = "timestamp\tpower_kw\n2019-01-01T08:00\t2.5\n2019-01-01T08:05\t2.0"
    s = ingest.parse_series(text, min_days=0)
    assert len(s) == 2
    np.testing.assert_array_equal(s.power, [2.5, 2.0])


def test_parse_sorts_clamps_and_keeps_last_duplicate():
    text = ("2019-01-01T08:10,3.0\n"
            "2019-01-01T08:00,-0.4\n"
            "2019-01-01T08:05,1.0\n"
            "2019-01-01T08:05,2.0")
    s = ingest.parse_series(text, min_days=0)
    assert np.all(np.diff(s.timestamps.astype(np.int64)) > 0)
    np.testing.assert_array_equal(s.power, [0.0, 2.0, 3.0])


def test_parse_bad_timestamp_names_line():
    with pytest.raises(InputError, match="line 2"):
        ingest.parse_series("2019-01-01T08:00,1.0\nnot-a-date,2.0", min_days=0)


def test_parse_too_few_days():
    with pytest.raises(InsufficientDataError):
        ingest.parse_series(_hourly_text(30))


def test_parse_empty_input():
    with pytest.raises(InputError):
        ingest.parse_series("", min_days=0)


def test_load_series_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nowhere.csv"):
        ingest.load_series(tmp_path / "nowhere.csv")


def test_write_series_is_readable(tmp_path):
    s = _series([0, 300, 600, 900], [0.0, 1.5, np.nan, 2.25])
    path = ingest.write_series(tmp_path / "series.csv", s)
    back = ingest.load_series(path, min_days=0)
    np.testing.assert_array_equal(back.timestamps, s.timestamps)
    np.testing.assert_array_equal(back.power, s.power)


def test_malformed_first_row_is_not_a_header():
    with pytest.raises(InputError, match="line 1"):
        ingest.parse_series("2019-13-45T08:00,1.0\n2019-01-01T08:05,2.0", min_days=0)


# ── regularize ───────────────────────────────────────────────────────────────

def test_regularize_inserts_missing_slot():
    s = ingest.regularize(_series([0, 300, 600, 1200], [1.0, 2.0, 3.0, 4.0]))
    assert s.interval == 300
    assert len(s) == 5
    assert np.isnan(s.power[3])
    np.testing.assert_array_equal(s.power[[0, 1, 2, 4]], [1.0, 2.0, 3.0, 4.0])
    assert np.all(np.diff(s.timestamps.astype(np.int64)) == 300)


def test_regularize_uniform_is_identity():
    s = _series(np.arange(10) * 300, np.arange(10.0))
    out = ingest.regularize(s)
    np.testing.assert_array_equal(out.timestamps, s.timestamps)
    np.testing.assert_array_equal(out.power, s.power)


def test_regularize_snaps_jitter():
    s = ingest.regularize(_series([0, 300, 600, 910, 1200, 1500], [0, 1, 2, 3, 4, 5]))
    assert len(s) == 6
    np.testing.assert_array_equal(s.power, [0, 1, 2, 3, 4, 5])


def test_regularize_grid_is_midnight_aligned():
    s = ingest.regularize(_series([7, 307, 607, 900], [1.0, 2.0, 3.0, 4.0],
                                  start="2019-01-01T08:00:00"))
    assert s.timestamps[0] == np.datetime64("2019-01-01T08:00:00")
    assert np.all(s.timestamps.astype(np.int64) % 300 == 0)
    np.testing.assert_array_equal(s.power, [1.0, 2.0, 3.0, 4.0])


def test_regularize_first_sample_snaps_forward():
    s = ingest.regularize(_series([0, 300, 600], [1.0, 2.0, 3.0], start="2019-01-01T08:04:10"))
    assert s.timestamps[0] == np.datetime64("2019-01-01T08:05:00")
    assert len(s) == 3


def test_regularize_rejects_odd_cadence():
    with pytest.raises(UnsupportedCadenceError):
        ingest.regularize(_series(np.arange(5) * 420, np.ones(5)))


def test_regularize_needs_two_samples():
    with pytest.raises(InputError):
        ingest.regularize(_series([0], [1.0]))


# ── embed ────────────────────────────────────────────────────────────────────

def test_embed_two_full_days():
    m = ingest.embed(_series(np.arange(576) * 300, np.ones(576)))
    assert m.values.shape == (288, 2)
    assert m.n_per_day * m.interval == ingest.SECONDS_PER_DAY
    assert not m.gap_mask.any()
    assert m.start_date == date(2019, 1, 1)


def test_embed_pads_partial_first_day():
    s = _series(np.arange(288) * 300, np.ones(288), start="2019-01-01T12:00:00")
    m = ingest.embed(s)
    assert m.values.shape == (288, 2)
    assert m.gap_mask[:144, 0].all()
    assert not m.gap_mask[144:, 0].any()
    assert not m.gap_mask[:144, 1].any()
    assert m.gap_mask[144:, 1].all()


def test_embed_round_trip(rng):
    power = rng.uniform(0.0, 5.0, 700)
    s = ingest.regularize(_series(np.arange(700) * 300, power, start="2019-03-04T05:00:00"))
    m = ingest.embed(s)
    flat = m.values.T.ravel()
    padding = m.gap_mask.T.ravel()
    np.testing.assert_array_equal(flat[~padding], s.power)


def test_embed_three_years_with_leap_day():
    n = 1096 * 288
    m = ingest.embed(_series(np.arange(n, dtype=np.int64) * 300, np.zeros(n)))
    assert m.values.shape == (288, 1096)


# ── fill_gaps ────────────────────────────────────────────────────────────────

def _day_matrix(columns):
    values = np.column_stack(columns).astype(float)
    return ingest.DayMatrix(values=values, gap_mask=np.isnan(values),
                            start_date=date(2019, 6, 1), interval=3600)


def _sun(n_days, sunrise=6.0, sunset=18.0):
    rise = np.full(n_days, sunrise)
    sset = np.full(n_days, sunset)
    return sg.SunTimes(sunrise=rise, sunset=sset, raw_sunrise=rise, raw_sunset=sset)


def _clear_day():
    day = np.zeros(24)
    day[6:19] = np.linspace(0.5, 3.5, 13)
    return day


def test_fill_night_gap_with_zero():
    day = _clear_day()
    day[2] = np.nan
    out = ingest.fill_gaps(_day_matrix([day]), _sun(1))
    assert out.values[2, 0] == 0.0
    assert out.usable[0]


def test_fill_daytime_gap_linearly():
    day = _clear_day()
    day[10], day[11], day[12] = 2.0, np.nan, 4.0
    out = ingest.fill_gaps(_day_matrix([day]), _sun(1))
    assert out.values[11, 0] == pytest.approx(3.0)


def test_fully_missing_day_is_unusable():
    out = ingest.fill_gaps(_day_matrix([_clear_day(), np.full(24, np.nan)]), _sun(2))
    assert out.usable.tolist() == [True, False]
    assert np.all(out.values[:, 1] == 0.0)


def test_mostly_missing_daytime_is_unusable():
    day = _clear_day()
    day[7:11] = np.nan
    out = ingest.fill_gaps(_day_matrix([day]), _sun(1))
    assert not out.usable[0]


def test_unbracketed_daytime_gap_is_unusable():
    day = _clear_day()
    day[:8] = np.nan
    out = ingest.fill_gaps(_day_matrix([day]), _sun(1))
    assert not out.usable[0]


def test_fill_gaps_is_idempotent_and_keeps_mask():
    day_a = _clear_day()
    day_a[[1, 9, 20]] = np.nan
    day_b = np.full(24, np.nan)
    m = _day_matrix([day_a, day_b, _clear_day()])
    once = ingest.fill_gaps(m, _sun(3))
    twice = ingest.fill_gaps(once, _sun(3))
    np.testing.assert_array_equal(once.values, twice.values)
    np.testing.assert_array_equal(once.usable, twice.usable)
    np.testing.assert_array_equal(once.gap_mask, m.gap_mask)
    assert np.all(np.isfinite(once.values[:, once.usable]))
    assert np.all(once.values[:, once.usable] >= 0)


# ── scan_series ──────────────────────────────────────────────────────────────

def test_scan_series_summary():
    s = ingest.parse_series(_hourly_text(30), min_days=0)
    summary = ingest.scan_series(s)
    assert summary["samples"] == 720
    assert summary["modal_interval_s"] == 3600
    assert summary["cadence_supported"]
    assert summary["distinct_days"] == 30
    assert not summary["meets_min_days"]
    assert not summary["ready"]
