"""
Solar geometry helpers.

Declination and its 47-bin discretization, sun position from pvlib's solar
position algorithm, and data-driven sunrise/sunset estimation by quantile
smoothing of the per-day threshold crossings.
"""

import logging
from dataclasses import dataclass
from datetime import date, datetime
from typing import Union

import cvxpy as cp
import numpy as np
import pandas as pd
import pvlib

from errors import ArgumentError, InvalidDataError, UnsupportedLatitudeError

logger = logging.getLogger(__name__)

N_BINS = 47
MAX_DECLINATION = 23.45
BIN_WIDTH = 2 * MAX_DECLINATION / N_BINS
MAX_LATITUDE = 66.0

SUNRISE_QUANTILE = 0.05
SUNSET_QUANTILE = 0.95
SMOOTHING_KAPPA = 100.0
THRESHOLD_FRACTION = 0.005


@dataclass(frozen=True)
class SunPosition:
    zenith: Union[float, np.ndarray]   # degrees, [0, 180]
    azimuth: Union[float, np.ndarray]  # degrees, [0, 360), 0 = north, clockwise

    @property
    def elevation(self):
        return 90.0 - self.zenith


@dataclass(frozen=True)
class SunTimes:
    """Per-day sunrise/sunset as fractional row indices of a day matrix."""
    sunrise: np.ndarray
    sunset: np.ndarray
    raw_sunrise: np.ndarray  # NaN on days with no threshold crossing
    raw_sunset: np.ndarray


@dataclass(frozen=True)
class DayGeometry:
    """Per-day geometry arrays, one entry per day-matrix column."""
    day_of_year: np.ndarray
    declination: np.ndarray
    bin_index: np.ndarray
    sunrise_idx: np.ndarray
    sunset_idx: np.ndarray
    day_length: np.ndarray  # hours

    def __len__(self) -> int:
        return len(self.day_of_year)


# --- Declination ---

def declination(day_of_year) -> Union[float, np.ndarray]:
    """Cooper's declination in degrees. Day 366 is evaluated as day 365."""
    n = np.asarray(day_of_year)
    if np.any(n < 1) or np.any(n > 366) or np.any(n != np.floor(n)):
        raise ArgumentError(f"Day of year must be an integer in 1..366, got {day_of_year}")
    n = np.minimum(n, 365).astype(float)
    delta = np.degrees(pvlib.solarposition.declination_cooper69(n))
    return float(delta) if np.ndim(delta) == 0 else np.asarray(delta)


def bin_declination(delta) -> Union[int, np.ndarray]:
    """Uniform 47-bin index over [-23.45, 23.45]; values outside are clamped."""
    d = np.asarray(delta, dtype=float)
    idx = np.floor((d + MAX_DECLINATION) / BIN_WIDTH).astype(int)
    idx = np.clip(idx, 0, N_BINS - 1)
    return int(idx) if idx.ndim == 0 else idx


def bin_centers() -> np.ndarray:
    return -MAX_DECLINATION + (np.arange(N_BINS) + 0.5) * BIN_WIDTH


def bin_center_day_of_year(bin_index) -> Union[float, np.ndarray]:
    """Fractional day of year whose declination is the bin center (rising branch)."""
    b = np.asarray(bin_index)
    if np.any(b < 0) or np.any(b >= N_BINS):
        raise ArgumentError(f"Bin index must be in 0..{N_BINS - 1}")
    delta = -MAX_DECLINATION + (b + 0.5) * BIN_WIDTH
    n = np.mod(365.0 * np.arcsin(delta / MAX_DECLINATION) / (2 * np.pi) - 284.0, 365.0)
    n = np.where(n <= 0, n + 365.0, n)
    return float(n) if n.ndim == 0 else n


def bin_day_counts() -> np.ndarray:
    """Number of days of a 365-day year that fall in each bin."""
    return np.bincount(bin_declination(declination(np.arange(1, 366))), minlength=N_BINS)


# --- Sun position ---

def equation_of_time(day_of_year) -> Union[float, np.ndarray]:
    """Spencer's equation of time in minutes."""
    e = pvlib.solarposition.equation_of_time_spencer71(np.asarray(day_of_year, dtype=float))
    return float(e) if np.ndim(e) == 0 else np.asarray(e)


def standard_meridian(longitude: float) -> float:
    return 15.0 * round(longitude / 15.0)


def standard_time_zone(longitude: float) -> str:
    """Fixed-offset zone of the standard meridian nearest `longitude`."""
    hours = int(round(standard_meridian(longitude) / 15.0))
    # Etc/GMT names carry the inverted sign
    return "Etc/GMT" if hours == 0 else f"Etc/GMT{-hours:+d}"


def solar_noon(day: Union[date, datetime], longitude: float) -> float:
    """Local standard clock time of solar noon, in hours."""
    n = pd.Timestamp(day).dayofyear
    correction = 4.0 * (longitude - standard_meridian(longitude)) + equation_of_time(n)
    return 12.0 - correction / 60.0


def _check_latitude(latitude: float):
    if abs(latitude) >= MAX_LATITUDE:
        raise UnsupportedLatitudeError(
            f"Latitude {latitude} is polar; only |latitude| < {MAX_LATITUDE} is supported")


def sun_position(latitude: float, longitude: float, instant) -> SunPosition:
    """
    Sun position for local standard time instant(s); arrays are supported.

    Zenith is geometric, without refraction. Azimuth is measured from north,
    increasing clockwise.
    """
    _check_latitude(latitude)
    stamps = np.atleast_1d(np.asarray(instant, dtype="datetime64[s]")).astype("datetime64[ns]")
    site = pvlib.location.Location(latitude, longitude, tz=standard_time_zone(longitude))
    solpos = site.get_solarposition(pd.DatetimeIndex(stamps).tz_localize(site.tz))
    zenith = solpos["zenith"].to_numpy(dtype=float)
    azimuth = np.mod(solpos["azimuth"].to_numpy(dtype=float), 360.0)
    if np.ndim(instant) == 0:
        return SunPosition(zenith=float(zenith[0]), azimuth=float(azimuth[0]))
    return SunPosition(zenith=zenith, azimuth=azimuth)


# --- Sunrise/sunset estimation ---

def quantile_smooth(r: np.ndarray, q: float, kappa: float = SMOOTHING_KAPPA,
                    weights: np.ndarray = None) -> np.ndarray:
    """
    Smooth a sequence toward its q-quantile envelope.

    Minimizes sum(w * pinball_q(r - f)) + kappa * ||D2 f||^2 as a convex
    program. Entries with zero weight (or NaN in r) are interpolated by the fit.
    """
    r = np.asarray(r, dtype=float)
    n = len(r)
    w0 = np.ones(n) if weights is None else np.asarray(weights, dtype=float).copy()
    w0[~np.isfinite(r)] = 0.0
    r = np.where(np.isfinite(r), r, 0.0)
    if np.count_nonzero(w0) < 2:
        raise InvalidDataError("At least two observations are needed for smoothing")
    if n < 3:
        return r.copy()

    f = cp.Variable(n)
    resid = r - f
    pinball = cp.maximum(q * resid, (q - 1.0) * resid)
    objective = cp.sum(cp.multiply(w0, pinball)) + kappa * cp.sum_squares(cp.diff(f, 2))
    problem = cp.Problem(cp.Minimize(objective))
    try:
        problem.solve(solver=cp.CLARABEL)
    except cp.SolverError as e:
        raise InvalidDataError(f"Quantile smoothing failed: {e}")
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or f.value is None:
        raise InvalidDataError(f"Quantile smoothing ended with status {problem.status}")
    return np.asarray(f.value, dtype=float)


def detect_sunrise_sunset(m, threshold_fraction: float = THRESHOLD_FRACTION,
                          q_sunrise: float = SUNRISE_QUANTILE,
                          q_sunset: float = SUNSET_QUANTILE,
                          kappa: float = SMOOTHING_KAPPA) -> SunTimes:
    """
    Estimate per-day sunrise/sunset row indices of a day matrix.

    Raw estimates are the first and last rows above a fraction of the
    matrix's 98th percentile. Missing entries count as zero. Days without a
    crossing get values from the smoothed fit of their neighbors.
    """
    data = np.nan_to_num(np.asarray(m.values, dtype=float), nan=0.0)
    level = np.percentile(data, 98)
    if level <= 0:
        raise InvalidDataError("Day matrix holds no positive power")
    above = data > threshold_fraction * level
    n_rows = data.shape[0]

    has_sun = above.any(axis=0)
    raw_rise = np.where(has_sun, np.argmax(above, axis=0), np.nan).astype(float)
    raw_set = np.where(has_sun, n_rows - 1 - np.argmax(above[::-1], axis=0), np.nan).astype(float)
    weights = has_sun.astype(float)
    if hasattr(m, "usable"):
        weights = weights * np.asarray(m.usable, dtype=float)

    rise = quantile_smooth(raw_rise, q_sunrise, kappa, weights=weights)
    sset = quantile_smooth(raw_set, q_sunset, kappa, weights=weights)
    rise = np.clip(rise, 0.0, n_rows - 2)
    sset = np.clip(np.maximum(sset, rise + 1.0), 1.0, n_rows - 1)
    if not has_sun.all():
        logger.info("%d days without power above threshold", int((~has_sun).sum()))
    return SunTimes(sunrise=rise, sunset=sset, raw_sunrise=raw_rise, raw_sunset=raw_set)


def day_geometry(m, sun: SunTimes) -> DayGeometry:
    """Assemble per-day geometry for a day matrix."""
    n = m.day_of_year()
    delta = declination(n)
    return DayGeometry(
        day_of_year=n,
        declination=delta,
        bin_index=bin_declination(delta),
        sunrise_idx=np.asarray(sun.sunrise, dtype=float),
        sunset_idx=np.asarray(sun.sunset, dtype=float),
        day_length=(np.asarray(sun.sunset) - np.asarray(sun.sunrise)) * m.interval / 3600.0,
    )
