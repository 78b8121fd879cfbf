"""
Data preparation: clear-day detection, daytime masking and resampling,
normalization and declination-bin averaging.

The end product is a TransformedSignal: a 47 x 256 matrix in which each row
is the mean normalized clear-day profile of one declination bin, and rows
without clear days are entirely missing.
"""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

import ingest
import solar_geometry as sg
from errors import ArgumentError, InsufficientCoverageError, InvalidDataError
from matrix_io import fingerprint, read_document, read_matrix, write_document, write_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PrepSettings:
    """Tunable constants of the preparation chain."""
    n_bins: int = sg.N_BINS
    n_samples: int = 256
    # clear-day detection
    smooth_factor: float = 3.0
    smooth_percentile: float = 10.0
    energy_factor: float = 0.8
    energy_percentile: float = 90.0
    energy_bin_window: int = 2
    # masking / gap handling
    min_day_hours: float = 4.0
    max_daytime_missing: float = ingest.MAX_DAYTIME_MISSING
    threshold_fraction: float = sg.THRESHOLD_FRACTION
    q_sunrise: float = sg.SUNRISE_QUANTILE
    q_sunset: float = sg.SUNSET_QUANTILE
    kappa: float = sg.SMOOTHING_KAPPA
    # normalization / binning
    scale_percentile: float = 98.0
    clip_max: float = 1.05
    min_known_rows: int = 24
    min_days: int = ingest.MIN_DAYS

    def __post_init__(self):
        if self.n_samples < 3:
            raise ArgumentError("n_samples must be at least 3")
        if not 0 < self.scale_percentile <= 100:
            raise ArgumentError("scale_percentile must be in (0, 100]")
        if self.min_known_rows < 0 or self.min_known_rows > self.n_bins:
            raise ArgumentError("min_known_rows must be between 0 and n_bins")
        for name in ("smooth_factor", "energy_factor", "min_day_hours", "kappa", "clip_max"):
            if getattr(self, name) <= 0:
                raise ArgumentError(f"{name} must be positive")


@dataclass(frozen=True)
class DayProfile:
    values: np.ndarray  # n_samples points from sunrise to sunset
    day_index: int
    bin_index: int
    clear_flag: bool


@dataclass(frozen=True)
class TransformedSignal:
    """Bin-averaged, normalized input of the decomposition."""
    y: np.ndarray                  # n_bins x n_samples, NaN rows are missing
    known_mask: np.ndarray         # same shape, True on known rows
    scale: float                   # kW
    bin_members: List[List[int]]   # day indices averaged into each row
    bin_day_length: np.ndarray     # hours, NaN on missing rows
    params_hash: str = ""

    @property
    def known_rows(self) -> np.ndarray:
        return self.known_mask.all(axis=1)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.y.shape


@dataclass
class PreparedData:
    """All intermediate products of prepare_signal."""
    series: ingest.RawSeries
    matrix: ingest.DayMatrix
    sun: sg.SunTimes
    geometry: sg.DayGeometry
    clear: np.ndarray
    profiles: List[DayProfile]
    signal: TransformedSignal
    settings: PrepSettings = field(default_factory=PrepSettings)


# --- Clear days ---

def _daytime_rows(sunrise: float, sunset: float, n_rows: int) -> slice:
    start = max(int(np.ceil(sunrise)), 0)
    stop = min(int(np.floor(sunset)) + 1, n_rows)
    return slice(start, stop)


def detect_clear_days(m: ingest.DayMatrix, geo: sg.DayGeometry,
                      settings: PrepSettings = PrepSettings()) -> np.ndarray:
    """
    Flag clear days by two tests: daytime curvature no larger than
    smooth_factor times the bin's low percentile, and daily energy at least
    energy_factor times the high percentile of neighboring bins.
    """
    n_days = m.n_days
    roughness = np.full(n_days, np.nan)
    energy = np.zeros(n_days)
    usable = np.asarray(m.usable, dtype=bool)
    for d in np.flatnonzero(usable):
        profile = m.values[_daytime_rows(geo.sunrise_idx[d], geo.sunset_idx[d], m.n_per_day), d]
        energy[d] = m.values[:, d].sum() * m.interval / 3600.0
        if profile.size >= 3 and energy[d] > 0:
            roughness[d] = np.mean(np.abs(np.diff(profile, n=2)))

    candidates = usable & np.isfinite(roughness)
    clear = np.zeros(n_days, dtype=bool)
    bins = np.asarray(geo.bin_index)
    for b in np.unique(bins[candidates]):
        in_bin = candidates & (bins == b)
        near = candidates & (np.abs(bins - b) <= settings.energy_bin_window)
        smooth_limit = settings.smooth_factor * np.percentile(roughness[in_bin],
                                                              settings.smooth_percentile)
        energy_limit = settings.energy_factor * np.percentile(energy[near],
                                                              settings.energy_percentile)
        clear[in_bin] = (roughness[in_bin] <= smooth_limit) & (energy[in_bin] >= energy_limit)
    return clear


# --- Masking and resampling ---

def mask_resample(m: ingest.DayMatrix, geo: sg.DayGeometry,
                  clear: Optional[np.ndarray] = None,
                  settings: PrepSettings = PrepSettings()) -> List[DayProfile]:
    """Resample each usable day between sunrise and sunset onto n_samples points."""
    if clear is None:
        clear = np.zeros(m.n_days, dtype=bool)
    rows = np.arange(m.n_per_day)
    profiles = []
    dropped = 0
    for d in np.flatnonzero(np.asarray(m.usable, dtype=bool)):
        if geo.day_length[d] < settings.min_day_hours:
            dropped += 1
            continue
        grid = np.linspace(geo.sunrise_idx[d], geo.sunset_idx[d], settings.n_samples)
        values = np.interp(grid, rows, m.values[:, d])
        values[0] = 0.0
        values[-1] = 0.0
        profiles.append(DayProfile(values=values, day_index=int(d),
                                   bin_index=int(geo.bin_index[d]),
                                   clear_flag=bool(clear[d])))
    if dropped:
        logger.info("%d days shorter than %.1f h dropped", dropped, settings.min_day_hours)
    return profiles


def normalize(profiles: List[DayProfile],
              settings: PrepSettings = PrepSettings()) -> Tuple[List[DayProfile], float]:
    """Divide every profile by a high percentile of clear-day daytime samples."""
    if not profiles:
        raise InvalidDataError("No day profiles to normalize")
    reference = [p for p in profiles if p.clear_flag]
    if not reference:
        logger.warning("No clear days found; normalizing against all days")
        reference = profiles
    samples = np.concatenate([p.values[1:-1] for p in reference])
    scale = float(np.percentile(samples, settings.scale_percentile))
    if not np.isfinite(scale) or scale <= 0:
        raise InvalidDataError(f"Normalization scale is {scale}; data holds no usable power")
    normalized = [
        DayProfile(values=np.clip(p.values / scale, 0.0, settings.clip_max),
                   day_index=p.day_index, bin_index=p.bin_index, clear_flag=p.clear_flag)
        for p in profiles
    ]
    return normalized, scale


def bin_average(profiles: List[DayProfile], geo: sg.DayGeometry, scale: float = 1.0,
                settings: PrepSettings = PrepSettings(),
                params_hash: str = "") -> TransformedSignal:
    """Average clear-day profiles per declination bin; empty bins become missing rows."""
    n_bins, p = settings.n_bins, settings.n_samples
    y = np.full((n_bins, p), np.nan)
    members: List[List[int]] = [[] for _ in range(n_bins)]
    day_length = np.full(n_bins, np.nan)

    for prof in profiles:
        if prof.clear_flag:
            members[prof.bin_index].append(prof.day_index)
    by_day = {prof.day_index: prof for prof in profiles}
    for b in range(n_bins):
        if members[b]:
            y[b] = np.mean([by_day[d].values for d in members[b]], axis=0)
            day_length[b] = float(np.mean(geo.day_length[members[b]]))

    known = np.repeat(np.isfinite(y[:, :1]), p, axis=1)
    n_known = int(known[:, 0].sum())
    if n_known < settings.min_known_rows:
        raise InsufficientCoverageError(
            f"Only {n_known} of {n_bins} declination bins hold clear days; "
            f"{settings.min_known_rows} are required")
    if n_known < n_bins:
        logger.info("%d declination bins have no clear days", n_bins - n_known)
    return TransformedSignal(y=y, known_mask=known, scale=float(scale),
                             bin_members=members, bin_day_length=day_length,
                             params_hash=params_hash)


# --- Whole chain ---

def prepare_signal(series: ingest.RawSeries,
                   settings: PrepSettings = PrepSettings()) -> PreparedData:
    """Regularize, embed, fill, classify, resample, normalize and bin a series."""
    regular = ingest.regularize(series)
    raw = ingest.embed(regular)
    sun = sg.detect_sunrise_sunset(raw, settings.threshold_fraction, settings.q_sunrise,
                                   settings.q_sunset, settings.kappa)
    matrix = ingest.fill_gaps(raw, sun, settings.max_daytime_missing)
    geometry = sg.day_geometry(matrix, sun)
    clear = detect_clear_days(matrix, geometry, settings)
    profiles = mask_resample(matrix, geometry, clear, settings)
    profiles, scale = normalize(profiles, settings)
    params_hash = fingerprint(asdict(settings),
                              regular.timestamps.astype(np.int64), regular.power)
    signal = bin_average(profiles, geometry, scale, settings, params_hash)
    logger.info("Prepared signal: %d days, %d clear, scale %.4g kW",
                matrix.n_days, int(clear.sum()), scale)
    return PreparedData(series=regular, matrix=matrix, sun=sun, geometry=geometry,
                        clear=clear, profiles=profiles, signal=signal, settings=settings)


def save_signal(ts: TransformedSignal, out_dir: Path, stem: str = "transformed") -> Dict[str, Path]:
    """Write y as delimited text plus a JSON sidecar with the bookkeeping."""
    out_dir = Path(out_dir)
    matrix_path = write_matrix(out_dir / f"{stem}_y.csv", ts.y, ts.params_hash)
    meta_path = write_document(out_dir / f"{stem}_meta.json", {
        "params_hash": ts.params_hash,
        "scale_kw": ts.scale,
        "shape": list(ts.y.shape),
        "bin_members": ts.bin_members,
        "bin_day_length_h": ts.bin_day_length,
    })
    return {"y": matrix_path, "meta": meta_path}


def load_signal(out_dir: Path, stem: str = "transformed") -> TransformedSignal:
    out_dir = Path(out_dir)
    y = read_matrix(out_dir / f"{stem}_y.csv")
    meta = read_document(out_dir / f"{stem}_meta.json")
    day_length = np.array([np.nan if v is None else v for v in meta["bin_day_length_h"]])
    known = np.repeat(np.isfinite(y[:, :1]), y.shape[1], axis=1)
    return TransformedSignal(y=y, known_mask=known, scale=float(meta["scale_kw"]),
                             bin_members=[list(m) for m in meta["bin_members"]],
                             bin_day_length=day_length, params_hash=meta["params_hash"])
