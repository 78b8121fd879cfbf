"""
Clear-sky corpus.

Simulates normalized clear-sky plane-of-array profiles over a grid of
latitudes, tilts and azimuths (one profile per declination bin) and fits the
low-rank model: mean profile mu, top-k covariance eigenvectors Q and their
eigenvalues.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pvlib
from scipy.linalg import eigh
from tqdm import tqdm

import solar_geometry as sg
from errors import ArgumentError, InputError
from matrix_io import FLOAT_FORMAT

logger = logging.getLogger(__name__)

MINUTES_PER_DAY = 1440
REFERENCE_YEAR = 2019

DEFAULT_LATITUDES = (30.0, 35.0, 40.0)
DEFAULT_TILTS = tuple(float(t) for t in range(5, 61, 5))
DEFAULT_AZIMUTHS = tuple(float(a) for a in range(90, 271, 15))
CORPUS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ClearSkyParams:
    aod700: float = 0.10
    precipitable_water: float = 1.0  # cm
    pressure: float = 101325.0       # Pa
    albedo: float = 0.2

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not np.isfinite(value) or value < 0:
                raise ArgumentError(f"{name} must be finite and nonnegative, got {value}")
        if self.aod700 > 1:
            raise ArgumentError(f"aod700 must not exceed 1, got {self.aod700}")
        if self.pressure == 0:
            raise ArgumentError("pressure must be positive")


@dataclass
class ClearSkyCorpus:
    mu: np.ndarray
    Q: np.ndarray        # p x k, orthonormal columns
    lam: np.ndarray      # k, descending
    requested_k: int
    total_variance: float
    n_profiles: int
    profiles: Optional[np.ndarray] = None
    metadata: Dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.Q.shape[1]

    @property
    def p(self) -> int:
        return len(self.mu)

    def explained_variance(self) -> float:
        """Fraction of the covariance trace captured by the kept eigenpairs."""
        if self.total_variance <= 0:
            return 1.0
        return float(self.lam.sum() / self.total_variance)


# --- Irradiance ---

def clearsky_irradiance(zenith, params: ClearSkyParams = ClearSkyParams()
                        ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Simplified Solis clear-sky model: (ghi, dni, dhi) in W/m^2.

    Zero whenever the sun is at or below the horizon.
    """
    z = np.asarray(zenith, dtype=float)
    flat = z.reshape(-1)
    up = flat < 90.0
    irr = pvlib.clearsky.simplified_solis(
        90.0 - np.where(up, flat, 0.0), aod700=params.aod700,
        precipitable_water=params.precipitable_water, pressure=params.pressure)
    ghi, dni, dhi = (np.where(up, np.nan_to_num(np.asarray(irr[key], dtype=float)), 0.0)
                     for key in ("ghi", "dni", "dhi"))
    if z.ndim == 0:
        return float(ghi[0]), float(dni[0]), float(dhi[0])
    return ghi.reshape(z.shape), dni.reshape(z.shape), dhi.reshape(z.shape)


def poa_components(sun: sg.SunPosition, irr, tilt: float, azimuth: float,
                   albedo: float = 0.2):
    """Isotropic-sky transposition split into (beam, sky diffuse, ground reflected)."""
    if not 0 <= tilt <= 90:
        raise ArgumentError(f"tilt must be in [0, 90], got {tilt}")
    ghi, dni, dhi = (np.asarray(v, dtype=float) for v in irr)
    shape = np.broadcast(ghi, np.asarray(sun.zenith)).shape
    flat = [np.broadcast_to(v, shape).reshape(-1)
            for v in (sun.zenith, sun.azimuth, dni, ghi, dhi)]
    zenith, sun_azimuth, dni, ghi, dhi = flat
    poa = pvlib.irradiance.get_total_irradiance(
        surface_tilt=tilt, surface_azimuth=azimuth,
        solar_zenith=zenith, solar_azimuth=sun_azimuth,
        dni=dni, ghi=ghi, dhi=dhi, albedo=albedo, model="isotropic")
    parts = [np.asarray(poa[key], dtype=float).reshape(shape)
             for key in ("poa_direct", "poa_sky_diffuse", "poa_ground_diffuse")]
    if not shape:
        return tuple(float(v) for v in parts)
    return tuple(parts)


def poa_power(sun: sg.SunPosition, irr, tilt: float, azimuth: float,
              albedo: float = 0.2):
    """Plane-of-array irradiance in W/m^2."""
    beam, sky, ground = poa_components(sun, irr, tilt, azimuth, albedo)
    total = np.asarray(beam) + sky + ground
    return float(total) if np.ndim(total) == 0 else total


# --- Corpus generation ---

def _resample_day(values: np.ndarray, threshold: float, n_samples: int) -> Optional[np.ndarray]:
    above = np.flatnonzero(values > threshold)
    if above.size < 2:
        return None
    grid = np.linspace(above[0], above[-1], n_samples)
    profile = np.interp(grid, np.arange(len(values)), values)
    profile[0] = 0.0
    profile[-1] = 0.0
    return profile


def geometry_profiles(latitude: float, tilt: float, azimuth: float,
                      params: ClearSkyParams = ClearSkyParams(), n_samples: int = 256,
                      threshold_fraction: float = sg.THRESHOLD_FRACTION,
                      scale_percentile: float = 98.0, clip_max: float = 1.05,
                      sky: Optional[Tuple] = None) -> np.ndarray:
    """
    Normalized bin-center profiles (up to 47 rows) for one system geometry,
    simulated at one-minute resolution. Rows that are identically zero are
    left out.
    """
    if sky is None:
        sky = _sky_for_latitude(latitude, params)
    sun, irr = sky
    poa = poa_power(sun, irr, tilt, azimuth, params.albedo)
    level = np.percentile(poa, 98)
    if level <= 0:
        return np.empty((0, n_samples))
    rows = [_resample_day(day, threshold_fraction * level, n_samples) for day in poa]
    rows = np.array([r for r in rows if r is not None]).reshape(-1, n_samples)
    if rows.size == 0:
        return rows
    scale = np.percentile(rows[:, 1:-1], scale_percentile)
    if scale <= 0:
        return np.empty((0, n_samples))
    rows = np.clip(rows / scale, 0.0, clip_max)
    return rows[np.any(rows > 0, axis=1)]


def _sky_for_latitude(latitude: float, params: ClearSkyParams):
    """Sun position and irradiance over the 47 bin-center days (47 x 1440)."""
    days = np.clip(np.rint(sg.bin_center_day_of_year(np.arange(sg.N_BINS))), 1, 365).astype(int)
    dates = np.datetime64(f"{REFERENCE_YEAR}-01-01", "m") + (days - 1) * np.timedelta64(1, "D")
    stamps = (dates[:, None] + np.arange(MINUTES_PER_DAY) * np.timedelta64(1, "m")).reshape(-1)
    pos = sg.sun_position(latitude, 0.0, stamps)
    shape = (sg.N_BINS, MINUTES_PER_DAY)
    sun = sg.SunPosition(zenith=pos.zenith.reshape(shape), azimuth=pos.azimuth.reshape(shape))
    return sun, clearsky_irradiance(sun.zenith, params)


def generate_corpus(lat_grid: Sequence[float] = DEFAULT_LATITUDES,
                    tilt_grid: Sequence[float] = DEFAULT_TILTS,
                    azimuth_grid: Sequence[float] = DEFAULT_AZIMUTHS,
                    params: ClearSkyParams = ClearSkyParams(),
                    n_samples: int = 256, progress: bool = True) -> np.ndarray:
    """Stack normalized clear-sky profiles for every (latitude, tilt, azimuth, bin)."""
    if not len(lat_grid) or not len(tilt_grid) or not len(azimuth_grid):
        raise ArgumentError("Corpus grids must be nonempty")
    for az in azimuth_grid:
        if not 0 <= az < 360:
            raise ArgumentError(f"azimuth must be in [0, 360), got {az}")

    geometries = [(lat, tilt, az) for lat in lat_grid for tilt in tilt_grid for az in azimuth_grid]
    skies = {lat: _sky_for_latitude(lat, params) for lat in lat_grid}
    blocks = []
    skipped = 0
    for lat, tilt, az in tqdm(geometries, desc="Simulating clear-sky corpus", disable=not progress):
        rows = geometry_profiles(lat, tilt, az, params, n_samples, sky=skies[lat])
        skipped += sg.N_BINS - len(rows)
        blocks.append(rows)
    if skipped:
        logger.info("%d all-zero corpus rows skipped", skipped)
    return np.vstack(blocks)


# --- Fitting ---

def fit_corpus(profiles: np.ndarray, k: int = 6, tol: float = 1e-10) -> ClearSkyCorpus:
    """
    Mean, covariance eigendecomposition and top-k eigenpairs of the profiles.

    Eigenpairs with eigenvalue at or below `tol` are not kept, so the
    effective k can be smaller than requested.
    """
    profiles = np.asarray(profiles, dtype=float)
    if k < 1:
        raise ArgumentError(f"k must be at least 1, got {k}")
    n, p = profiles.shape
    if n <= p:
        raise ArgumentError(f"Corpus needs more rows than columns ({n} <= {p})")

    mu = profiles.mean(axis=0)
    sigma = np.cov(profiles, rowvar=False, bias=True)
    eigvals, eigvecs = eigh(sigma)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]

    keep = min(k, int(np.sum(eigvals > tol)))
    lam = eigvals[:keep].copy()
    Q = eigvecs[:, :keep].copy()
    for j in range(keep):
        if Q[np.argmax(np.abs(Q[:, j])), j] < 0:
            Q[:, j] = -Q[:, j]
    # profiles vanish at sunrise and sunset
    if np.all(profiles[:, 0] == 0):
        Q[0, :] = 0.0
        mu[0] = 0.0
    if np.all(profiles[:, -1] == 0):
        Q[-1, :] = 0.0
        mu[-1] = 0.0
    if keep < k:
        logger.warning("Covariance has only %d eigenvalues above %g; effective k = %d",
                       keep, tol, keep)
    return ClearSkyCorpus(mu=mu, Q=Q, lam=lam, requested_k=k,
                          total_variance=float(np.trace(sigma)), n_profiles=n,
                          profiles=profiles)


def reconstruction_error(corpus: ClearSkyCorpus, profiles: np.ndarray) -> float:
    """Mean relative error of projecting profiles onto the corpus subspace."""
    centered = np.asarray(profiles, dtype=float) - corpus.mu
    residual = centered - centered @ corpus.Q @ corpus.Q.T
    norms = np.linalg.norm(centered, axis=1)
    ok = norms > 0
    if not ok.any():
        return 0.0
    return float(np.mean(np.linalg.norm(residual[ok], axis=1) / norms[ok]))


# --- Artifact ---

def _format_row(values) -> str:
    return ",".join(FLOAT_FORMAT % v for v in values)


def save_corpus(corpus: ClearSkyCorpus, path: Path) -> Path:
    """
    Text artifact: a JSON header line, then [mu], [lambda] and [Q] blocks of
    comma-delimited numbers.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": "clearsky-corpus",
        "version": CORPUS_FORMAT_VERSION,
        "p": corpus.p,
        "k": corpus.k,
        "requested_k": corpus.requested_k,
        "n_profiles": corpus.n_profiles,
        "total_variance": float(FLOAT_FORMAT % corpus.total_variance),
        **corpus.metadata,
    }
    lines = [json.dumps(header, sort_keys=True), "[mu]", _format_row(corpus.mu),
             "[lambda]", _format_row(corpus.lam), "[Q]"]
    lines.extend(_format_row(row) for row in corpus.Q)
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")
    return path


def load_corpus(path: Path) -> ClearSkyCorpus:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Corpus file does not exist: {path}")
    with open(path) as f:
        lines = f.read().splitlines()
    try:
        header = json.loads(lines[0])
        mu_at, lam_at, q_at = lines.index("[mu]"), lines.index("[lambda]"), lines.index("[Q]")
    except (ValueError, IndexError) as e:
        raise InputError(f"Not a corpus artifact: {path} ({e})")
    if header.get("format") != "clearsky-corpus":
        raise InputError(f"Not a corpus artifact: {path}")

    def parse(line: str) -> np.ndarray:
        return np.array([float(v) for v in line.split(",")]) if line else np.empty(0)

    p, k = int(header["p"]), int(header["k"])
    mu = parse(lines[mu_at + 1])
    lam = parse(lines[lam_at + 1]) if lam_at + 1 < q_at else np.empty(0)
    q_rows = lines[q_at + 1:q_at + 1 + p]
    Q = np.array([parse(row) for row in q_rows]).reshape(p, k)
    metadata = {key: value for key, value in header.items()
                if key not in {"format", "version", "p", "k", "requested_k",
                               "n_profiles", "total_variance"}}
    return ClearSkyCorpus(mu=mu, Q=Q, lam=lam, requested_k=int(header["requested_k"]),
                          total_variance=float(header["total_variance"]),
                          n_profiles=int(header["n_profiles"]), metadata=metadata)


def corpus_fingerprint(path: Path) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def build_default_corpus(k: int = 6, params: ClearSkyParams = ClearSkyParams(),
                         lat_grid: Sequence[float] = DEFAULT_LATITUDES,
                         tilt_grid: Sequence[float] = DEFAULT_TILTS,
                         azimuth_grid: Sequence[float] = DEFAULT_AZIMUTHS,
                         progress: bool = True) -> ClearSkyCorpus:
    """Generate and fit in one step, recording the grids in the metadata."""
    profiles = generate_corpus(lat_grid, tilt_grid, azimuth_grid, params, progress=progress)
    corpus = fit_corpus(profiles, k)
    corpus.metadata = {
        "latitudes": [float(v) for v in lat_grid],
        "tilts": [float(v) for v in tilt_grid],
        "azimuths": [float(v) for v in azimuth_grid],
        "clearsky_params": asdict(params),
    }
    return corpus
