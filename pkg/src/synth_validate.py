"""
Synthetic PV systems with known shade losses.

Simulates clear-sky power for a system geometry, blocks part of the beam
irradiance behind obstructions, scales random days by a cloud profile and
reduces the result into per-bin ground-truth losses. Also provides small
random decomposition problems and an independent conic formulation of
the same objective used to cross-check the main solver.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Tuple

import cvxpy as cp
import numpy as np
import pandas as pd

import solar_geometry as sg
from clearsky_corpus import ClearSkyParams, clearsky_irradiance, fit_corpus, poa_components
from errors import ArgumentError, ShadeAnalysisError, UnsupportedLatitudeError
from ingest import SECONDS_PER_DAY, RawSeries
from matrix_io import write_document, write_table
from sd_engine import SdParams, SdProblem, build_problem_from_arrays

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SystemGeometry:
    latitude: float = 34.0
    longitude: float = -118.0
    tilt: float = 20.0
    azimuth: float = 180.0   # 0 = north, clockwise
    capacity: float = 5.0    # kW at 1000 W/m^2

    def __post_init__(self):
        if not 0 <= self.tilt <= 90:
            raise ArgumentError(f"tilt must be in [0, 90], got {self.tilt}")
        if not 0 <= self.azimuth < 360:
            raise ArgumentError(f"azimuth must be in [0, 360), got {self.azimuth}")
        if self.capacity <= 0:
            raise ArgumentError(f"capacity must be positive, got {self.capacity}")
        if abs(self.latitude) >= sg.MAX_LATITUDE:
            raise UnsupportedLatitudeError(f"Latitude {self.latitude} is polar")


@dataclass(frozen=True)
class ObstructionSegment:
    azimuth_lo: float
    azimuth_hi: float
    elevation_threshold: float
    beam_block_fraction: float = 1.0

    def __post_init__(self):
        if not self.azimuth_lo < self.azimuth_hi:
            raise ArgumentError("azimuth_lo must be smaller than azimuth_hi")
        if not 0 <= self.elevation_threshold <= 90:
            raise ArgumentError("elevation_threshold must be in [0, 90]")
        if not 0 <= self.beam_block_fraction <= 1:
            raise ArgumentError("beam_block_fraction must be in [0, 1]")


@dataclass(frozen=True)
class Obstruction:
    segments: Tuple[ObstructionSegment, ...] = ()

    @classmethod
    def southern(cls, elevation_threshold: float = 40.0, fraction: float = 1.0,
                 azimuth_lo: float = 150.0, azimuth_hi: float = 210.0) -> "Obstruction":
        return cls((ObstructionSegment(azimuth_lo, azimuth_hi, elevation_threshold, fraction),))

    @classmethod
    def tree_line(cls, elevation_threshold: float = 45.0, fraction: float = 1.0) -> "Obstruction":
        """Obstruction along the whole southern half of the horizon (east through west)."""
        return cls.southern(elevation_threshold, fraction, 90.0, 270.0)

    def blocked_fraction(self, sun: sg.SunPosition) -> np.ndarray:
        """Fraction of beam irradiance blocked at each sun position."""
        fraction = np.zeros(np.shape(sun.zenith))
        for seg in self.segments:
            hit = ((sun.azimuth >= seg.azimuth_lo) & (sun.azimuth <= seg.azimuth_hi)
                   & (sun.elevation < seg.elevation_threshold))
            fraction = np.where(hit, np.maximum(fraction, seg.beam_block_fraction), fraction)
        return fraction


@dataclass(frozen=True)
class ShadeInjection:
    """Per-day energy bookkeeping of a shade injection (kWh)."""
    dates: np.ndarray
    unshaded_kwh: np.ndarray
    shaded_kwh: np.ndarray
    loss_kwh: np.ndarray


@dataclass(frozen=True)
class GroundTruth:
    per_bin_loss_ref: np.ndarray
    yearly_loss_ref: float
    yearly_energy_ref: float
    clear_day_labels: np.ndarray
    per_bin_energy_ref: np.ndarray = field(default=None)

    def as_reference(self):
        from shade_report import ShadeReference
        return ShadeReference(self.per_bin_loss_ref, self.yearly_loss_ref, self.yearly_energy_ref)

    @property
    def loss_fraction(self) -> float:
        if self.yearly_energy_ref <= 0:
            return 0.0
        return 100.0 * self.yearly_loss_ref / self.yearly_energy_ref


# --- Simulation ---

def _daily_energy(series: RawSeries) -> Tuple[np.ndarray, np.ndarray]:
    days = series.timestamps.astype("datetime64[D]")
    dates, index = np.unique(days, return_inverse=True)
    energy = np.bincount(index, weights=np.nan_to_num(series.power), minlength=len(dates))
    return dates, energy * series.interval / 3600.0


def _poa_parts(series: RawSeries, g: SystemGeometry, params: ClearSkyParams):
    sun = sg.sun_position(g.latitude, g.longitude, series.timestamps)
    irr = clearsky_irradiance(sun.zenith, params)
    return sun, poa_components(sun, irr, g.tilt, g.azimuth, params.albedo)


def simulate_system(g: SystemGeometry, years: int = 2, interval: int = 300,
                    params: ClearSkyParams = ClearSkyParams(),
                    start: str = "2019-01-01") -> RawSeries:
    """Clear-sky power of a system, in kW, on a regular local-standard-time grid."""
    if years < 2:
        raise ArgumentError(f"At least two simulated years are needed, got {years}")
    if interval <= 0 or SECONDS_PER_DAY % interval != 0:
        raise ArgumentError(f"interval must divide a day, got {interval}")
    first = pd.Timestamp(start)
    n_days = (first + pd.DateOffset(years=years) - first).days
    n = n_days * SECONDS_PER_DAY // interval
    timestamps = (np.datetime64(first.to_datetime64(), "s")
                  + np.arange(n, dtype=np.int64) * np.timedelta64(interval, "s"))
    series = RawSeries(timestamps=timestamps, power=np.zeros(n), interval=interval)
    _, (beam, sky, ground) = _poa_parts(series, g, params)
    return replace(series, power=g.capacity * (beam + sky + ground) / 1000.0)


def inject_shade(series: RawSeries, g: SystemGeometry, obs: Obstruction,
                 params: ClearSkyParams = ClearSkyParams()) -> Tuple[RawSeries, ShadeInjection]:
    """Remove the blocked share of beam power whenever the sun is behind an obstruction."""
    dates, unshaded = _daily_energy(series)
    if not obs.segments:
        return series, ShadeInjection(dates, unshaded, unshaded.copy(), np.zeros_like(unshaded))
    sun, (beam, _, _) = _poa_parts(series, g, params)
    loss = g.capacity * beam / 1000.0 * obs.blocked_fraction(sun)
    shaded = replace(series, power=np.maximum(series.power - loss, 0.0))
    _, shaded_energy = _daily_energy(shaded)
    return shaded, ShadeInjection(dates, unshaded, shaded_energy, unshaded - shaded_energy)


def inject_weather(series: RawSeries, cloud_prob: float = 0.35,
                   seed: int = 0) -> Tuple[RawSeries, np.ndarray]:
    """
    Make random days cloudy. Returns the new series and per-day clear labels.

    Cloudy days are multiplied by a smooth clearness profile in [0.15, 0.8].
    """
    if not 0 <= cloud_prob <= 1:
        raise ArgumentError(f"cloud_prob must be in [0, 1], got {cloud_prob}")
    rng = np.random.default_rng(seed)
    days = series.timestamps.astype("datetime64[D]")
    dates, index = np.unique(days, return_inverse=True)
    n_days = len(dates)

    cloudy = rng.random(n_days) < cloud_prob
    base = rng.uniform(0.3, 0.6, n_days)
    amps = rng.uniform(0.05, 0.25, (n_days, 3))
    freqs = rng.uniform(1.0, 6.0, (n_days, 3))
    phases = rng.uniform(0.0, 2 * np.pi, (n_days, 3))

    if not cloudy.any():
        return series, ~cloudy
    frac = (series.timestamps - days).astype("timedelta64[s]").astype(np.int64) / SECONDS_PER_DAY
    waves = amps[index] * np.sin(2 * np.pi * freqs[index] * frac[:, None] + phases[index])
    clearness = np.clip(base[index] + waves.sum(axis=1), 0.15, 0.8)
    factor = np.where(cloudy[index], clearness, 1.0)
    return replace(series, power=series.power * factor), ~cloudy


def build_ground_truth(injection: ShadeInjection, clear_labels: np.ndarray) -> GroundTruth:
    """Per-bin mean clear-day losses, missing bins interpolated, and yearly totals."""
    clear_labels = np.asarray(clear_labels, dtype=bool)
    doy = pd.DatetimeIndex(injection.dates).dayofyear.to_numpy()
    bins = sg.bin_declination(sg.declination(doy))
    loss = np.full(sg.N_BINS, np.nan)
    energy = np.full(sg.N_BINS, np.nan)
    for b in range(sg.N_BINS):
        members = clear_labels & (bins == b)
        if members.any():
            loss[b] = injection.loss_kwh[members].mean()
            energy[b] = injection.unshaded_kwh[members].mean()
    known = np.isfinite(loss)
    if not known.any():
        raise ArgumentError("No clear days to build a ground truth from")
    idx = np.flatnonzero(known)
    grid = np.arange(sg.N_BINS)
    loss = np.interp(grid, idx, loss[idx])
    energy = np.interp(grid, idx, energy[idx])
    counts = sg.bin_day_counts()
    return GroundTruth(per_bin_loss_ref=loss,
                       yearly_loss_ref=float(np.sum(loss * counts)),
                       yearly_energy_ref=float(np.sum(energy * counts)),
                       clear_day_labels=clear_labels,
                       per_bin_energy_ref=energy)


def save_ground_truth(gt: GroundTruth, out_dir: Path, params_hash: str = "") -> Dict[str, Path]:
    """Ground truth in the same layout as the shade report."""
    out_dir = Path(out_dir)
    table = pd.DataFrame({
        "bin": np.arange(sg.N_BINS),
        "declination_deg": sg.bin_centers(),
        "loss_kwh": gt.per_bin_loss_ref,
        "reference_kwh": np.full(sg.N_BINS, np.nan),
    })
    return {
        "json": write_document(out_dir / "ground_truth.json", {
            "params_hash": params_hash,
            "per_bin_loss_kwh": gt.per_bin_loss_ref,
            "per_bin_energy_kwh": gt.per_bin_energy_ref,
            "yearly_loss_kwh": gt.yearly_loss_ref,
            "yearly_energy_kwh": gt.yearly_energy_ref,
            "loss_fraction_pct": gt.loss_fraction,
            "clear_days": int(gt.clear_day_labels.sum()),
            "days": int(len(gt.clear_day_labels)),
        }),
        "table": write_table(out_dir / "ground_truth_by_bin.csv", table, params_hash),
    }


# --- Solver cross-check ---

TINY_PARAMS = SdParams(lambda_2a=0.05, lambda_2b=0.5, lambda_3=0.2,
                       weight_mode="eigenvalue-inverse-sqrt",
                       abs_tol=1e-9, rel_tol=1e-8, max_iter=20000)


def tiny_instance(seed: int, T: int = 6, p: int = 8, k: int = 2,
                  params: SdParams = TINY_PARAMS) -> SdProblem:
    """Small random problem: concave bell-shaped corpus, shaded and noisy signal."""
    rng = np.random.default_rng(seed)
    s = np.linspace(0.0, 1.0, p)
    amplitude = rng.uniform(0.2, 1.8, (200, 1))
    exponent = rng.uniform(0.7, 1.5, (200, 1))
    bell = np.sin(np.pi * s)
    bell[[0, -1]] = 0.0
    corpus = fit_corpus(amplitude * bell[None, :] ** exponent, k)

    seasonal = 0.8 + 0.2 * np.sin(np.pi * (np.arange(T) + 0.5) / T)
    y = seasonal[:, None] * corpus.mu[None, :]
    shade = np.zeros((T, p))
    shade[: T // 2 + 1, 1: p // 2] = rng.uniform(0.15, 0.3)
    y = y - shade * y + rng.normal(0.0, 0.01, (T, p))
    y[:, [0, -1]] = 0.0
    y = np.maximum(y, 0.0)
    return build_problem_from_arrays(y, corpus.mu, corpus.Q, corpus.lam, params)


def _dense_second_diff(n: int) -> np.ndarray:
    d = np.zeros((n - 2, n))
    for j in range(n - 2):
        d[j, j:j + 3] = (1.0, -2.0, 1.0)
    return d


def oracle_solve(prob: SdProblem) -> float:
    """
    Optimal objective of a decomposition problem from a conic solver.

    The problem is written out directly in cvxpy over (Z, x3) and shares no
    code with the ADMM solver. Returns +inf when the solver reports the
    constraint set as empty.
    """
    T, p = prob.shape
    prm = prob.params
    squared = prm.norm_mode == "squared"
    D_t, D_p = _dense_second_diff(T), _dense_second_diff(p)
    known = prob.known_mask.astype(float)
    y = np.where(prob.known_mask, np.nan_to_num(prob.y, nan=0.0), 0.0)
    if prm.weight_mode == "eigenvalue-inverse":
        w = 1.0 / prob.lam
    else:
        w = 1.0 / np.sqrt(prob.lam)

    Z = cp.Variable((T, prob.k))
    x3 = cp.Variable((T, p))
    x2 = np.tile(prob.mu, (T, 1)) + Z @ prob.Q.T

    def norm(expr):
        return cp.sum_squares(expr) if squared else cp.norm(expr, "fro")

    objective = (cp.sum(cp.abs(cp.multiply(known, y - x2 - x3)))
                 + prm.lambda_2a * norm(Z @ np.diag(w))
                 + prm.lambda_2b * norm(D_t @ x2)
                 + prm.lambda_3 * (norm(D_t @ x3) + norm(x3 @ D_p.T)))
    problem = cp.Problem(cp.Minimize(objective), [x2 >= 0, D_t @ x2 <= 0, x3 <= 0])
    problem.solve(solver=cp.CLARABEL)
    if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        logger.warning("Cross-check problem is infeasible")
        return float("inf")
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise ShadeAnalysisError(f"Cross-check solve ended with status {problem.status}")
    return float(problem.value)
