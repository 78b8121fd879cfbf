"""
Shade-loss reporting.

Converts the shade component back to physical energy per declination bin
and per year, compares an estimate with a reference (RMSE over bins and
relative error against total yearly energy) and writes the report files.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

import solar_geometry as sg
from errors import MetricError, ReportError
from matrix_io import read_document, save_heatmap_image, write_document, write_matrix, write_table

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShadeReference:
    """Per-bin and yearly loss figures another estimate is compared with."""
    per_bin_loss: np.ndarray
    yearly_loss: float
    yearly_energy: float


@dataclass(frozen=True)
class ShadeReport:
    per_bin_loss: np.ndarray     # kWh per representative day
    per_bin_energy: np.ndarray   # kWh per representative day, from x2
    yearly_loss: float           # kWh/yr
    yearly_energy: float         # kWh/yr
    loss_fraction: float         # percent
    interpolated_bins: np.ndarray
    rmse: Optional[float] = None
    re: Optional[float] = None
    params_hash: str = ""

    def as_reference(self) -> ShadeReference:
        return ShadeReference(self.per_bin_loss, self.yearly_loss, self.yearly_energy)


@dataclass(frozen=True)
class ComponentSeries:
    """Decomposition components mapped back onto one day's time grid (kW)."""
    day_index: int
    bin_index: int
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    interpolated: bool


# --- Energy ---

def _fill_missing_bins(values: np.ndarray, known: np.ndarray) -> np.ndarray:
    idx = np.flatnonzero(known)
    if idx.size == 0:
        raise ReportError("All declination bins are missing")
    return np.interp(np.arange(len(values)), idx, values[idx])


def _bin_energy(component: np.ndarray, ts) -> np.ndarray:
    known = ts.known_rows
    p = component.shape[1]
    energy = np.zeros(component.shape[0])
    energy[known] = ts.bin_day_length[known] / p * ts.scale * component[known].sum(axis=1)
    return _fill_missing_bins(energy, known)


def shade_energy(dec, ts) -> np.ndarray:
    """Energy lost to shade on one representative day of each bin (kWh)."""
    return np.maximum(-_bin_energy(dec.x3, ts), 0.0)


def yearly_total(per_bin: np.ndarray) -> float:
    """Sum a per-bin daily quantity over the 365 days of a year."""
    per_bin = np.asarray(per_bin, dtype=float)
    return float(np.sum(per_bin * sg.bin_day_counts()))


def build_report(dec, ts, reference: Optional[ShadeReference] = None,
                 total_energy: Optional[float] = None) -> ShadeReport:
    per_bin_loss = shade_energy(dec, ts)
    missing = int((~ts.known_rows).sum())
    if missing:
        logger.info("%d declination bins have no clear days; their losses are interpolated", missing)
    per_bin_energy = np.maximum(_bin_energy(dec.x2, ts), 0.0)
    yearly_loss = yearly_total(per_bin_loss)
    yearly_energy = yearly_total(per_bin_energy)
    report = ShadeReport(
        per_bin_loss=per_bin_loss,
        per_bin_energy=per_bin_energy,
        yearly_loss=yearly_loss,
        yearly_energy=yearly_energy,
        loss_fraction=100.0 * yearly_loss / yearly_energy if yearly_energy > 0 else 0.0,
        interpolated_bins=~ts.known_rows,
        params_hash=ts.params_hash,
    )
    if reference is not None:
        rmse, re = metrics(report, reference, total_energy)
        report = replace(report, rmse=rmse, re=re)
    return report


def metrics(estimate, reference, total_energy: Optional[float] = None):
    """
    (rmse in kWh over bins, re in percent of total yearly energy).

    RE is estimate minus reference; total_energy defaults to the reference's
    yearly energy. Swapping the arguments negates RE only when total_energy
    is given, since otherwise the denominator follows the reference.
    """
    est = np.asarray(estimate.per_bin_loss, dtype=float)
    ref = np.asarray(reference.per_bin_loss, dtype=float)
    if est.shape != ref.shape:
        raise MetricError(f"Estimate has {est.size} bins, reference has {ref.size}")
    total = reference.yearly_energy if total_energy is None else total_energy
    if not total or total <= 0:
        raise MetricError("Total yearly energy must be positive")
    rmse = float(np.sqrt(np.mean((est - ref) ** 2)))
    re = float(100.0 * (estimate.yearly_loss - reference.yearly_loss) / total)
    return rmse, re


# --- Back to the time domain ---

def _row_for_bin(component: np.ndarray, known: np.ndarray, b: int) -> np.ndarray:
    if known[b]:
        return component[b]
    idx = np.flatnonzero(known)
    if idx.size == 0:
        raise ReportError("All declination bins are missing")
    return np.array([np.interp(b, idx, component[idx, i]) for i in range(component.shape[1])])


def invert_transform(dec, ts, geo, day: int, n_per_day: int) -> ComponentSeries:
    """Map bin rows of x1, x2, x3 onto day `day`'s sunrise-sunset grid, in kW."""
    b = int(geo.bin_index[day])
    known = ts.known_rows
    p = dec.x3.shape[1]
    grid = np.linspace(geo.sunrise_idx[day], geo.sunset_idx[day], p)
    rows = np.arange(n_per_day)

    def back(component):
        row = _row_for_bin(component, known, b)
        return ts.scale * np.interp(rows, grid, row, left=0.0, right=0.0)

    return ComponentSeries(day_index=int(day), bin_index=b, x1=back(dec.x1), x2=back(dec.x2),
                           x3=back(dec.x3), interpolated=not bool(known[b]))


def representative_days(geo, clear: np.ndarray,
                        targets: Iterable[int] = (80, 172, 266, 355)) -> List[int]:
    """Clear day closest to each target day of year (equinoxes and solstices)."""
    clear_days = np.flatnonzero(clear)
    picks = []
    for n in targets:
        if clear_days.size == 0:
            break
        gap = np.abs(np.asarray(geo.day_of_year)[clear_days] - n)
        day = int(clear_days[np.argmin(gap)])
        if day not in picks:
            picks.append(day)
    return picks


def component_day_table(dec, ts, geo, matrix, days: Iterable[int]) -> pd.DataFrame:
    frames = []
    dates = matrix.dates()
    for d in days:
        series = invert_transform(dec, ts, geo, d, matrix.n_per_day)
        rows = np.arange(matrix.n_per_day)
        seconds = rows * matrix.interval
        frames.append(pd.DataFrame({
            "day": d,
            "date": str(dates[d]),
            "row": rows,
            "time": [f"{s // 3600:02d}:{s % 3600 // 60:02d}:{s % 60:02d}" for s in seconds],
            "measured_kw": matrix.values[:, d],
            "x1_kw": series.x1,
            "x2_kw": series.x2,
            "x3_kw": series.x3,
        }))
    if not frames:
        return pd.DataFrame(columns=["day", "date", "row", "time", "measured_kw",
                                     "x1_kw", "x2_kw", "x3_kw"])
    return pd.concat(frames, ignore_index=True)


# --- Output files ---

def report_document(report: ShadeReport) -> Dict:
    return {
        "params_hash": report.params_hash,
        "per_bin_loss_kwh": report.per_bin_loss,
        "per_bin_energy_kwh": report.per_bin_energy,
        "interpolated_bins": np.flatnonzero(report.interpolated_bins),
        "yearly_loss_kwh": report.yearly_loss,
        "yearly_energy_kwh": report.yearly_energy,
        "loss_fraction_pct": report.loss_fraction,
        "rmse_kwh": report.rmse,
        "re_pct": report.re,
    }


def load_reference(path: Path) -> ShadeReference:
    """Read the per-bin and yearly figures from a report or ground-truth document."""
    doc = read_document(path)
    try:
        return ShadeReference(per_bin_loss=np.asarray(doc["per_bin_loss_kwh"], dtype=float),
                              yearly_loss=float(doc["yearly_loss_kwh"]),
                              yearly_energy=float(doc["yearly_energy_kwh"]))
    except KeyError as e:
        raise MetricError(f"{path} is missing field {e}")


def bin_table(report: ShadeReport, reference: Optional[ShadeReference] = None) -> pd.DataFrame:
    ref = reference.per_bin_loss if reference is not None else np.full(len(report.per_bin_loss), np.nan)
    return pd.DataFrame({
        "bin": np.arange(len(report.per_bin_loss)),
        "declination_deg": sg.bin_centers()[:len(report.per_bin_loss)],
        "loss_kwh": report.per_bin_loss,
        "reference_kwh": ref,
    })


def _save_text_report(report: ShadeReport, path: Path):
    with open(path, "w") as f:
        f.write("Shade Loss Report\n")
        f.write("=" * 50 + "\n\n")
        f.write(f"Params hash: {report.params_hash}\n")
        f.write(f"Yearly energy (clear-sky component): {report.yearly_energy:.2f} kWh\n")
        f.write(f"Yearly shade loss: {report.yearly_loss:.2f} kWh\n")
        f.write(f"Loss fraction: {report.loss_fraction:.2f}%\n")
        if report.rmse is not None:
            f.write(f"RMSE vs reference: {report.rmse:.3f} kWh\n")
            f.write(f"RE vs reference: {report.re:+.2f}%\n")
        f.write("\nPer-bin loss (kWh per representative day)\n")
        f.write("-" * 50 + "\n")
        centers = sg.bin_centers()
        for b, loss in enumerate(report.per_bin_loss):
            flag = "  (interpolated)" if report.interpolated_bins[b] else ""
            f.write(f"Bin {b:2d}  decl {centers[b]:+6.2f}  {loss:8.3f}{flag}\n")
        f.write("\nLoss estimates are a lower bound: the clear-sky baseline "
                "is fitted to the shaded data.\n")


def save_report(report: ShadeReport, out_dir: Path,
                reference: Optional[ShadeReference] = None) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": write_document(out_dir / "shade_report.json", report_document(report)),
        "table": write_table(out_dir / "shade_by_bin.csv", bin_table(report, reference),
                             report.params_hash),
        "text": out_dir / "shade_report.txt",
    }
    _save_text_report(report, paths["text"])
    return paths


def save_heatmaps(ts, dec, out_dir: Path) -> Dict[str, Path]:
    """Transformed-space matrices y, x1, x2, x3 as delimited text and PNG."""
    out_dir = Path(out_dir)
    paths = {}
    for name, matrix in (("y", ts.y), ("x1", dec.x1), ("x2", dec.x2), ("x3", dec.x3)):
        paths[name] = write_matrix(out_dir / f"heatmap_{name}.csv", matrix, ts.params_hash)
        save_heatmap_image(out_dir / f"heatmap_{name}.png", matrix)
    return paths
