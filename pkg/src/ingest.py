"""
Power time-series ingestion.

Parses raw delimited text into a RawSeries, puts it on a regular time grid,
embeds it as a day matrix (rows are time of day, columns are days) and fills
gaps once sunrise/sunset estimates are known.
"""

import io
import logging
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Dict, TextIO, Union

import numpy as np
import pandas as pd

from errors import (
    InputError,
    InsufficientDataError,
    UnsupportedCadenceError,
)

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400
MIN_DAYS = 180
MAX_DAYTIME_MISSING = 0.2


@dataclass(frozen=True)
class RawSeries:
    """Time-ordered power samples in local standard time."""
    timestamps: np.ndarray  # datetime64[s], strictly increasing
    power: np.ndarray       # kW, NaN marks a missing sample
    interval: int           # seconds; modal spacing

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def n_days(self) -> int:
        return len(np.unique(self.timestamps.astype("datetime64[D]")))


@dataclass(frozen=True)
class DayMatrix:
    """Power embedded as n_per_day rows by n_days columns."""
    values: np.ndarray      # kW, NaN until fill_gaps runs
    gap_mask: np.ndarray    # True where the series had no sample
    start_date: date
    interval: int
    usable: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.usable is None:
            object.__setattr__(self, "usable", np.ones(self.n_days, dtype=bool))

    @property
    def n_per_day(self) -> int:
        return self.values.shape[0]

    @property
    def n_days(self) -> int:
        return self.values.shape[1]

    def dates(self) -> np.ndarray:
        start = np.datetime64(self.start_date, "D")
        return start + np.arange(self.n_days)

    def day_of_year(self) -> np.ndarray:
        days = self.dates()
        years = days.astype("datetime64[Y]")
        return (days - years).astype(int) + 1


# --- Parsing ---

def _modal_spacing(timestamps: np.ndarray) -> int:
    """Most common spacing in seconds; the smallest one wins ties."""
    if len(timestamps) < 2:
        return 0
    diffs = np.diff(timestamps.astype("int64"))
    values, counts = np.unique(diffs, return_counts=True)
    return int(values[np.argmax(counts)])


def _looks_like_header(first_row) -> bool:
    """A header has no parseable timestamp and no numeric field."""
    fields = [v.strip() for v in first_row if isinstance(v, str) and v.strip()]
    if not fields:
        return False
    if not pd.isna(pd.to_datetime(fields[0], format="ISO8601", errors="coerce")):
        return False
    return bool(pd.to_numeric(pd.Series(fields), errors="coerce").isna().all())


def parse_series(text: Union[str, TextIO], min_days: int = MIN_DAYS) -> RawSeries:
    """
    Parse two-column delimited text (ISO-8601 timestamp, power in kW).

    Comma and tab both work as delimiters and a header row is optional.
    Non-numeric power becomes a missing marker, negative power is clamped to
    zero and duplicate timestamps keep the last row.
    """
    if not isinstance(text, str):
        text = text.read()
    try:
        frame = pd.read_csv(io.StringIO(text), sep=r"[,\t]", engine="python",
                            header=None, dtype=str, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise InputError("Input series is empty")
    if frame.shape[1] < 2:
        raise InputError("Input series needs two columns: timestamp and power")

    frame = frame.iloc[:, :2]
    frame.columns = ["timestamp", "power"]
    frame["line"] = np.arange(1, len(frame) + 1)
    frame = frame[frame["timestamp"].notna() & (frame["timestamp"].str.strip() != "")]
    if frame.empty:
        raise InputError("Input series has no rows")
    if _looks_like_header(frame[["timestamp", "power"]].iloc[0].tolist()):
        frame = frame.iloc[1:]

    stamps = pd.to_datetime(frame["timestamp"].str.strip(), format="ISO8601", errors="coerce")
    bad = stamps.isna().to_numpy()
    if bad.any():
        line = int(frame["line"].to_numpy()[bad][0])
        raise InputError(f"Unparseable timestamp on line {line}: "
                         f"{frame['timestamp'].to_numpy()[bad][0]!r}")
    if getattr(stamps.dt, "tz", None) is not None:
        stamps = stamps.dt.tz_localize(None)

    power = pd.to_numeric(frame["power"].str.strip(), errors="coerce").to_numpy(dtype=float)
    power[~np.isfinite(power)] = np.nan
    power = np.where(power < 0, 0.0, power)

    table = pd.DataFrame({"timestamp": stamps.to_numpy().astype("datetime64[s]"),
                          "power": power})
    table = table.sort_values("timestamp", kind="mergesort")
    table = table.drop_duplicates("timestamp", keep="last")

    timestamps = table["timestamp"].to_numpy().astype("datetime64[s]")
    series = RawSeries(timestamps=timestamps,
                       power=table["power"].to_numpy(dtype=float),
                       interval=_modal_spacing(timestamps))
    if series.n_days < min_days:
        raise InsufficientDataError(
            f"Series covers {series.n_days} distinct days; at least {min_days} are "
            f"needed for seasonal coverage")
    return series


def load_series(path: Union[str, Path], min_days: int = MIN_DAYS) -> RawSeries:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Input series does not exist: {path}")
    with open(path) as f:
        return parse_series(f, min_days=min_days)


def write_series(path: Union[str, Path], s: RawSeries) -> Path:
    """Write a series in the format parse_series reads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({
        "timestamp": pd.DatetimeIndex(s.timestamps).strftime("%Y-%m-%dT%H:%M:%S"),
        "power_kw": s.power,
    })
    frame.to_csv(path, index=False, na_rep="", lineterminator="\n")
    return path


# --- Time grid ---

def regularize(s: RawSeries) -> RawSeries:
    """
    Put the series on a uniform grid with the modal spacing as step.

    The grid is aligned to midnight and starts at the grid instant nearest
    the first sample. Samples snap to the nearest grid instant; when two land
    on one slot the later one is kept. Empty slots become missing markers.
    """
    if len(s) < 2:
        raise InputError("At least two samples are needed to regularize a series")
    interval = _modal_spacing(s.timestamps)
    if interval <= 0 or SECONDS_PER_DAY % interval != 0:
        raise UnsupportedCadenceError(
            f"Modal spacing of {interval} s does not divide a day into whole samples")

    seconds = s.timestamps.astype("int64")
    midnight = seconds[0] - seconds[0] % SECONDS_PER_DAY
    anchor = midnight + int(np.rint((seconds[0] - midnight) / interval)) * interval
    slots = np.rint((seconds - anchor) / interval).astype(np.int64)
    keep = ~pd.Index(slots).duplicated(keep="last")
    slots, power = slots[keep], s.power[keep]

    n = int(slots[-1]) + 1
    values = np.full(n, np.nan)
    values[slots] = power
    grid = (np.datetime64(int(anchor), "s")
            + np.arange(n, dtype=np.int64) * np.timedelta64(interval, "s"))
    return RawSeries(timestamps=grid.astype("datetime64[s]"), power=values, interval=interval)


def embed(s: RawSeries) -> DayMatrix:
    """Reshape a regularized series into a day matrix, padding partial days."""
    if s.interval <= 0 or SECONDS_PER_DAY % s.interval != 0:
        raise UnsupportedCadenceError(f"Series interval {s.interval} s is not a divisor of a day")
    n_per_day = SECONDS_PER_DAY // s.interval

    days = s.timestamps.astype("datetime64[D]")
    first_day = days[0]
    n_days = int((days[-1] - first_day).astype(int)) + 1
    seconds_of_day = (s.timestamps - days).astype("timedelta64[s]").astype(np.int64)
    rows = seconds_of_day // s.interval
    cols = (days - first_day).astype(np.int64)

    flat = np.full(n_days * n_per_day, np.nan)
    flat[cols * n_per_day + rows] = s.power
    values = flat.reshape(n_days, n_per_day).T.copy()
    return DayMatrix(values=values,
                     gap_mask=np.isnan(values),
                     start_date=first_day.astype(object),
                     interval=s.interval)


def fill_gaps(m: DayMatrix, sun, max_daytime_missing: float = MAX_DAYTIME_MISSING) -> DayMatrix:
    """
    Fill missing entries using per-day sunrise/sunset indices.

    `sun` carries per-day `sunrise` and `sunset` fractional row indices.
    Daytime gaps are interpolated linearly from the day's own samples and
    night gaps are zero-filled. A day is unusable (and zeroed) when it is
    fully missing, has a daytime gap with no sample on one side, or misses
    more than `max_daytime_missing` of its daytime samples. gap_mask is kept.
    """
    values = np.array(m.values, dtype=float)
    usable = np.array(m.usable, dtype=bool)
    rows = np.arange(m.n_per_day)
    sunrise = np.asarray(sun.sunrise, dtype=float)
    sunset = np.asarray(sun.sunset, dtype=float)

    for d in range(m.n_days):
        gaps = m.gap_mask[:, d]
        valid = ~gaps
        daytime = (rows >= sunrise[d]) & (rows <= sunset[d])
        if not valid.any():
            usable[d] = False
        elif daytime.any() and gaps[daytime].mean() > max_daytime_missing:
            usable[d] = False
        else:
            day_gaps = np.flatnonzero(gaps & daytime)
            valid_rows = np.flatnonzero(valid)
            if day_gaps.size and (day_gaps[0] < valid_rows[0] or day_gaps[-1] > valid_rows[-1]):
                usable[d] = False

        if not usable[d]:
            values[:, d] = 0.0
            continue
        column = values[:, d]
        column[gaps & ~daytime] = 0.0
        fill = gaps & daytime
        if fill.any():
            valid_rows = np.flatnonzero(valid)
            column[fill] = np.interp(rows[fill], valid_rows, column[valid_rows])

    n_bad = int((~usable).sum())
    if n_bad:
        logger.info("%d of %d days marked unusable during gap filling", n_bad, m.n_days)
    return replace(m, values=values, usable=usable)


# --- Readiness scan ---

def scan_series(s: RawSeries, min_days: int = MIN_DAYS) -> Dict:
    """Summarize a parsed series before analysis."""
    n = len(s)
    missing = int(np.isnan(s.power).sum())
    interval = _modal_spacing(s.timestamps)
    summary = {
        "samples": n,
        "first_instant": str(s.timestamps[0]) if n else None,
        "last_instant": str(s.timestamps[-1]) if n else None,
        "modal_interval_s": interval,
        "cadence_supported": bool(interval > 0 and SECONDS_PER_DAY % interval == 0),
        "distinct_days": s.n_days,
        "missing_samples": missing,
        "missing_fraction": missing / n if n else 0.0,
        "peak_kw": float(np.nanmax(s.power)) if n and missing < n else 0.0,
        "meets_min_days": s.n_days >= min_days,
    }
    summary["ready"] = bool(summary["cadence_supported"] and summary["meets_min_days"])
    return summary
