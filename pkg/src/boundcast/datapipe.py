"""File-based ingestion and preprocessing of half-hourly farm output.

Input is one CSV per farm with header ``timestamp,power_mw,bav_mwh,oav_mwh``
(RFC-3339 timestamps, UTC) plus an optional ``manifest.json`` listing farms
and, when known, their rated power.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InsufficientDataError, ParameterError
from .glogit import DEFAULT_EPS, clamp_threshold

log = logging.getLogger(__name__)

FREQ = "30min"
POINTS_PER_DAY = 48
WINDOW_3M = 90 * POINTS_PER_DAY  # 4320 half-hours
CSV_COLUMNS = ["timestamp", "power_mw", "bav_mwh", "oav_mwh"]


@dataclass
class BoundedSeries:
    """Capacity-normalised series in ``[eps, 1 - eps]`` with NaN for missing."""

    farm_id: str
    capacity: float
    values: np.ndarray
    eps: float = DEFAULT_EPS
    index: pd.DatetimeIndex | None = field(default=None, repr=False)

    def __post_init__(self):
        v = self.values[~np.isnan(self.values)]
        if v.size and (v.min() < self.eps or v.max() > 1 - self.eps):
            raise ParameterError("bounded series values must lie in [eps, 1 - eps]")

    def __len__(self):
        return self.values.size


# -- reading and writing -------------------------------------------------------


def read_farm_csv(path) -> pd.DataFrame:
    """Load one farm file onto a gap-free 30-minute UTC grid.

    Rows absent from the file are materialised with NaN power; duplicate
    timestamps keep the last row.
    """
    df = pd.read_csv(path)
    missing = set(CSV_COLUMNS) - set(df.columns)
    if missing:
        raise ParameterError(f"{path}: missing columns {sorted(missing)}")
    df["timestamp"] = pd.to_datetime(df["timestamp"], utc=True)
    df = df.drop_duplicates("timestamp", keep="last").set_index("timestamp").sort_index()
    if len(df) == 0:
        return df[CSV_COLUMNS[1:]]
    grid = pd.date_range(df.index[0].floor(FREQ), df.index[-1].ceil(FREQ), freq=FREQ)
    return df[CSV_COLUMNS[1:]].reindex(grid)


def write_farm_csv(path, index: pd.DatetimeIndex, power_mw, bav_mwh=None, oav_mwh=None) -> None:
    n = len(index)
    df = pd.DataFrame(
        {
            "timestamp": index.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "power_mw": power_mw,
            "bav_mwh": np.zeros(n) if bav_mwh is None else bav_mwh,
            "oav_mwh": np.zeros(n) if oav_mwh is None else oav_mwh,
        }
    )
    df.to_csv(path, index=False, float_format="%.6f", na_rep="")


def read_manifest(data_dir) -> dict:
    """Farm list from ``manifest.json``, or every ``*.csv`` in the directory."""
    data_dir = Path(data_dir)
    mpath = data_dir / "manifest.json"
    if mpath.exists():
        manifest = json.loads(mpath.read_text())
    else:
        manifest = {"farms": [{"id": p.stem, "file": p.name} for p in sorted(data_dir.glob("*.csv"))]}
    for farm in manifest["farms"]:
        farm.setdefault("file", f"{farm['id']}.csv")
        farm.setdefault("rated_mw", None)
    return manifest


# -- preprocessing ----------------------------------------------------------


def correct_power(avg_power, bav=0.0, oav=0.0, half_hours_per_hour: float = 2.0):
    """Remove system-operator interventions from average power.

    ``corrected = power - 2 * (oav + bav)`` in MW, floored at zero. Offer
    volumes (positive) raised output, so they are taken off; bid volumes
    carry a negative sign, so subtracting them restores curtailed output.
    Missing volumes count as zero; missing power stays missing.
    """
    p = np.asarray(avg_power, dtype=float)
    b = np.nan_to_num(np.asarray(bav, dtype=float))
    o = np.nan_to_num(np.asarray(oav, dtype=float))
    out = np.maximum(p - half_hours_per_hour * (o + b), 0.0)
    return out[()] if out.ndim == 0 else out


def estimate_capacity(train_values, min_points: int = 1000, q: float = 99.9, slack: float = 1.02) -> float:
    """Spike-robust maximum: ``min(max, slack * q-th percentile)``."""
    v = np.asarray(train_values, dtype=float)
    v = v[~np.isnan(v)]
    if v.size < min_points:
        raise InsufficientDataError(f"capacity estimate needs {min_points} values, got {v.size}")
    cap = float(min(v.max(), slack * np.percentile(v, q)))
    if not cap > 0:
        raise InsufficientDataError("series has no positive output")
    return cap


def to_bounded(series_mw, capacity: float, eps: float = DEFAULT_EPS, farm_id: str = "", index=None) -> BoundedSeries:
    """Divide by capacity, clip to ``[0, 1]`` and squeeze into ``[eps, 1 - eps]``."""
    if not capacity > 0:
        raise ParameterError("capacity must be positive")
    x = np.clip(np.asarray(series_mw, dtype=float) / capacity, 0.0, 1.0)
    return BoundedSeries(farm_id, float(capacity), clamp_threshold(x, eps), eps, index)


@dataclass(frozen=True)
class FarmFilterResult:
    keep: bool
    rolling_max_var: float
    quantile_width: float


def outlier_farm_filter(raw_series_mw, window: int = WINDOW_3M) -> FarmFilterResult:
    """Flag farms whose apparent capacity drifts.

    ``sigma2_w`` is the variance of the trailing rolling maximum (window of
    three months) and ``w_q = 3 * (q95 - q05)``; the farm is kept iff
    ``w_q > sigma2_w``. Both are computed on the raw MW series.
    """
    s = pd.Series(np.asarray(raw_series_mw, dtype=float))
    if s.size < 2 * window:
        raise InsufficientDataError(f"outlier filter needs at least {2 * window} points (six months)")
    rolling = s.rolling(window, min_periods=window // 2).max()
    var = float(np.nanvar(rolling.to_numpy()))
    q05, q95 = np.nanpercentile(s.to_numpy(), [5, 95])
    wq = 3.0 * float(q95 - q05)
    return FarmFilterResult(wq > var, var, wq)


def build_scenarios(years) -> list[tuple[int, int]]:
    """Consecutive (train year, test year) pairs among the available years."""
    ys = sorted(set(int(y) for y in years))
    return [(a, b) for a, b in zip(ys, ys[1:]) if b == a + 1]


def load_farm(data_dir, farm: dict) -> pd.Series:
    """Corrected power (MW) on the half-hour grid for one manifest entry."""
    df = read_farm_csv(Path(data_dir) / farm["file"])
    corrected = correct_power(df["power_mw"].to_numpy(), df["bav_mwh"].to_numpy(), df["oav_mwh"].to_numpy())
    return pd.Series(corrected, index=df.index, name=farm["id"])


def year_slice(series: pd.Series, year: int) -> pd.Series:
    return series[series.index.year == year]


def available_years(series: pd.Series, min_points: int = 1000) -> list[int]:
    counts = series.notna().groupby(series.index.year).sum()
    return [int(y) for y, c in counts.items() if c >= min_points]
