"""Data loading and preprocessing for event streams and value series.

CSV conventions: UTF-8, '.' decimal separator, lines starting with '#'
skipped, an optional single header line.  Event files carry one column of
strictly increasing arrival times; series files carry either a single
value column or (timestamp, value) pairs.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

DUPLICATE_SHIFT = 1e-9


class DataError(ValueError):
    """Input data violates the expected format or ordering."""


def _read_rows(path) -> list[list[float]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    rows: list[list[float]] = []
    header_allowed = True
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            if header_allowed:
                header_allowed = False
                continue
            raise DataError(f"{path}:{lineno}: cannot parse {line!r} as numbers") from None
        header_allowed = False
    return rows


def load_events(path) -> np.ndarray:
    """Load a single-column CSV of arrival times.

    Duplicated timestamps are nudged forward by 1e-9 per repeat (with a
    warning); any strictly decreasing time is an error.
    """
    rows = _read_rows(path)
    if not rows:
        return np.empty(0)
    if any(len(r) != 1 for r in rows):
        raise DataError(f"{path}: event files must have exactly one column")
    times = np.array([r[0] for r in rows])
    if not np.all(np.isfinite(times)):
        raise DataError(f"{path}: non-finite arrival time")
    out = times.copy()
    run = 0
    for i in range(1, len(out)):
        if times[i] < times[i - 1]:
            raise DataError(f"{path}: arrival times decrease at row {i + 1}")
        if out[i] <= out[i - 1]:
            run += 1
            out[i] = out[i - 1] + DUPLICATE_SHIFT
        else:
            run = 0
    if run or np.any(out != times):
        warnings.warn(f"{path}: duplicated arrival times perturbed by {DUPLICATE_SHIFT}")
    return out


def load_series(path) -> np.ndarray:
    """Load a value series from a one- or two-column CSV.

    With two columns the first is a timestamp or index (must be strictly
    increasing) and the second the value; order is preserved.
    """
    rows = _read_rows(path)
    if not rows:
        return np.empty(0)
    widths = {len(r) for r in rows}
    if widths == {1}:
        values = np.array([r[0] for r in rows])
    elif widths == {2}:
        stamps = np.array([r[0] for r in rows])
        if np.any(np.diff(stamps) <= 0):
            raise DataError(f"{path}: timestamps must be strictly increasing")
        values = np.array([r[1] for r in rows])
    else:
        raise DataError(f"{path}: series files need one or two columns throughout")
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: non-finite value")
    return values


def rolling_average(values, window: int) -> np.ndarray:
    """Trailing (causal) mean over up to ``window`` past points; output has
    the same length as the input."""
    if window < 1:
        raise ValueError("window must be >= 1")
    values = np.asarray(values, dtype=float)
    cumulative = np.cumsum(values)
    out = np.empty_like(values)
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        total = cumulative[i] - (cumulative[lo - 1] if lo > 0 else 0.0)
        out[i] = total / (i - lo + 1)
    return out


def standardize(values) -> tuple[np.ndarray, float, float]:
    """Center and scale by the population standard deviation.

    Returns (standardized, mean, sd); invert with ``values * sd + mean``.
    """
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        raise DataError("need at least two values to standardize")
    mean = float(values.mean())
    sd = float(values.std())
    if sd == 0.0:
        raise DataError("cannot standardize a constant series")
    return (values - mean) / sd, mean, sd


def inverse_standardize(values, mean: float, sd: float) -> np.ndarray:
    return np.asarray(values, dtype=float) * sd + mean
