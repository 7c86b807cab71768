"""Detrended fluctuation analysis of load time series.

The pipeline quantifies long-range correlation in a (possibly nonstationary)
signal: subtract the global least-squares line, integrate the mean-subtracted
signal into a profile, remove an order-1 local trend in non-overlapping boxes
of size m, and measure the rms residual F(m).  For scale-invariant signals
F(m) ~ m^alpha; alpha = 0.5 marks an uncorrelated signal, larger values mark
positive long-range correlation.  Where log F(m) bends, the scaling exponent
is read below the crossover.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import linregress

MIN_SIGNAL_LEN = 16
MIN_BOX = 4

# a two-segment fit must cut the squared residual by this factor AND bend
# the slope by at least MIN_SLOPE_CHANGE to count as a crossover; together
# these reject noise-induced breakpoints on single-slope calibration signals
# (a hinge always absorbs some residual, so the reduction test alone is not
# selective on nearly straight lines)
CROSSOVER_GAIN = 0.20
MIN_SLOPE_CHANGE = 0.20

# residual floor below which a log-log fit is meaningless (numerically flat)
DEGENERATE_F = 1e-9


@dataclass
class DfaResult:
    """F(m) points plus the fitted scaling exponent and crossover scale."""

    points: np.ndarray  # shape (k, 2): box size m, rms fluctuation F
    alpha: float
    alpha_stderr: float
    crossover: int | None
    fit_range: tuple[int, int]

    @property
    def box_sizes(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def fluctuations(self) -> np.ndarray:
        return self.points[:, 1]


def _as_signal(values, min_len: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    if len(arr) < min_len:
        raise ValueError(f"signal too short: {len(arr)} < {min_len}")
    return arr


def remove_global_trend(values) -> np.ndarray:
    """Subtract the full-series least-squares line.

    Makes linearly growing (congested) series comparable to stationary ones;
    the output has zero mean and zero fitted slope up to rounding.
    """
    sig = _as_signal(values, 2)
    x = np.arange(len(sig), dtype=np.float64)
    slope, intercept = np.polyfit(x, sig, 1)
    return sig - (intercept + slope * x)


def integrate_profile(values) -> np.ndarray:
    """Cumulative sum of the mean-subtracted signal (the profile y)."""
    sig = _as_signal(values, 1)
    return np.cumsum(sig - sig.mean())


def _box_view(profile: np.ndarray, m: int) -> np.ndarray:
    """Forward plus backward non-overlapping boxes, shape (2*(n//m), m).

    The backward pass boxes the series from the right so the tail remainder
    that the forward pass drops is still covered.
    """
    n = len(profile)
    nb = n // m
    fwd = profile[: nb * m].reshape(nb, m)
    bwd = profile[n - nb * m :].reshape(nb, m)
    return np.concatenate([fwd, bwd])


def fluctuation(profile, m: int) -> float:
    """RMS fluctuation of the profile after order-1 detrending in boxes of m."""
    profile = np.asarray(profile, dtype=np.float64)
    n = len(profile)
    if not MIN_BOX <= m <= n // 4:
        raise ValueError(f"box size {m} outside [{MIN_BOX}, {n // 4}]")
    segs = _box_view(profile, m)
    x = np.arange(m, dtype=np.float64)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slopes = segs @ xc / sxx
    resid = segs - segs.mean(axis=1)[:, None] - np.outer(slopes, xc)
    return float(np.sqrt(np.mean(resid * resid)))


def default_box_sizes(n: int, count: int = 20) -> np.ndarray:
    """About ``count`` box sizes, log-spaced over [4, n//4], deduplicated."""
    if n < MIN_SIGNAL_LEN:
        raise ValueError(f"signal too short: {n} < {MIN_SIGNAL_LEN}")
    grid = np.geomspace(MIN_BOX, n // 4, count)
    return np.unique(np.round(grid).astype(np.int64))


def dfa(values, box_sizes=None) -> np.ndarray:
    """(m, F(m)) points for the signal; integration happens internally."""
    sig = _as_signal(values, MIN_SIGNAL_LEN)
    if box_sizes is None:
        box_sizes = default_box_sizes(len(sig))
    box_sizes = np.asarray(box_sizes, dtype=np.int64)
    if len(box_sizes) == 0:
        raise ValueError("need at least one box size")
    if (np.diff(box_sizes) <= 0).any():
        raise ValueError("box sizes must be strictly ascending")
    profile = integrate_profile(sig)
    return np.array([(m, fluctuation(profile, int(m))) for m in box_sizes])


def fit_scaling(points, fit_range: tuple[float, float]) -> tuple[float, float]:
    """Slope and stderr of log10 F vs log10 m restricted to ``fit_range``.

    Points with F <= 0 inside the range are excluded with a warning.
    """
    points = np.asarray(points, dtype=np.float64)
    lo, hi = fit_range
    inside = (points[:, 0] >= lo) & (points[:, 0] <= hi)
    usable = inside & (points[:, 1] > 0)
    n_excluded = int(inside.sum() - usable.sum())
    if n_excluded:
        warnings.warn(f"excluded {n_excluded} non-positive F points from fit")
    if usable.sum() < 3:
        raise ValueError("need at least 3 usable points inside the fit range")
    res = linregress(np.log10(points[usable, 0]), np.log10(points[usable, 1]))
    return float(res.slope), float(res.stderr)


def detect_crossover(points) -> int | None:
    """Box size where the log-log F(m) curve changes slope, if any.

    Fits a continuous two-segment line over every candidate breakpoint with
    at least 3 points per segment and accepts the best one when it reduces
    the squared residual of the single-line fit by at least CROSSOVER_GAIN
    and changes the slope by at least MIN_SLOPE_CHANGE.
    """
    points = np.asarray(points, dtype=np.float64)
    pos = points[points[:, 1] > 0]
    if len(pos) < 6:
        raise ValueError("need at least 6 points with F > 0")
    x = np.log10(pos[:, 0])
    y = np.log10(pos[:, 1])
    k = len(x)

    one = np.ones_like(x)
    base = np.column_stack([one, x])
    coef0 = np.linalg.lstsq(base, y, rcond=None)[0]
    ss0 = float(np.sum((y - base @ coef0) ** 2))
    if ss0 < 1e-20:
        return None  # already a perfect single line

    best_ss = np.inf
    best_idx = None
    best_bend = 0.0
    for bi in range(2, k - 3):
        hinge = np.maximum(x - x[bi], 0.0)
        design = np.column_stack([one, x, hinge])
        coef = np.linalg.lstsq(design, y, rcond=None)[0]
        ss = float(np.sum((y - design @ coef) ** 2))
        if ss < best_ss:
            best_ss = ss
            best_idx = bi
            best_bend = float(coef[2])
    if (
        best_idx is None
        or best_ss > (1.0 - CROSSOVER_GAIN) * ss0
        or abs(best_bend) < MIN_SLOPE_CHANGE
    ):
        return None
    return int(round(pos[best_idx, 0]))


def analyze(values, box_sizes=None) -> DfaResult:
    """Full pipeline: global detrend, F(m), crossover, scaling fit.

    The global trend is always removed before integration so congested and
    free series go through the identical path.  When a crossover is found,
    the exponent is fit on box sizes up to the crossover only.
    """
    detrended = remove_global_trend(_as_signal(values, MIN_SIGNAL_LEN))
    points = dfa(detrended, box_sizes)
    crossover = detect_crossover(points) if len(points) >= 6 else None
    m_lo = int(points[0, 0])
    m_hi = crossover if crossover is not None else int(points[-1, 0])
    alpha, stderr = fit_scaling(points, (m_lo, m_hi))
    return DfaResult(points, alpha, stderr, crossover, (m_lo, m_hi))


def is_degenerate(points) -> bool:
    """True when every fluctuation sits below the numeric floor."""
    points = np.asarray(points, dtype=np.float64)
    return bool((points[:, 1] < DEGENERATE_F).all())


def save_result(result: DfaResult, csv_path: str | Path, json_path: str | Path) -> None:
    """Write the (m, F) table and a JSON sidecar with the fit summary."""
    lines = ["m,F"]
    for m, f in result.points:
        lines.append(f"{int(m)},{float(f)!r}")
    Path(csv_path).write_text("\n".join(lines) + "\n")
    payload = {
        "alpha": None if not np.isfinite(result.alpha) else result.alpha,
        "alpha_stderr": None
        if not np.isfinite(result.alpha_stderr)
        else result.alpha_stderr,
        "crossover": result.crossover,
        "fit_range": list(result.fit_range),
        "n_points": len(result.points),
    }
    Path(json_path).write_text(json.dumps(payload, indent=2) + "\n")
