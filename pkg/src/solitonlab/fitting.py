"""Log-log slope fits used to turn O(N^-k) claims into numbers."""

from typing import NamedTuple

import numpy as np


class SlopeFit(NamedTuple):
    slope: float
    r_squared: float
    excluded: tuple = ()


def fit_slope(xs, ys) -> SlopeFit:
    """Least-squares slope of ``log y`` against ``log x``.

    Non-positive ``ys`` cannot be fitted; their indices are returned in
    ``excluded`` (they are below the noise floor).  With fewer than two usable
    points the slope and ``r_squared`` are NaN.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 4:
        raise ValueError("fit_slope needs at least 4 (x, y) pairs of equal length")
    if np.any(xs <= 0):
        raise ValueError("fit_slope: x values must be positive")
    keep = ys > 0
    excluded = tuple(int(i) for i in np.flatnonzero(~keep))
    if keep.sum() < 2:
        return SlopeFit(float("nan"), float("nan"), excluded)
    lx, ly = np.log(xs[keep]), np.log(ys[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(float(slope), r2, excluded)
