"""Input checks shared by the estimators and the numerical routines."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length


def check_series(*arrays, min_length: int = 1, names=None):
    """Coerce each input to a finite 1-D float array; all must share one length."""
    out = []
    for i, a in enumerate(arrays):
        a = check_array(np.asarray(a, dtype=float).reshape(-1, 1), ensure_all_finite=True,
                        ensure_min_samples=min_length)
        out.append(a.ravel())
    check_consistent_length(*out)
    return out if len(out) > 1 else out[0]


def check_increasing(t, name: str = "times"):
    t = np.asarray(t, dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return t


def check_positive(x, name: str):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError(f"{name} must be strictly positive")
    return x


def check_uniform(t, rtol: float = 1e-6) -> float:
    """Common spacing of ``t``; raises if the cadence is not uniform."""
    d = np.diff(np.asarray(t, dtype=float))
    if d.size == 0:
        raise ValueError("need at least two samples to determine a cadence")
    step = float(np.mean(d))
    if np.max(np.abs(d - step)) > rtol * abs(step):
        raise ValueError("output cadence is not uniform")
    return step
