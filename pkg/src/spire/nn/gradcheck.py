"""Central finite differences for checking analytic gradients (use float64)."""

from __future__ import annotations

import numpy as np


def numeric_grad(f, x: np.ndarray, h: float = 1e-5, indices=None, kink_retries: int = 2) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place.

    ``indices`` restricts the check to some flat positions; the rest of the
    returned array is NaN. When the two one-sided differences disagree the
    step straddles a kink (ReLU), so the step is shrunk tenfold, at most
    ``kink_retries`` times.
    """
    flat = x.reshape(-1)
    out = np.full(flat.shape, np.nan)
    idx = range(flat.size) if indices is None else indices
    f0 = f() if kink_retries else None
    for i in idx:
        orig = flat[i]
        step = h
        for attempt in range(kink_retries + 1):
            flat[i] = orig + step
            fp = f()
            flat[i] = orig - step
            fm = f()
            flat[i] = orig
            out[i] = (fp - fm) / (2 * step)
            if attempt == kink_retries:
                break
            right, left = (fp - f0) / step, (f0 - fm) / step
            if abs(right - left) <= 1e-3 * max(abs(right), abs(left), 1e-3):
                break
            step /= 10
    return out.reshape(x.shape)


def rel_error(analytic, numeric, floor: float = 1e-8) -> float:
    """max |a - n| / max(|a|, |n|, floor) over finite entries."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    mask = np.isfinite(n)
    a, n = a[mask], n[mask]
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))
