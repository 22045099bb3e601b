"""Mean, dispersion, order parameters and the synchronization verdict.

All functions take phase lifts. ``order_r`` only sees the phases modulo
2*pi; ``mean_dispersion`` and ``order_d`` see the lifts themselves, so adding
2*pi to a single oscillator changes them.
"""

from __future__ import annotations

import numpy as np

SYNCHRONIZED = "synchronized"
DESYNCHRONIZED = "desynchronized"


def _lifts(X) -> np.ndarray:
    x = np.asarray(X, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("need at least one phase")
    return x


def mean_dispersion(X) -> tuple[float, float]:
    """Mean of the lifts and their largest pairwise gap ``max(x) - min(x)``."""
    x = _lifts(X)
    return float(np.mean(x)), float(np.max(x) - np.min(x))


def order_r(X) -> float:
    """Modulus of the average unit phasor, in [0, 1]."""
    x = _lifts(X)
    r = float(np.abs(np.mean(np.exp(1j * x))))
    return min(r, 1.0)


def order_d(X) -> float:
    """Largest absolute deviation of a lift from the mean."""
    x = _lifts(X)
    return float(np.max(np.abs(x - np.mean(x))))


def sync_verdict(final_d: float, threshold: float = 3.0 * np.pi) -> str:
    """``synchronized`` iff ``final_d < threshold`` (strict)."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    return SYNCHRONIZED if final_d < threshold else DESYNCHRONIZED
