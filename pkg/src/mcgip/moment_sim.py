"""Gaze-moment similarity: total mass and the first Hu invariant of a heatmap."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ZeroMassHeatmap
from .gaze_model import GazeHeatmap

DEFAULT_ALPHA = 0.5


@dataclass(frozen=True)
class MomentVector:
    mu00: float
    phi1: float

    def __post_init__(self):
        if not (self.mu00 >= 0 and self.phi1 >= 0):
            raise DataError(f"moment vector components must be nonnegative, got {self}")


def _grid(h) -> np.ndarray:
    return h.grid if isinstance(h, GazeHeatmap) else np.asarray(h, dtype=float)


def raw_and_central_moments(h, p: int, q: int) -> float:
    """Central moment ``mu_pq`` of a heatmap, summed over cell centers.

    Cell ``(row, col)`` sits at ``x = col``, ``y = row``. ``mu_00`` is the
    total mass; higher orders are taken about the mass centroid.
    """
    if p < 0 or q < 0 or p + q > 2:
        raise ValueError(f"only moment orders p + q <= 2 are supported, got ({p}, {q})")
    f = _grid(h)
    if f.size == 0:
        raise DataError("heatmap is empty")
    m00 = float(f.sum())
    if p == 0 and q == 0:
        return m00
    if m00 <= 0:
        raise ZeroMassHeatmap("centroid of a zero-mass heatmap is undefined")
    col_mass = f.sum(axis=0)
    row_mass = f.sum(axis=1)
    xs = np.arange(f.shape[1], dtype=float)
    ys = np.arange(f.shape[0], dtype=float)
    xbar = float(col_mass @ xs) / m00
    ybar = float(row_mass @ ys) / m00
    dx, dy = xs - xbar, ys - ybar
    if q == 0:
        return float(col_mass @ dx ** p)
    if p == 0:
        return float(row_mass @ dy ** q)
    return float(dy @ f @ dx)


def moment_vector(h) -> MomentVector:
    """``[mu00, (mu20 + mu02) / mu00**2]``."""
    mu00 = raw_and_central_moments(h, 0, 0)
    if mu00 <= 0:
        raise ZeroMassHeatmap("moment vector of a zero-mass heatmap is undefined")
    inertia = raw_and_central_moments(h, 2, 0) + raw_and_central_moments(h, 0, 2)
    return MomentVector(mu00, inertia / mu00 ** 2)


def relative_difference(x: float, y: float) -> float:
    """``|x - y| / max(x, y)`` for nonnegative inputs, with ``(0, 0) -> 0``."""
    m = max(x, y)
    if m == 0:
        return 0.0
    return abs(x - y) / m


def moment_affinity(m1: MomentVector, m2: MomentVector, alpha: float = DEFAULT_ALPHA) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return (alpha * (1.0 - relative_difference(m1.mu00, m2.mu00))
            + (1.0 - alpha) * (1.0 - relative_difference(m1.phi1, m2.phi1)))
