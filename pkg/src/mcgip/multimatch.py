"""Multi-match scanpath similarity via per-dimension string-editing DP.

Each of the five dimensions (shape, length, direction, position, duration)
yields a matrix of pairwise editing costs in [0, 1]. The dimension's
dissimilarity is the cheapest monotone path through that matrix, averaged
over the cells it visits; the overall similarity is a weighted sum of
``1 - dissimilarity`` over the dimensions defined for both sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionUndefined, EmptySequence, NonPositiveDuration
from .gaze_model import FixationSequence

DIMENSIONS = ("shape", "length", "direction", "position", "duration")
SACCADE_DIMENSIONS = frozenset({"shape", "length", "direction"})


@dataclass(frozen=True)
class DimensionWeights:
    """Nonnegative per-dimension weights, renormalized to sum to one."""

    w_shape: float = 0.2
    w_length: float = 0.2
    w_direction: float = 0.2
    w_position: float = 0.2
    w_duration: float = 0.2

    def __post_init__(self):
        raw = [getattr(self, f"w_{d}") for d in DIMENSIONS]
        if any(not (w >= 0) for w in raw):
            raise ValueError(f"dimension weights must be nonnegative, got {raw}")
        total = math.fsum(raw)
        if total <= 0:
            raise ValueError("at least one dimension weight must be positive")
        for d, w in zip(DIMENSIONS, raw):
            object.__setattr__(self, f"w_{d}", w / total)

    def as_dict(self) -> dict[str, float]:
        return {d: getattr(self, f"w_{d}") for d in DIMENSIONS}


def duration_cost(d1: float, d2: float) -> float:
    """Relative duration difference ``|d1 - d2| / max(d1, d2)``."""
    if not (d1 > 0 and d2 > 0):
        raise NonPositiveDuration(f"durations must be positive, got {d1}, {d2}")
    return abs(d1 - d2) / max(d1, d2)


def _angle_between(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # atan2(|cross|, dot) is symmetric in (u, v) bit-for-bit; zero vectors give 0
    cross = u[:, None, 0] * v[None, :, 1] - u[:, None, 1] * v[None, :, 0]
    dot = u[:, None, 0] * v[None, :, 0] + u[:, None, 1] * v[None, :, 1]
    return np.arctan2(np.abs(cross), dot)


def _pairwise_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a[:, None, :] - b[None, :, :]
    return np.hypot(d[..., 0], d[..., 1])


def _reference_diagonal(a: FixationSequence, b: FixationSequence) -> float:
    return math.hypot(max(a.extent[0], b.extent[0]), max(a.extent[1], b.extent[1]))


def dimension_costs(a: FixationSequence, b: FixationSequence, dim: str) -> np.ndarray:
    """Pairwise editing-cost matrix for one dimension, entries in [0, 1].

    Rows index ``a`` and columns index ``b``. Duration and position compare
    fixations; shape, length and direction compare saccade vectors and so
    need at least two fixations in each sequence. Distances are normalized by
    the diagonal of the larger of the two image extents.
    """
    if len(a) == 0 or len(b) == 0:
        raise EmptySequence("cannot compare an empty fixation sequence")
    if dim not in DIMENSIONS:
        raise ValueError(f"unknown dimension {dim!r}; expected one of {DIMENSIONS}")
    diag = _reference_diagonal(a, b)

    if dim == "duration":
        da, db = a.durations, b.durations
        if np.any(da <= 0) or np.any(db <= 0):
            raise NonPositiveDuration("durations must be positive")
        return np.abs(da[:, None] - db[None, :]) / np.maximum(da[:, None], db[None, :])
    if dim == "position":
        return np.minimum(_pairwise_distance(a.positions, b.positions) / diag, 1.0)

    if len(a) < 2 or len(b) < 2:
        raise DimensionUndefined(f"{dim} needs at least one saccade in each sequence")
    u, v = a.saccades, b.saccades
    if dim == "direction":
        return _angle_between(u, v) / math.pi
    if dim == "length":
        lu, lv = np.hypot(u[:, 0], u[:, 1]), np.hypot(v[:, 0], v[:, 1])
        return np.minimum(np.abs(lu[:, None] - lv[None, :]) / diag, 1.0)
    # shape: vector difference
    return np.minimum(_pairwise_distance(u, v) / (2.0 * diag), 1.0)


def dp_min_path_cost(S) -> float:
    """Minimum mean cell cost over monotone paths from (0, 0) to (n-1, m-1).

    Steps are right, down or diagonal. Because the objective is an average,
    the DP tracks the cheapest path sum separately for every path length
    ``k`` (``max(n, m) <= k <= n + m - 1``) and only divides at the end.
    Sums accumulate along the path from the start cell, so the result agrees
    bit-for-bit with summing any optimal path in order.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.size == 0:
        raise ValueError(f"cost matrix must be a nonempty 2-D array, got shape {S.shape}")
    n, m = S.shape
    kmax = n + m - 1
    # best[i, j, k]: minimal sum over paths to (i, j) visiting k + 1 cells
    best = np.full((n, m, kmax), np.inf)
    best[0, 0, 0] = S[0, 0]
    for i in range(n):
        for j in range(m):
            if i == 0 and j == 0:
                continue
            acc = np.full(kmax, np.inf)
            if i > 0:
                np.minimum(acc[1:], best[i - 1, j, :-1], out=acc[1:])
            if j > 0:
                np.minimum(acc[1:], best[i, j - 1, :-1], out=acc[1:])
            if i > 0 and j > 0:
                np.minimum(acc[1:], best[i - 1, j - 1, :-1], out=acc[1:])
            best[i, j] = acc + S[i, j]
    sums = best[n - 1, m - 1]
    counts = np.arange(1, kmax + 1, dtype=float)
    finite = np.isfinite(sums)
    return float(np.min(sums[finite] / counts[finite]))


def dimension_similarities(a: FixationSequence, b: FixationSequence) -> dict[str, float]:
    """``1 - dp_min_path_cost`` for every dimension defined for both sequences."""
    if len(a) == 0 or len(b) == 0:
        raise EmptySequence("cannot compare an empty fixation sequence")
    dims = [d for d in DIMENSIONS if d not in SACCADE_DIMENSIONS or (len(a) > 1 and len(b) > 1)]
    return {d: 1.0 - dp_min_path_cost(dimension_costs(a, b, d)) for d in dims}


def multimatch_similarity(a: FixationSequence, b: FixationSequence,
                          weights: DimensionWeights | None = None) -> float:
    """Weighted multi-match similarity in [0, 1].

    When a saccade dimension is undefined (a one-fixation sequence) the
    remaining weights are renormalized. If every defined dimension carries
    zero weight the defined dimensions are averaged uniformly.
    """
    w = (weights or DimensionWeights()).as_dict()
    sims = dimension_similarities(a, b)
    total = math.fsum(w[d] for d in sims)
    if total <= 0:
        return math.fsum(sims.values()) / len(sims)
    value = math.fsum(w[d] * s for d, s in sims.items()) / total
    return min(max(value, 0.0), 1.0)
