"""Difference-hash (dHash) codes of gaze heatmaps and their cosine similarity.

The heatmap is area-averaged down to 8 x 9 cells, adjacent cells in each row
are differenced, and a bit is set where the difference is strictly positive.

Signs of near-zero differences are settled in exact rational arithmetic, so
a code depends only on the input values and not on float summation order.
That makes the code bit-exact across platforms, and exactly invariant under
``h -> a*h + b`` (``a > 0``) whenever the transformed grid preserves the
exact ordering of the relevant block averages (always true for equal cells).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DataError, HeatmapTooSmall
from .gaze_model import GazeHeatmap

HASH_ROWS = 8
HASH_COLS = 9
_SIGN_TOLERANCE = 1e-9


@dataclass(frozen=True)
class DHashCode:
    bits: np.ndarray  # (8, 8) bool

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.shape != (8, 8):
            raise DataError(f"dHash code must be 8x8, got {b.shape}")
        b = b.astype(bool)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    def __eq__(self, other):
        return isinstance(other, DHashCode) and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return int(self.to_int())

    def popcount(self) -> int:
        return int(self.bits.sum())

    def to_int(self) -> int:
        value = 0
        for bit in self.bits.ravel():
            value = (value << 1) | int(bit)
        return value

    def to_hex(self) -> str:
        """16 hex digits, row-major, most significant bit is cell (0, 0)."""
        return f"{self.to_int():016x}"

    @classmethod
    def from_hex(cls, text: str) -> "DHashCode":
        text = text.strip()
        if len(text) != 16:
            raise DataError(f"dHash hex string must have 16 digits, got {text!r}")
        value = int(text, 16)
        bits = [(value >> (63 - k)) & 1 for k in range(64)]
        return cls(np.array(bits, dtype=bool).reshape(8, 8))

    def __str__(self):
        return self.to_hex()


@lru_cache(maxsize=64)
def _area_weights_exact(n_in: int, n_out: int) -> tuple[tuple[tuple[int, Fraction], ...], ...]:
    """Sparse exact weights mapping ``n_in`` cells onto ``n_out`` equal bins.

    Output bin ``k`` covers ``[k * n_in / n_out, (k + 1) * n_in / n_out)``;
    input cell ``i`` covers ``[i, i + 1)``; the weight is their overlap
    divided by the bin width, so each bin's weights sum to exactly one.
    """
    width = Fraction(n_in, n_out)
    out = []
    for k in range(n_out):
        lo, hi = k * width, (k + 1) * width
        row = []
        for i in range(math.floor(lo), math.ceil(hi)):
            overlap = min(hi, i + 1) - max(lo, i)
            if overlap > 0:
                row.append((i, overlap / width))
        out.append(tuple(row))
    return tuple(out)


def area_weights(n_in: int, n_out: int) -> np.ndarray:
    W = np.zeros((n_out, n_in))
    for k, row in enumerate(_area_weights_exact(n_in, n_out)):
        for i, w in row:
            W[k, i] = float(w)
    return W


def area_downsample(grid: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Box-filter resize of ``grid`` to ``rows x cols`` with fractional edges."""
    g = np.asarray(grid, dtype=float)
    return area_weights(g.shape[0], rows) @ g @ area_weights(g.shape[1], cols).T


def _exact_row_difference(g: np.ndarray, r: int, c: int) -> Fraction:
    """Exact ``Gbar[r, c+1] - Gbar[r, c]`` for the 8 x 9 area downsample."""
    rw = _area_weights_exact(g.shape[0], HASH_ROWS)[r]
    cw = _area_weights_exact(g.shape[1], HASH_COLS)
    kernel: dict[int, Fraction] = {}
    for j, w in cw[c + 1]:
        kernel[j] = kernel.get(j, 0) + w
    for j, w in cw[c]:
        kernel[j] = kernel.get(j, 0) - w
    rows = [i for i, _ in rw]
    cols = sorted(kernel)
    block = g[np.ix_(rows, cols)]
    if np.all(block == block.flat[0]):
        # column kernel sums to zero, so a constant block contributes nothing
        return Fraction(0)
    total = Fraction(0)
    for (i, wr), line in zip(rw, block):
        acc = Fraction(0)
        for j, v in zip(cols, line):
            if v != 0 and kernel[j] != 0:
                acc += kernel[j] * Fraction(float(v))
        total += wr * acc
    return total


def _row_bits(g: np.ndarray) -> np.ndarray:
    if g.shape[0] < HASH_ROWS or g.shape[1] < HASH_COLS:
        raise HeatmapTooSmall(f"heatmap of shape {g.shape} is smaller than {HASH_ROWS}x{HASH_COLS}")
    Wr = area_weights(g.shape[0], HASH_ROWS)
    Wc = area_weights(g.shape[1], HASH_COLS)
    Wd = Wc[1:] - Wc[:-1]
    D = Wr @ g @ Wd.T
    scale = Wr @ np.abs(g) @ np.abs(Wd).T
    bits = D > 0
    for r, c in zip(*np.nonzero(np.abs(D) <= _SIGN_TOLERANCE * scale)):
        bits[r, c] = _exact_row_difference(g, int(r), int(c)) > 0
    return bits


def dhash_encode(h, direction: str = "row") -> DHashCode:
    """64-bit dHash of a heatmap.

    ``direction="row"`` differences horizontally adjacent cells of the 8 x 9
    downsample; ``"col"`` differences vertically adjacent cells of a 9 x 8
    downsample instead.
    """
    g = h.grid if isinstance(h, GazeHeatmap) else np.asarray(h, dtype=float)
    if g.ndim != 2:
        raise DataError(f"heatmap must be 2-D, got shape {g.shape}")
    if direction == "row":
        return DHashCode(_row_bits(g))
    if direction == "col":
        return DHashCode(_row_bits(g.T).T)
    raise ValueError(f"direction must be 'row' or 'col', got {direction!r}")


def dhash_similarity(h1: DHashCode, h2: DHashCode) -> float:
    """Cosine similarity of the flattened bit masks.

    Two all-zero codes are identical (1.0); exactly one all-zero code is
    orthogonal to anything (0.0).
    """
    n1, n2 = h1.popcount(), h2.popcount()
    if n1 == 0 and n2 == 0:
        return 1.0
    if n1 == 0 or n2 == 0:
        return 0.0
    inter = int(np.logical_and(h1.bits, h2.bits).sum())
    return inter / math.sqrt(n1 * n2)
