"""Raw gaze recordings, fixation detection and duration-weighted heatmaps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DataError, EmptyRecording, EmptySequence, NoFixations

DEFAULT_DISPERSION_PX = 35.0
DEFAULT_MIN_DURATION_MS = 100.0
DEFAULT_SIGMA_PX = 25.0
DEFAULT_GRID_SCALE = 1.0
KERNEL_RADIUS_SIGMAS = 3.0


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GazeRecording:
    """Timestamped gaze samples for one image, in image pixel coordinates.

    Samples falling outside ``[0, width) x [0, height)`` are dropped on
    construction; ``n_dropped`` records how many.
    """

    image_id: str
    width_px: int
    height_px: int
    samples: np.ndarray  # (N, 3): timestamp_ms, x, y
    n_dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise DataError(f"image extent must be positive, got {self.width_px}x{self.height_px}")
        s = np.asarray(self.samples, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(s)):
            raise DataError("gaze samples must be finite")
        if np.any(np.diff(s[:, 0]) <= 0):
            raise DataError("timestamps must be strictly increasing")
        inside = (s[:, 1] >= 0) & (s[:, 1] < self.width_px) & (s[:, 2] >= 0) & (s[:, 2] < self.height_px)
        object.__setattr__(self, "samples", _frozen(s[inside]))
        object.__setattr__(self, "n_dropped", self.n_dropped + int((~inside).sum()))

    @property
    def timestamps(self) -> np.ndarray:
        return self.samples[:, 0]

    def time_span(self) -> float:
        if len(self.samples) == 0:
            return 0.0
        return float(self.samples[-1, 0] - self.samples[0, 0])


class FixationPoint(NamedTuple):
    x: float
    y: float
    duration: float


@dataclass(frozen=True)
class FixationSequence:
    """Ordered fixations for one image (the "gaze sequence" representation)."""

    image_id: str
    extent: tuple[int, int]  # (width_px, height_px)
    fixations: tuple[FixationPoint, ...]

    def __post_init__(self):
        fx = tuple(FixationPoint(float(f[0]), float(f[1]), float(f[2])) for f in self.fixations)
        if not fx:
            raise EmptySequence(f"fixation sequence {self.image_id!r} is empty")
        w, h = self.extent
        for k, f in enumerate(fx):
            if not f.duration > 0:
                raise DataError(f"fixation {k} of {self.image_id!r} has non-positive duration {f.duration}")
            if not (0 <= f.x < w and 0 <= f.y < h):
                raise DataError(f"fixation {k} of {self.image_id!r} lies outside the {w}x{h} extent")
        object.__setattr__(self, "fixations", fx)
        object.__setattr__(self, "extent", (int(w), int(h)))

    def __len__(self):
        return len(self.fixations)

    @property
    def positions(self) -> np.ndarray:
        return np.array([(f.x, f.y) for f in self.fixations], dtype=float)

    @property
    def durations(self) -> np.ndarray:
        return np.array([f.duration for f in self.fixations], dtype=float)

    @property
    def saccades(self) -> np.ndarray:
        """Vectors between consecutive fixation centroids, shape (len - 1, 2)."""
        return np.diff(self.positions, axis=0)

    @property
    def diagonal(self) -> float:
        return math.hypot(*self.extent)

    def scaled_durations(self, c: float) -> "FixationSequence":
        return FixationSequence(self.image_id, self.extent,
                                tuple(FixationPoint(f.x, f.y, f.duration * c) for f in self.fixations))


@dataclass(frozen=True)
class GazeHeatmap:
    """Dense grid of gaze mass; units are milliseconds of gaze per cell."""

    image_id: str
    grid: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 2 or g.size == 0:
            raise DataError(f"heatmap {self.image_id!r} must be a nonempty 2-D grid, got shape {g.shape}")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise DataError(f"heatmap {self.image_id!r} must be finite and nonnegative")
        object.__setattr__(self, "grid", _frozen(g))

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def total_mass(self) -> float:
        return float(self.grid.sum())


def _dispersion(pts: np.ndarray) -> float:
    return float(np.ptp(pts[:, 0]) + np.ptp(pts[:, 1]))


def detect_fixations(rec: GazeRecording, dispersion_px: float = DEFAULT_DISPERSION_PX,
                     min_duration_ms: float = DEFAULT_MIN_DURATION_MS) -> FixationSequence:
    """Dispersion-threshold (I-DT) fixation detection.

    A window is opened over the shortest run of samples spanning at least
    ``min_duration_ms``. If its dispersion ``(max x - min x) + (max y - min y)``
    is within ``dispersion_px`` the window grows sample by sample until the
    next sample would break the threshold; its centroid becomes a fixation
    and the window's samples are consumed. Otherwise the window start advances
    by one sample. Samples never assigned to a fixation are saccade samples
    and are discarded.
    """
    if dispersion_px <= 0 or min_duration_ms <= 0:
        raise ValueError("dispersion_px and min_duration_ms must be positive")
    s = rec.samples
    n = len(s)
    if n == 0:
        raise EmptyRecording(f"recording {rec.image_id!r} has no valid samples")
    t, xy = s[:, 0], s[:, 1:]

    fixations = []
    i = 0
    while i < n:
        # shortest window [i, j] with t[j] - t[i] >= min_duration_ms
        j = int(np.searchsorted(t, t[i] + min_duration_ms, side="left"))
        if j >= n:
            break
        if _dispersion(xy[i:j + 1]) > dispersion_px:
            i += 1
            continue
        while j + 1 < n and _dispersion(xy[i:j + 2]) <= dispersion_px:
            j += 1
        cx, cy = xy[i:j + 1].mean(axis=0)
        fixations.append(FixationPoint(float(cx), float(cy), float(t[j] - t[i])))
        i = j + 1

    if not fixations:
        raise NoFixations(f"no cluster in {rec.image_id!r} lasts {min_duration_ms} ms "
                          f"within {dispersion_px} px dispersion")
    return FixationSequence(rec.image_id, (rec.width_px, rec.height_px), tuple(fixations))


def grid_shape(extent: tuple[int, int], grid_scale: float) -> tuple[int, int]:
    """(rows, cols) of the heatmap grid for an image ``extent = (width, height)``."""
    w, h = extent
    return math.ceil(h * grid_scale), math.ceil(w * grid_scale)


def gaussian_kernel(cx: float, cy: float, sigma: float, shape: tuple[int, int]):
    """Unit-mass isotropic Gaussian sampled on integer cell coordinates.

    The kernel is truncated to a disk of radius 3 sigma and normalized over
    that whole disk before clipping to ``shape``, so mass lying outside the
    grid is lost rather than redistributed. Returns ``(row_slice, col_slice,
    weights)``.
    """
    r = KERNEL_RADIUS_SIGMAS * sigma
    xs = np.arange(math.ceil(cx - r), math.floor(cx + r) + 1)
    ys = np.arange(math.ceil(cy - r), math.floor(cy + r) + 1)
    dx2 = (xs - cx) ** 2
    dy2 = (ys - cy) ** 2
    d2 = dy2[:, None] + dx2[None, :]
    k = np.where(d2 <= r * r, np.exp(-d2 / (2.0 * sigma * sigma)), 0.0)
    if not k.any():
        # the disk holds no cell coordinate: all mass goes to the nearest cell
        xs, ys = np.array([math.floor(cx + 0.5)]), np.array([math.floor(cy + 0.5)])
        k = np.ones((1, 1))
    k /= k.sum()

    rows, cols = shape
    y0, x0 = int(ys[0]), int(xs[0])
    r_lo, r_hi = max(y0, 0), min(int(ys[-1]) + 1, rows)
    c_lo, c_hi = max(x0, 0), min(int(xs[-1]) + 1, cols)
    if r_lo >= r_hi or c_lo >= c_hi:
        return slice(0, 0), slice(0, 0), np.zeros((0, 0))
    return (slice(r_lo, r_hi), slice(c_lo, c_hi),
            k[r_lo - y0:r_hi - y0, c_lo - x0:c_hi - x0])


def render_heatmap(seq: FixationSequence, sigma_px: float = DEFAULT_SIGMA_PX,
                   grid_scale: float = DEFAULT_GRID_SCALE) -> GazeHeatmap:
    """Sum of duration-weighted unit-mass Gaussians, one per fixation.

    ``sigma_px`` is in image pixels; both the centroids and sigma are mapped
    onto the grid by ``grid_scale``.
    """
    if sigma_px <= 0 or grid_scale <= 0:
        raise ValueError("sigma_px and grid_scale must be positive")
    shape = grid_shape(seq.extent, grid_scale)
    grid = np.zeros(shape)
    sigma = sigma_px * grid_scale
    for f in seq.fixations:
        rs, cs, k = gaussian_kernel(f.x * grid_scale, f.y * grid_scale, sigma, shape)
        grid[rs, cs] += f.duration * k
    return GazeHeatmap(seq.image_id, grid)


def recording_from_arrays(image_id: str, width: int, height: int,
                          t: Sequence[float], x: Sequence[float], y: Sequence[float]) -> GazeRecording:
    return GazeRecording(image_id, width, height, np.column_stack([t, x, y]))
