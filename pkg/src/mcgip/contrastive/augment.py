from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates


@dataclass(frozen=True)
class AugmentationPolicy:
    """Random horizontal flip, random crop resized back, additive Gaussian noise.

    Applied in that order. ``crop_range`` bounds the side length of the crop
    as a fraction of the image side.
    """

    flip_prob: float = 0.5
    crop_range: tuple[float, float] = (0.75, 1.0)
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.crop_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError(f"crop_range must satisfy 0 < lo <= hi <= 1, got {self.crop_range}")
        if not (0.0 <= self.flip_prob <= 1.0) or self.noise_sigma < 0:
            raise ValueError("flip_prob must lie in [0, 1] and noise_sigma must be >= 0")

    def rng(self, stream=()) -> np.random.Generator:
        key = [self.seed] + [int(s) for s in np.atleast_1d(stream)]
        return np.random.default_rng(key)

    def views(self, images: np.ndarray, stream=()) -> np.ndarray:
        """One augmented view per image, deterministic in ``(seed, stream)``."""
        images = np.asarray(images, dtype=float)
        n, H, W = images.shape
        rng = self.rng(stream)
        flip = rng.random(n) < self.flip_prob
        frac = rng.uniform(*self.crop_range, size=n)
        ch, cw = frac * (H - 1), frac * (W - 1)
        r0 = rng.uniform(0.0, 1.0, size=n) * ((H - 1) - ch)
        c0 = rng.uniform(0.0, 1.0, size=n) * ((W - 1) - cw)
        src = np.where(flip[:, None, None], images[:, :, ::-1], images)
        u = np.linspace(0.0, 1.0, H)
        v = np.linspace(0.0, 1.0, W)
        rows = r0[:, None] + ch[:, None] * u[None, :]
        cols = c0[:, None] + cw[:, None] * v[None, :]
        coords = np.empty((3, n, H, W))
        coords[0] = np.arange(n)[:, None, None]
        coords[1] = rows[:, :, None]
        coords[2] = cols[:, None, :]
        out = map_coordinates(src, coords, order=1, mode="nearest")
        if self.noise_sigma > 0:
            out = out + rng.normal(0.0, self.noise_sigma, size=out.shape)
        return out


IDENTITY = AugmentationPolicy(flip_prob=0.0, crop_range=(1.0, 1.0), noise_sigma=0.0)
