"""Synthetic two-pattern images with matching synthetic gaze.

Class 0 ("centered"): one compact bright blob; the gaze dwells on it with a
few long fixations. Class 1 ("scattered"): several small faint blobs; the
gaze visits each of them with short fixations. Both classes carry the same
total blob intensity, and every image sits on a strong random smooth
background that has nothing to do with its class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..gaze_model import FixationPoint, FixationSequence

CENTERED, SCATTERED = 0, 1


@dataclass(frozen=True)
class SynthParams:
    blob_mass: float = 60.0
    centered_sigma: float = 2.0
    scattered_sigma: float = 1.2
    scattered_blobs: tuple[int, int] = (4, 6)
    scattered_fixations: tuple[int, int] = (8, 11)
    centered_fixations: tuple[int, int] = (5, 7)
    centered_jitter: float = 1.0
    centered_duration: tuple[float, float] = (280.0, 420.0)
    scattered_duration: tuple[float, float] = (130.0, 230.0)
    scattered_jitter: float = 0.8
    background_amplitude: float = 1.0
    background_bumps: int = 3
    pixel_noise: float = 0.02
    margin: float = 4.0


@dataclass
class SynthDataset:
    ids: list[str]
    images: np.ndarray  # (n, H, W), values in [0, 1]
    gaze: list[FixationSequence]
    labels: np.ndarray

    def __len__(self):
        return len(self.ids)

    def subset(self, idx):
        idx = list(idx)
        return SynthDataset([self.ids[k] for k in idx], self.images[idx],
                            [self.gaze[k] for k in idx], self.labels[idx])


def _blob(H, W, cx, cy, sigma, mass):
    yy, xx = np.mgrid[0:H, 0:W]
    g = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma * sigma))
    return mass * g / (2 * np.pi * sigma * sigma)


def _background(H, W, rng, params):
    yy, xx = np.mgrid[0:H, 0:W] / max(H, W)
    theta = rng.uniform(0, 2 * np.pi)
    field_ = rng.uniform(-1, 1) * (np.cos(theta) * xx + np.sin(theta) * yy)
    for _ in range(params.background_bumps):
        cx, cy = rng.uniform(0, 1, size=2)
        s = rng.uniform(0.15, 0.35)
        field_ += rng.uniform(-1, 1) * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s))
    return params.background_amplitude * field_


def _clip_point(x, y, W, H):
    return float(np.clip(x, 0.0, W - 1e-6)), float(np.clip(y, 0.0, H - 1e-6))


def _centered(H, W, rng, p):
    cx, cy = rng.uniform(p.margin, W - p.margin), rng.uniform(p.margin, H - p.margin)
    img = _blob(H, W, cx, cy, p.centered_sigma, p.blob_mass)
    k = rng.integers(p.centered_fixations[0], p.centered_fixations[1] + 1)
    fix = []
    for _ in range(k):
        x, y = _clip_point(cx + rng.normal(0, p.centered_jitter), cy + rng.normal(0, p.centered_jitter), W, H)
        fix.append(FixationPoint(x, y, float(rng.uniform(*p.centered_duration))))
    return img, fix


def _scattered(H, W, rng, p):
    k = rng.integers(p.scattered_blobs[0], p.scattered_blobs[1] + 1)
    img = np.zeros((H, W))
    fix = []
    centers = []
    for _ in range(k):
        cx, cy = rng.uniform(p.margin, W - p.margin), rng.uniform(p.margin, H - p.margin)
        img += _blob(H, W, cx, cy, p.scattered_sigma, p.blob_mass / k)
        centers.append((cx, cy))
    # every blob is visited once, then random revisits
    n_fix = max(k, rng.integers(p.scattered_fixations[0], p.scattered_fixations[1] + 1))
    visits = list(range(k)) + list(rng.integers(0, k, size=n_fix - k))
    for b in visits:
        cx, cy = centers[b]
        x, y = _clip_point(cx + rng.normal(0, p.scattered_jitter), cy + rng.normal(0, p.scattered_jitter), W, H)
        fix.append(FixationPoint(x, y, float(rng.uniform(*p.scattered_duration))))
    return img, fix


def synth_gaze_dataset(n_per_class: int, extent: tuple[int, int] = (32, 32), seed: int = 0,
                       params: SynthParams | None = None) -> SynthDataset:
    """``n_per_class`` images of each pattern, interleaved by class, fully seed-determined.

    Images are rescaled to ``[0, 1]`` over the whole dataset so that they
    survive 8-bit export without losing the class signal.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    p = params or SynthParams()
    W, H = extent
    rng = np.random.default_rng(seed)
    ids, raw, gaze, labels = [], [], [], []
    for k in range(2 * n_per_class):
        label = k % 2
        img, fix = (_centered if label == CENTERED else _scattered)(H, W, rng, p)
        img = img + _background(H, W, rng, p) + rng.normal(0, p.pixel_noise, size=(H, W))
        image_id = f"s{seed}_{k:04d}"
        ids.append(image_id)
        raw.append(img)
        gaze.append(FixationSequence(image_id, (W, H), tuple(fix)))
        labels.append(label)
    raw = np.stack(raw)
    lo, hi = raw.min(), raw.max()
    images = (raw - lo) / (hi - lo)
    return SynthDataset(ids, images, gaze, np.array(labels))
