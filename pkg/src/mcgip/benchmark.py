"""End-to-end synthetic benchmark: gaze-guided pairing vs. augmentation-only.

One run generates a two-pattern dataset, builds a moment-scheme affinity
matrix from its synthetic gaze, pre-trains a fresh encoder, and scores a
linear probe on the frozen embeddings of the un-augmented images.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .contrastive import (AugmentationPolicy, GatedSchedule, SynthParams, ToyEncoder, TrainConfig,
                          diagonal_schedule, linear_probe, synth_gaze_dataset, train)
from .gaze_model import render_heatmap
from .pairing import build_affinity


@dataclass(frozen=True)
class BenchmarkConfig:
    n_per_class: int = 100
    extent: tuple[int, int] = (32, 32)
    heatmap_sigma: float = 2.0
    scheme: str = "moment"
    alpha: float = 0.5
    hidden: int = 64
    out: int = 16
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=50, lr=0.5, batch_size=20,
                                                                    cst="infonce", tau=0.2))
    synth: SynthParams = field(default_factory=SynthParams)
    aug: AugmentationPolicy = field(default_factory=AugmentationPolicy)


@dataclass
class BenchmarkRun:
    seed: int
    mode: str
    accuracy: float
    losses: list[float]
    mean_pair_count: float


def run_once(seed: int, t: float | None, p: float = 1.0,
             config: BenchmarkConfig | None = None) -> BenchmarkRun:
    """``t=None`` trains the augmentation-only baseline on the same data and init."""
    cfg = config or BenchmarkConfig()
    ds = synth_gaze_dataset(cfg.n_per_class, cfg.extent, seed=seed, params=cfg.synth)
    if t is None:
        schedule, mode = diagonal_schedule, "baseline"
    else:
        if cfg.scheme == "multimatch":
            items = ds.gaze
        else:
            items = [render_heatmap(g, cfg.heatmap_sigma) for g in ds.gaze]
        A = build_affinity(items, cfg.scheme, {"alpha": cfg.alpha}, ids=ds.ids)
        schedule, mode = GatedSchedule(A, t, p, seed), f"mcgip(t={t}, p={p})"
    d = ds.images[0].size
    enc = ToyEncoder.init(d, cfg.hidden, cfg.out, seed=seed)
    tcfg = replace(cfg.train, seed=seed)
    res = train(ds.images, ds.ids, enc, schedule, replace(cfg.aug, seed=seed), tcfg)
    Z = res.encoder(ds.images)
    acc = linear_probe(Z, ds.labels, seed=seed)
    return BenchmarkRun(seed, mode, acc, res.losses, float(np.mean(res.mean_pair_counts)))


def mean_accuracy(seeds, t, p=1.0, config=None) -> float:
    return float(np.mean([run_once(s, t, p, config).accuracy for s in seeds]))
