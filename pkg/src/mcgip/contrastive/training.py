"""Mini-batch SGD on the gaze-guided contrastive loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import DataError, DivergenceDetected
from ..pairing import DEFAULT_CONFIDENCE, DEFAULT_THRESHOLD, AffinityMatrix, Pair, PairSet, select_pairs
from .augment import AugmentationPolicy
from .encoder import ToyEncoder
from .losses import DEFAULT_TAU, mcgip_batch_loss

log = logging.getLogger(__name__)

# (batch image ids, epoch) -> PairSet indexed by batch position
PairSchedule = Callable[[Sequence[str], int], PairSet]


def diagonal_schedule(batch_ids: Sequence[str], epoch: int) -> PairSet:
    """Augmentation-only pairing (no gaze positives)."""
    return PairSet.diagonal(batch_ids)


@dataclass(frozen=True)
class GatedSchedule:
    """Re-thresholds and re-gates the batch slice of a dataset affinity matrix every epoch."""

    affinity: AffinityMatrix
    t: float = DEFAULT_THRESHOLD
    p: float = DEFAULT_CONFIDENCE
    seed: int = 0

    def __call__(self, batch_ids, epoch):
        idx = [self.affinity.index(i) for i in batch_ids]
        sub = self.affinity.subset(idx)
        return select_pairs(sub, self.t, self.p, self.seed, epoch)


@dataclass(frozen=True)
class StaticSchedule:
    """A fixed dataset-level PairSet, sliced to each batch with its accepted flags kept.

    Batch images missing from the pair set get only their diagonal pair.
    """

    pairs: PairSet

    def __call__(self, batch_ids, epoch):
        pos = {self.pairs.ids[k]: k for k in range(len(self.pairs.ids))}
        local = {pos[b]: n for n, b in enumerate(batch_ids) if b in pos}
        out = [Pair(n, n, 1.0, True) for n in range(len(batch_ids))]
        for pr in self.pairs.pairs:
            if pr.i != pr.j and pr.i in local and pr.j in local:
                a, b = local[pr.i], local[pr.j]
                out.append(Pair(min(a, b), max(a, b), pr.affinity, pr.accepted))
        out.sort(key=lambda pr: (pr.i, pr.j))
        return PairSet(tuple(batch_ids), tuple(out), self.pairs.threshold_t,
                       self.pairs.confidence_p, self.pairs.rng_seed, epoch)


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 0.05
    batch_size: int = 50
    cst: str = "infonce"
    tau: float = DEFAULT_TAU
    weight_mode: str = "binary"
    pair_order: str = "both"
    exclude_partners: bool = False
    seed: int = 0


@dataclass
class TrainResult:
    encoder: ToyEncoder
    losses: list[float] = field(default_factory=list)
    mean_pair_counts: list[float] = field(default_factory=list)

    def trace_rows(self):
        return [(e, l, c) for e, (l, c) in enumerate(zip(self.losses, self.mean_pair_counts))]


def train(images: np.ndarray, ids: Sequence[str], enc: ToyEncoder,
          schedule: PairSchedule = diagonal_schedule,
          aug: AugmentationPolicy | None = None,
          config: TrainConfig | None = None) -> TrainResult:
    """Train a copy of ``enc``; the input encoder is left untouched.

    Each epoch shuffles the dataset with a generator keyed by
    ``(config.seed, epoch)``, splits it into batches, asks ``schedule`` for
    the batch's pairs and takes one SGD step per batch. The recorded loss is
    the mean batch loss of the epoch, evaluated before each step.
    """
    cfg = config or TrainConfig()
    images = np.asarray(images, dtype=float)
    ids = list(ids)
    if len(images) == 0 or len(images) != len(ids):
        raise DataError("dataset must be nonempty with one id per image")
    aug = aug or AugmentationPolicy(seed=cfg.seed)
    enc = enc.copy()
    result = TrainResult(enc)
    n = len(images)
    bs = max(1, min(cfg.batch_size, n))

    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        losses, counts = [], []
        for b, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            batch_ids = [ids[k] for k in idx]
            pairs = schedule(batch_ids, epoch)
            report = mcgip_batch_loss(images[idx], pairs, enc, aug, cfg.cst, cfg.tau,
                                      cfg.weight_mode, cfg.pair_order, cfg.exclude_partners,
                                      stream=(epoch, b), with_grad=True)
            if not np.isfinite(report.loss):
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}, batch {b}")
            enc.sgd_step(report.grads, cfg.lr)
            if not enc.is_finite():
                raise DivergenceDetected(f"non-finite parameters at epoch {epoch}, batch {b}")
            losses.append(report.loss)
            counts.append(report.pair_count)
        result.losses.append(float(np.mean(losses)))
        result.mean_pair_counts.append(float(np.mean(counts)))
        log.debug("epoch %d loss %.6f pairs %.1f", epoch, result.losses[-1], result.mean_pair_counts[-1])
    return result


def mean_pairwise_distance(Z: np.ndarray) -> float:
    Z = np.asarray(Z, dtype=float)
    n = len(Z)
    if n < 2:
        return 0.0
    d = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=-1)
    return float(d[np.triu_indices(n, k=1)].mean())
