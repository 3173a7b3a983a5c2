"""Affinity matrices over any similarity scheme, and positive-pair selection."""

from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .dhash_sim import dhash_encode, dhash_similarity
from .errors import DataError, McgipError, MixedRepresentation, PairError
from .gaze_model import FixationSequence, GazeHeatmap
from .moment_sim import DEFAULT_ALPHA, moment_affinity, moment_vector
from .multimatch import DimensionWeights, multimatch_similarity

DEFAULT_THRESHOLD = 0.7
DEFAULT_CONFIDENCE = 0.5
SCHEMES = ("multimatch", "moment", "dhash")


@dataclass(frozen=True)
class AffinityMatrix:
    ids: tuple[str, ...]
    A: np.ndarray

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        A = np.array(self.A, dtype=float)
        n = len(ids)
        if A.shape != (n, n):
            raise DataError(f"affinity matrix shape {A.shape} does not match {n} ids")
        if len(set(ids)) != n:
            raise DataError("affinity ids must be unique")
        if not np.array_equal(A, A.T):
            i, j = np.argwhere(A != A.T)[0]
            raise DataError(f"affinity matrix is not symmetric at ({ids[i]}, {ids[j]})")
        if not np.all(np.diag(A) == 1.0):
            raise DataError("affinity matrix diagonal must be 1")
        if not (np.all(A >= 0.0) and np.all(A <= 1.0)):
            raise DataError("affinity entries must lie in [0, 1]")
        A.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "A", A)

    def __len__(self):
        return len(self.ids)

    def index(self, image_id: str) -> int:
        return self.ids.index(image_id)

    def subset(self, indices: Sequence[int]) -> "AffinityMatrix":
        idx = np.asarray(indices, dtype=int)
        return AffinityMatrix(tuple(self.ids[k] for k in idx), self.A[np.ix_(idx, idx)])


class Pair(NamedTuple):
    i: int
    j: int
    affinity: float
    accepted: bool


@dataclass(frozen=True)
class PairSet:
    """Diagonal pairs plus every off-diagonal candidate with ``A_ij >= t``.

    Indices refer to ``ids``. Diagonal pairs are always accepted; each
    candidate carries its confidence-gate outcome in ``accepted``.
    """

    ids: tuple[str, ...]
    pairs: tuple[Pair, ...]
    threshold_t: float
    confidence_p: float
    rng_seed: int
    epoch: int = 0
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        seen = {}
        n = len(self.ids)
        for pr in self.pairs:
            if not (0 <= pr.i <= pr.j < n):
                raise DataError(f"pair ({pr.i}, {pr.j}) must satisfy 0 <= i <= j < {n}")
            if (pr.i, pr.j) in seen:
                raise DataError(f"duplicate pair ({pr.i}, {pr.j})")
            if pr.i == pr.j and not pr.accepted:
                raise DataError(f"diagonal pair ({pr.i}, {pr.i}) must be accepted")
            if pr.i != pr.j and pr.affinity < self.threshold_t:
                raise DataError(f"pair ({pr.i}, {pr.j}) has affinity {pr.affinity} below t={self.threshold_t}")
            seen[(pr.i, pr.j)] = pr
        object.__setattr__(self, "_index", seen)

    def accepted(self) -> list[Pair]:
        return [pr for pr in self.pairs if pr.accepted]

    def accepted_off_diagonal(self) -> list[Pair]:
        return [pr for pr in self.pairs if pr.accepted and pr.i != pr.j]

    def get(self, i: int, j: int) -> Pair | None:
        return self._index.get((min(i, j), max(i, j)))

    @classmethod
    def diagonal(cls, ids: Sequence[str], t: float = DEFAULT_THRESHOLD, seed: int = 0) -> "PairSet":
        """Standard contrastive pairing: every image with its own view only."""
        return cls(tuple(ids), tuple(Pair(k, k, 1.0, True) for k in range(len(ids))), t, 0.0, seed)

    def reindexed(self, order: Sequence[int]) -> "PairSet":
        """The same pairs for a batch permuted so that new position ``k`` holds old ``order[k]``."""
        pos = {old: new for new, old in enumerate(order)}
        moved = []
        for pr in self.pairs:
            a, b = pos[pr.i], pos[pr.j]
            moved.append(Pair(min(a, b), max(a, b), pr.affinity, pr.accepted))
        moved.sort(key=lambda pr: (pr.i, pr.j))
        return PairSet(tuple(self.ids[k] for k in order), tuple(moved),
                       self.threshold_t, self.confidence_p, self.rng_seed, self.epoch)


def _prepare(items, scheme: str, params: dict):
    if scheme == "multimatch":
        bad = [k for k, it in enumerate(items) if not isinstance(it, FixationSequence)]
        if bad:
            raise MixedRepresentation(f"multimatch needs fixation sequences; item {bad[0]} is "
                                      f"{type(items[bad[0]]).__name__}")
        weights = params.get("weights") or DimensionWeights()
        return list(items), lambda a, b: multimatch_similarity(a, b, weights)
    if scheme in ("moment", "dhash"):
        bad = [k for k, it in enumerate(items) if not isinstance(it, GazeHeatmap)]
        if bad:
            raise MixedRepresentation(f"{scheme} needs heatmaps; item {bad[0]} is "
                                      f"{type(items[bad[0]]).__name__}")
        prepared = []
        for k, it in enumerate(items):
            try:
                if scheme == "moment":
                    prepared.append(moment_vector(it))
                else:
                    prepared.append(dhash_encode(it, params.get("direction", "row")))
            except McgipError as exc:
                raise PairError(k, k, exc) from exc
        if scheme == "moment":
            alpha = params.get("alpha", DEFAULT_ALPHA)
            return prepared, lambda a, b: moment_affinity(a, b, alpha)
        return prepared, dhash_similarity
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def build_affinity(items: Sequence, scheme: str, params: dict | None = None,
                   ids: Sequence[str] | None = None, jobs: int = 1) -> AffinityMatrix:
    """Pairwise gaze affinity of ``items`` under ``scheme``.

    Each unordered pair is evaluated once and mirrored; the diagonal is 1 by
    definition. ``jobs > 1`` evaluates pairs in a thread pool; results are
    placed by pair index, so the output does not depend on scheduling.
    """
    params = params or {}
    items = list(items)
    if ids is None:
        ids = [it.image_id for it in items]
    prepared, sim = _prepare(items, scheme, params)
    n = len(items)
    A = np.eye(n)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def evaluate(ij):
        i, j = ij
        try:
            return sim(prepared[i], prepared[j])
        except McgipError as exc:
            raise PairError(i, j, exc) from exc

    if jobs > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(evaluate, pairs))
    else:
        values = [evaluate(ij) for ij in pairs]
    for (i, j), v in zip(pairs, values):
        A[i, j] = A[j, i] = v
    return AffinityMatrix(tuple(ids), A)


def gate_uniform(seed: int, id_a: str, id_b: str, epoch: int = 0) -> float:
    """Deterministic uniform draw in [0, 1) keyed by the unordered id pair."""
    lo, hi = sorted((str(id_a), str(id_b)))
    key = struct.pack("<qq", seed, epoch) + lo.encode() + b"\x00" + hi.encode()
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2.0 ** 64


def select_pairs(A: AffinityMatrix, t: float = DEFAULT_THRESHOLD, p: float = DEFAULT_CONFIDENCE,
                 seed: int = 0, epoch: int = 0) -> PairSet:
    """Threshold candidates at ``t`` and accept each with probability ``p``.

    The acceptance draw for a candidate depends only on ``(seed, epoch)`` and
    its two image ids, so it is unaffected by batch composition or order.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"confidence p must lie in [0, 1], got {p}")
    n = len(A)
    pairs = [Pair(k, k, 1.0, True) for k in range(n)]
    iu, ju = np.triu_indices(n, k=1)
    vals = A.A[iu, ju]
    for i, j, a in zip(iu[vals >= t], ju[vals >= t], vals[vals >= t]):
        ok = gate_uniform(seed, A.ids[i], A.ids[j], epoch) < p
        pairs.append(Pair(int(i), int(j), float(a), bool(ok)))
    pairs.sort(key=lambda pr: (pr.i, pr.j))
    return PairSet(A.ids, tuple(pairs), float(t), float(p), int(seed), int(epoch))


def pair_count_curve(A: AffinityMatrix, thresholds: Iterable[float]) -> list[tuple[float, int]]:
    """Number of off-diagonal candidate pairs at each threshold."""
    thresholds = list(thresholds)
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    vals = np.sort(A.A[np.triu_indices(len(A), k=1)])
    return [(t, int(len(vals) - np.searchsorted(vals, t, side="left"))) for t in thresholds]
