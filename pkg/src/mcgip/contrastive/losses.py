"""Constraint functions and the gaze-guided batch loss with exact gradients.

The batch loss averages a constraint (InfoNCE or squared L2) between an
anchor embedding ``enc(x_i)`` and a view embedding ``enc(aug(x_j))`` over
every accepted pair, weighted either by an indicator or by the pair's gaze
affinity:

    L = sum_ij w_ij * CST(enc(x_i), enc(aug(x_j))) / sum_ij w_ij
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from ..errors import EmptyPairSet, UnnormalizedEmbedding
from ..pairing import PairSet
from .augment import AugmentationPolicy
from .encoder import PARAM_NAMES, ToyEncoder

NORM_TOLERANCE = 1e-6
CST_CHOICES = ("infonce", "l2")
WEIGHT_MODES = ("binary", "affinity")
PAIR_ORDERS = ("both", "upper", "symmetrized")
DEFAULT_TAU = 0.2


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if self.normalized:
            _check_normalized(v)
        object.__setattr__(self, "values", v)

    @classmethod
    def of(cls, raw) -> "Embedding":
        v = np.asarray(raw, dtype=float).ravel()
        return cls(v / np.linalg.norm(v))


def _vec(z) -> np.ndarray:
    v = z.values if isinstance(z, Embedding) else np.asarray(z, dtype=float).ravel()
    _check_normalized(v)
    return v


def _check_normalized(v: np.ndarray) -> None:
    norm = float(np.linalg.norm(v))
    if not abs(norm - 1.0) <= NORM_TOLERANCE:
        raise UnnormalizedEmbedding(f"embedding norm {norm} is not 1")


def info_nce(z_i, z_hat_j, batch_views: Sequence, tau: float = DEFAULT_TAU) -> float:
    """``-log softmax`` of ``<z_i, z_hat_j> / tau`` against every view in the batch.

    ``z_hat_j`` must be one of ``batch_views`` (the denominator already
    contains it once through ``batch_views``).
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    zi, zj = _vec(z_i), _vec(z_hat_j)
    V = np.stack([_vec(v) for v in batch_views])
    if not np.any(np.all(V == zj, axis=1)):
        raise ValueError("z_hat_j must be one of batch_views")
    logits = V @ zi / tau
    return max(float(logsumexp(logits) - (zi @ zj) / tau), 0.0)


def l2_cst(z_i, z_hat_j) -> float:
    """Squared Euclidean distance of unit vectors, ``2 - 2 <z_i, z_hat_j>``."""
    zi, zj = _vec(z_i), _vec(z_hat_j)
    return float(min(max(2.0 - 2.0 * (zi @ zj), 0.0), 4.0))


class Term(NamedTuple):
    i: int
    j: int
    weight: float
    cst_value: float


@dataclass
class BatchLossReport:
    loss: float
    terms: list[Term]
    pair_count: int  # accepted pairs contributing, diagonal included
    denominator: float
    grads: dict[str, np.ndarray] | None = field(default=None, repr=False)

    def recomputed_loss(self) -> float:
        return sum(t.weight * t.cst_value for t in self.terms) / sum(t.weight for t in self.terms)


def loss_terms(pairs: PairSet, weight_mode: str = "binary", pair_order: str = "both"):
    """Ordered ``(anchor, view, weight)`` triples for the accepted pairs."""
    if weight_mode not in WEIGHT_MODES:
        raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}, got {weight_mode!r}")
    if pair_order not in PAIR_ORDERS:
        raise ValueError(f"pair_order must be one of {PAIR_ORDERS}, got {pair_order!r}")
    out = []
    for pr in pairs.accepted():
        w = 1.0 if weight_mode == "binary" else pr.affinity
        if pr.i == pr.j or pair_order == "upper":
            out.append((pr.i, pr.j, w))
        elif pair_order == "both":
            out += [(pr.i, pr.j, w), (pr.j, pr.i, w)]
        else:
            out += [(pr.i, pr.j, w / 2), (pr.j, pr.i, w / 2)]
    return out


def _partner_mask(pairs: PairSet, n: int) -> np.ndarray:
    m = np.zeros((n, n), dtype=bool)
    for pr in pairs.accepted_off_diagonal():
        m[pr.i, pr.j] = m[pr.j, pr.i] = True
    return m


def embedding_loss(Z: np.ndarray, V: np.ndarray, pairs: PairSet, cst: str = "infonce",
                   tau: float = DEFAULT_TAU, weight_mode: str = "binary", pair_order: str = "both",
                   exclude_partners: bool = False, with_grad: bool = False):
    """Batch loss on precomputed unit-norm anchor embeddings ``Z`` and view embeddings ``V``.

    Returns ``(report, dZ, dV)``; the gradients are ``None`` unless
    ``with_grad``. With ``exclude_partners`` an anchor's other accepted
    gaze partners are dropped from its InfoNCE denominator.
    """
    if cst not in CST_CHOICES:
        raise ValueError(f"cst must be one of {CST_CHOICES}, got {cst!r}")
    n = len(Z)
    terms = loss_terms(pairs, weight_mode, pair_order)
    if not terms:
        raise EmptyPairSet("no accepted pairs in batch")
    total_w = sum(w for _, _, w in terms)
    if total_w <= 0:
        raise EmptyPairSet("accepted pairs carry zero total weight")
    dots = Z @ V.T
    M = np.zeros((n, n))
    for i, j, w in terms:
        M[i, j] += w
    active = M > 0

    if cst == "l2":
        values = np.clip(2.0 - 2.0 * dots, 0.0, 4.0)
        G = -2.0 * M / total_w if with_grad else None
    else:
        values, G = _info_nce_matrix(dots / tau, M / total_w, active, pairs, n,
                                     exclude_partners, with_grad)
        if G is not None:
            G = G / tau

    out_terms = [Term(i, j, w, float(values[i, j])) for i, j, w in terms]
    loss = sum(t.weight * t.cst_value for t in out_terms) / total_w
    report = BatchLossReport(float(loss), out_terms, len(pairs.accepted()), total_w)
    if not with_grad:
        return report, None, None
    return report, G @ V, G.T @ Z


def _info_nce_matrix(logits, Mn, active, pairs, n, exclude_partners, with_grad):
    """InfoNCE value of every (anchor, view) cell plus ``dL/dlogits``.

    Term ``(i, j)`` normalizes over the views ``N_i`` that are not accepted
    partners of ``i`` (all views unless excluding), plus ``j`` itself, so its
    log-normalizer is ``logaddexp(base_i, logit_ij)`` for a partner ``j`` and
    ``base_i`` otherwise.
    """
    partners = _partner_mask(pairs, n) if exclude_partners else np.zeros((n, n), dtype=bool)
    keep = ~partners
    c = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - c) * keep
    base = c[:, 0] + np.log(e.sum(axis=1))
    L = np.where(partners, np.logaddexp(base[:, None], logits), base[:, None])
    values = L - logits
    if not with_grad:
        return values, None
    # rows of the softmax restricted to N_i, weighted by each term's normalizer
    inv = np.where(active, Mn * np.exp(c - L), 0.0)
    G = e * inv.sum(axis=1, keepdims=True)
    G += np.where(partners, Mn * np.exp(logits - L), 0.0)
    G -= Mn
    return values, G


def mcgip_batch_loss(batch: np.ndarray, pairs: PairSet, enc: ToyEncoder,
                     aug: AugmentationPolicy | None = None, cst: str = "infonce",
                     tau: float = DEFAULT_TAU, weight_mode: str = "binary",
                     pair_order: str = "both", exclude_partners: bool = False,
                     views: np.ndarray | None = None, stream=(),
                     with_grad: bool = False) -> BatchLossReport:
    """Gaze-guided contrastive loss of one batch of images.

    ``pairs`` indexes into ``batch``. Views come from ``views`` if given,
    otherwise from ``aug.views(batch, stream)``. With ``with_grad`` the
    report carries exact parameter gradients in ``report.grads``.
    """
    batch = np.asarray(batch, dtype=float)
    if len(batch) == 0:
        raise ValueError("batch is empty")
    if len(pairs.ids) != len(batch):
        raise ValueError(f"pair set covers {len(pairs.ids)} images but batch has {len(batch)}")
    if views is None:
        if aug is None:
            raise ValueError("either aug or views must be given")
        views = aug.views(batch, stream)
    Z, cz = enc.forward(batch, cache=True)
    V, cv = enc.forward(views, cache=True)
    report, dZ, dV = embedding_loss(Z, V, pairs, cst, tau, weight_mode, pair_order,
                                    exclude_partners, with_grad)
    if with_grad:
        gz = enc.backward(dZ, cz)
        gv = enc.backward(dV, cv)
        report.grads = {k: gz[k] + gv[k] for k in PARAM_NAMES}
    return report


def plain_contrastive_loss(batch, enc: ToyEncoder, views, cst: str = "infonce",
                           tau: float = DEFAULT_TAU) -> float:
    """Mean over images of ``CST(enc(x_i), enc(view_i))``, one image at a time."""
    Z = [Embedding(z) for z in enc(np.asarray(batch, dtype=float))]
    V = [Embedding(v) for v in enc(np.asarray(views, dtype=float))]
    if cst == "l2":
        vals = [l2_cst(z, v) for z, v in zip(Z, V)]
    else:
        vals = [info_nce(z, v, V, tau) for z, v in zip(Z, V)]
    return float(np.mean(vals))
