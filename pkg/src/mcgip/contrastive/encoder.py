"""Two-layer ReLU encoder with unit-norm outputs and hand-written backprop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PARAM_NAMES = ("W1", "b1", "W2", "b2")


def standardize(x: np.ndarray) -> np.ndarray:
    """Per-row zero mean and unit variance; constant rows map to zeros."""
    mu = x.mean(axis=1, keepdims=True)
    sd = x.std(axis=1, keepdims=True)
    return (x - mu) / np.where(sd > 0, sd, 1.0)


@dataclass
class ToyEncoder:
    """``x -> normalize(W2 @ relu(W1 @ s(x) + b1) + b2)``.

    Inputs are flattened images of dimension ``d``; ``s`` standardizes each
    input to zero mean and unit variance (no parameters). A zero pre-norm
    output maps to the first basis vector. Parameters are
    float64 arrays; ``W1`` is ``(h, d)`` and ``W2`` is ``(e, h)``.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, d: int, hidden: int = 64, out: int = 16, seed: int = 0) -> "ToyEncoder":
        rng = np.random.default_rng(seed)
        W2 = rng.normal(0.0, np.sqrt(1.0 / hidden), size=(out, hidden))
        # zero row sums cancel the common positive mode of the ReLU layer,
        # so initial embeddings are spread over the sphere
        W2 -= W2.mean(axis=1, keepdims=True)
        return cls(
            W1=rng.normal(0.0, np.sqrt(2.0 / d), size=(hidden, d)),
            b1=np.zeros(hidden),
            W2=W2,
            b2=np.zeros(out),
        )

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def output_dim(self) -> int:
        return self.W2.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self) -> "ToyEncoder":
        return ToyEncoder(*(getattr(self, k).copy() for k in PARAM_NAMES))

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, k).ravel() for k in PARAM_NAMES])

    def with_flat(self, theta: np.ndarray) -> "ToyEncoder":
        arrays, k = [], 0
        for name in PARAM_NAMES:
            ref = getattr(self, name)
            arrays.append(np.asarray(theta[k:k + ref.size], dtype=float).reshape(ref.shape).copy())
            k += ref.size
        return ToyEncoder(*arrays)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, k))) for k in PARAM_NAMES)

    def forward(self, x: np.ndarray, cache: bool = False):
        x = standardize(np.asarray(x, dtype=float).reshape(len(x), -1))
        a1 = x @ self.W1.T + self.b1
        r = np.maximum(a1, 0.0)
        u = r @ self.W2.T + self.b2
        norm = np.linalg.norm(u, axis=1, keepdims=True)
        # an input that silences every hidden unit (with b2 = 0) has no direction;
        # it maps to the first basis vector with zero gradient
        dead = norm[:, 0] == 0
        norm = np.where(dead[:, None], np.inf, norm)
        z = u / norm
        z[dead, 0] = 1.0
        if cache:
            return z, (x, a1, r, norm, z)
        return z

    __call__ = forward

    def backward(self, dz: np.ndarray, cache) -> dict[str, np.ndarray]:
        """Parameter gradients given ``dL/dz`` and the cache of ``forward``."""
        x, a1, r, norm, z = cache
        du = (dz - z * np.sum(z * dz, axis=1, keepdims=True)) / norm
        dr = du @ self.W2
        da1 = dr * (a1 > 0)
        return {"W1": da1.T @ x, "b1": da1.sum(axis=0), "W2": du.T @ r, "b2": du.sum(axis=0)}

    def sgd_step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        for k in PARAM_NAMES:
            getattr(self, k)[...] -= lr * grads[k]
