"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np

from mcgip.contrastive import (AugmentationPolicy, GatedSchedule, ToyEncoder, TrainConfig,
                               mcgip_batch_loss, mean_pairwise_distance, synth_gaze_dataset, train)
from mcgip.contrastive.encoder import PARAM_NAMES
from mcgip.contrastive.synth import CENTERED
from mcgip.pairing import AffinityMatrix, select_pairs

FD_STEP = 1e-4
GRAD_FLOOR = 1e-8  # denominators below this compare absolute error instead


def random_grad_config(k: int, varied_shapes: bool = False):
    """Encoder, batch, pairs and loss options of the k-th gradient check.

    By default images are 6x6 and the encoder is 36 -> 8 -> 4; with
    ``varied_shapes`` the image side, hidden and output widths are drawn too.
    """
    rng = np.random.default_rng(k)
    n = int(rng.integers(3, 7))
    if varied_shapes:
        side, hidden, out = int(rng.integers(4, 7)), int(rng.integers(4, 10)), int(rng.integers(2, 6))
    else:
        side, hidden, out = 6, 8, 4
    X = rng.uniform(0, 1, (n, side, side))
    enc = ToyEncoder.init(side * side, hidden, out, seed=k)
    enc = enc.with_flat(enc.flat() + rng.normal(0, 0.1, enc.flat().shape))
    A = rng.uniform(0, 1, (n, n))
    A = (A + A.T) / 2
    np.fill_diagonal(A, 1.0)
    pairs = select_pairs(AffinityMatrix(tuple(f"i{m}" for m in range(n)), A), 0.5, 1.0, seed=k)
    opts = dict(cst=("infonce", "l2")[k % 2], weight_mode=("binary", "affinity")[(k // 2) % 2],
                pair_order=("both", "upper", "symmetrized")[k % 3], exclude_partners=(k % 4 == 0),
                tau=float(rng.uniform(0.1, 1.0)))
    return X, pairs, enc, AugmentationPolicy(seed=k), opts


def gradient_relative_error(k: int, step: float = FD_STEP, varied_shapes: bool = False) -> float:
    """Max per-parameter relative error of analytic vs central-difference gradients."""
    X, pairs, enc, aug, opts = random_grad_config(k, varied_shapes)
    views = aug.views(X)
    report = mcgip_batch_loss(X, pairs, enc, views=views, with_grad=True, **opts)
    g = np.concatenate([report.grads[name].ravel() for name in PARAM_NAMES])
    theta = enc.flat()
    fd = np.empty_like(theta)
    for m in range(len(theta)):
        e = np.zeros_like(theta)
        e[m] = step
        up = mcgip_batch_loss(X, pairs, enc.with_flat(theta + e), views=views, **opts).loss
        down = mcgip_batch_loss(X, pairs, enc.with_flat(theta - e), views=views, **opts).loss
        fd[m] = (up - down) / (2 * step)
    denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), GRAD_FLOOR)
    return float(np.max(np.abs(g - fd) / denom))


def collapse_ratio(seed: int = 0, cst: str = "l2", epochs: int = 50) -> float:
    """Mean pairwise embedding distance after training on one class with every pair accepted,
    relative to its value at initialization."""
    ds = synth_gaze_dataset(50, seed=seed)
    one = ds.subset(np.nonzero(ds.labels == CENTERED)[0])
    n = len(one)
    A = AffinityMatrix(tuple(one.ids), np.ones((n, n)))
    enc = ToyEncoder.init(one.images[0].size, 64, 16, seed=seed)
    cfg = TrainConfig(epochs=epochs, lr=0.5, batch_size=20, cst=cst, tau=0.2, seed=seed)
    res = train(one.images, one.ids, enc, GatedSchedule(A, 0.0, 1.0, seed), AugmentationPolicy(seed=seed), cfg)
    return mean_pairwise_distance(res.encoder(one.images)) / mean_pairwise_distance(enc(one.images))
