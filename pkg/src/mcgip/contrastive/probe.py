from __future__ import annotations

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import train_test_split

from ..errors import DegenerateLabels


def linear_probe(embeddings, labels, seed: int = 0, test_fraction: float = 0.5,
                 C: float = 1.0) -> float:
    """Held-out accuracy of an L2-regularized logistic regression on frozen embeddings.

    The split is stratified and seeded. Embeddings are used as given, with
    no per-feature standardization, so a representation whose classes sit
    very close together scores low even if they remain separable.
    """
    X = np.asarray(embeddings, dtype=float).reshape(len(embeddings), -1)
    y = np.asarray(labels).astype(int)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) != 2 or counts.min() < 2:
        raise DegenerateLabels(f"need two classes with >= 2 samples each, got counts {dict(zip(classes, counts))}")
    X_tr, X_te, y_tr, y_te = train_test_split(X, y, test_size=test_fraction, stratify=y,
                                              random_state=seed)
    clf = LogisticRegression(C=C, max_iter=1000)
    clf.fit(X_tr, y_tr)
    return float(np.mean(clf.predict(X_te) == y_te))
