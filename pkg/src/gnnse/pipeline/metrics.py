"""Pooled error metrics over whole test sets."""
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class Metrics:
    mse: float
    pearson: float
    n_samples: int = 0

    def to_dict(self):
        return asdict(self)


def pooled_mse(preds, labels):
    p = np.concatenate([np.ravel(x) for x in preds]).astype(np.float64)
    y = np.concatenate([np.ravel(x) for x in labels]).astype(np.float64)
    if p.shape != y.shape or p.size == 0:
        raise ValueError("predictions and labels must be nonempty and of equal size")
    return float(np.mean((p - y) ** 2))


def pearson(preds, labels):
    """Correlation over the flattened (samples x 2n) arrays; nan if either is constant."""
    p = np.concatenate([np.ravel(x) for x in preds]).astype(np.float64)
    y = np.concatenate([np.ravel(x) for x in labels]).astype(np.float64)
    if p.shape != y.shape or p.size < 2:
        raise ValueError("need two or more paired values")
    dp, dy = p - p.mean(), y - y.mean()
    den = np.sqrt(np.dot(dp, dp) * np.dot(dy, dy))
    if den == 0:
        return float("nan")
    return float(np.clip(np.dot(dp, dy) / den, -1.0, 1.0))


def compute_metrics(preds, labels):
    return Metrics(pooled_mse(preds, labels), pearson(preds, labels), len(preds))
