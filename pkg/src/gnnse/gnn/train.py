"""Minibatch training with Adam and global gradient-norm clipping."""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError
from .model import GraphBatch, gradients, predict

log = logging.getLogger(__name__)

BETA1, BETA2, EPS = 0.9, 0.999, 1e-8


class Adam:
    def __init__(self, params, lr, beta1=BETA1, beta2=BETA2, eps=EPS):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            step = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            params[k] -= step.astype(params[k].dtype, copy=False)


def global_norm(grads):
    return float(np.sqrt(sum(float(np.dot(g.ravel().astype(np.float64), g.ravel().astype(np.float64)))
                             for g in grads.values())))


def clip_by_global_norm(grads, clip):
    norm = global_norm(grads)
    if norm > clip:
        scale = clip / norm
        grads = {k: g * np.asarray(scale, dtype=g.dtype) for k, g in grads.items()}
    return grads, norm


def mse_of(model, graphs, batch_size=64):
    preds = predict(model, graphs, batch_size)
    sq = np.concatenate([(p.astype(np.float64) - g.labels) ** 2 for p, g in zip(preds, graphs)])
    return float(sq.mean())


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    grad_norm: float
    seconds: float


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = float("inf")


def train(model, train_set, val_set, hyper=None, rng=None, progress=None):
    """Train ``model`` in place; return the best-validation copy and the history.

    A :class:`NumericError` aborts training; the partial history is attached
    to the exception as ``history``.
    """
    hyper = hyper or model.hyper
    train_set, val_set = list(train_set), list(val_set)
    if not train_set or not val_set:
        raise ValueError("training and validation sets must be nonempty")
    rng = np.random.default_rng(rng)
    opt = Adam(model.params, hyper.lr)
    result = TrainResult(model.copy())
    for epoch in range(1, hyper.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_set))
        total, max_norm = 0.0, 0.0
        for lo in range(0, len(order), hyper.batch):
            idx = order[lo:lo + hyper.batch]
            batch = GraphBatch([train_set[i] for i in idx], model.dtype)
            try:
                value, grads = gradients(model, batch, training=True, update_stats=True)
            except NumericError as exc:
                exc.graph_index = int(idx[exc.graph_index])
                exc.history = result.history
                raise
            grads, norm = clip_by_global_norm(grads, hyper.clip)
            max_norm = max(max_norm, norm)
            opt.step(model.params, grads)
            total += value * len(idx)
        val = mse_of(model, val_set)
        rec = EpochRecord(epoch, total / len(train_set), val, max_norm, time.perf_counter() - t0)
        result.history.append(rec)
        if not np.isfinite(val):
            exc = NumericError("non-finite validation loss", graph_index=-1)
            exc.history = result.history
            raise exc
        if val < result.best_val:
            result.best_val, result.best_epoch = val, epoch
            result.model = model.copy()
        log.debug("epoch %d train %.3e val %.3e (%.1fs)", epoch, rec.train_loss, val, rec.seconds)
        if progress is not None:
            progress(rec)
    return result
