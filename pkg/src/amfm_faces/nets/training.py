"""Mini-batch training with SGD or Adam on the MSE loss."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..errors import NumericalError, ParameterError
from ..evaluation import fmt, roc_auc
from .layers import mse_loss
from .network import Network

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "History", "fit", "train", "canonical_order", "frame_scores"]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 80
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rng_seed: int = 0
    shuffle: bool = True
    loss: str = "mse"
    gt_threshold: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ParameterError("learning_rate must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.loss != "mse":
            raise ParameterError("only the mse loss is implemented")

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ParameterError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_auc: list = field(default_factory=list)
    val_auc: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "train_auc", "val_auc"])
            for i in range(len(self)):
                w.writerow(
                    [i + 1]
                    + [fmt(v[i]) for v in (self.train_loss, self.val_loss, self.train_auc, self.val_auc)]
                )


def canonical_order(x, y) -> np.ndarray:
    """Permutation that sorts samples by a digest of their content.

    Training shuffles this canonical order, so the result does not depend on
    how the caller ordered the samples.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    keys = [
        hashlib.blake2b(xi.tobytes() + yi.tobytes(), digest_size=16).digest() + i.to_bytes(8, "big")
        for i, (xi, yi) in enumerate(zip(x, y))
    ]
    # the index suffix only breaks ties between exact duplicates, which are interchangeable
    return np.array(sorted(range(len(keys)), key=keys.__getitem__), dtype=np.int64)


class _Adam:
    def __init__(self, params, cfg):
        self.cfg = cfg
        self.t = 0
        self.m = [None if p is None else [np.zeros_like(a) for a in p] for p in params]
        self.v = [None if p is None else [np.zeros_like(a) for a in p] for p in params]

    def step(self, params, grads, lr):
        c = self.cfg
        self.t += 1
        b1t = 1.0 - c.beta1**self.t
        b2t = 1.0 - c.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p is None:
                continue
            for a, ga, ma, va in zip(p, g, m, v):
                ma *= c.beta1
                ma += (1.0 - c.beta1) * ga
                va *= c.beta2
                va += (1.0 - c.beta2) * ga * ga
                a -= lr * (ma / b1t) / (np.sqrt(va / b2t) + c.eps)


def _sgd_step(params, grads, lr):
    for p, g in zip(params, grads):
        if p is not None:
            for a, ga in zip(p, g):
                a -= lr * ga


def _as_targets(net, y):
    y = np.asarray(y, dtype=np.float64)
    out = net.spec.output_shape
    return y.reshape(len(y), *out)


def _evaluate(net, x, y, batch_size, gt_threshold):
    pred = np.concatenate([net.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)])
    return mse_loss(pred, y)[0], roc_auc(pred.ravel(), y.ravel(), gt_threshold)


def fit(net: Network, x, y, config: TrainConfig, x_val=None, y_val=None, log_every=0):
    """Train ``net`` in place; returns the per-epoch :class:`History`."""
    x = net._check_input(np.asarray(x))
    y = _as_targets(net, y)
    if len(x) != len(y):
        raise ParameterError("inputs and targets differ in length")
    if len(x) == 0:
        raise ParameterError("empty training set")
    has_val = x_val is not None and len(x_val) > 0
    if has_val:
        x_val = net._check_input(np.asarray(x_val))
        y_val = _as_targets(net, y_val)

    order = canonical_order(x.reshape(len(x), -1), y.reshape(len(y), -1))
    x, y = x[order], y[order]
    rng = np.random.default_rng([config.rng_seed, 0x5EED])
    opt = _Adam(net.params, config) if config.optimizer == "adam" else None
    hist = History()
    n = len(x)
    for epoch in range(config.epochs):
        idx = rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        preds = np.empty_like(y)
        for start in range(0, n, config.batch_size):
            b = idx[start : start + config.batch_size]
            out = net.forward(x[b], keep_cache=True)
            loss, grad = mse_loss(out, y[b])
            if not math.isfinite(loss):
                raise NumericalError(f"loss became {loss} at epoch {epoch + 1}")
            grads = net.backward(grad)
            if config.learning_rate > 0:
                if opt is not None:
                    opt.step(net.params, grads, config.learning_rate)
                else:
                    _sgd_step(net.params, grads, config.learning_rate)
            total += loss * len(b)
            preds[b] = out
        hist.train_loss.append(total / n)
        hist.train_auc.append(roc_auc(preds.ravel(), y.ravel(), config.gt_threshold))
        if has_val:
            vl, va = _evaluate(net, x_val, y_val, 256, config.gt_threshold)
        else:
            vl, va = math.nan, math.nan
        hist.val_loss.append(vl)
        hist.val_auc.append(va)
        if log_every and (epoch + 1) % log_every == 0:
            log.info(
                "epoch %d: loss %.5f val %.5f auc %.4f val_auc %.4f",
                epoch + 1, hist.train_loss[-1], vl, hist.train_auc[-1], va,
            )
    return hist


def train(net: Network, train_ds, val_ds=None, config: TrainConfig | None = None, log_every=0):
    """Train on :class:`~amfm_faces.dataset.BlockDataset` objects.

    Returns ``(net, history)``; the network is updated in place.
    """
    config = config or TrainConfig()
    want = net.spec.input_shape
    if tuple(train_ds.blocks.shape[1:]) != want:
        raise ParameterError(f"dataset blocks {train_ds.blocks.shape[1:]} do not match net input {want}")
    xv = yv = None
    if val_ds is not None and len(val_ds):
        xv, yv = val_ds.blocks, val_ds.targets
    hist = fit(net, train_ds.blocks, train_ds.targets, config, xv, yv, log_every)
    return net, hist


def frame_scores(net_single: Network, net_multi: Network, frame_blocks) -> np.ndarray:
    """Single-block scores for one frame's 45 blocks refined by the multi-block net."""
    s = net_single.predict(frame_blocks)
    if s.shape != (45,):
        raise ParameterError(f"multi-block input must have 45 scores, got {s.shape}")
    return net_multi.predict(s[None])[0]
