"""Softmax cross-entropy SGD for the layers that follow the ODE block.

Everything up to the first trainable layer is frozen, so its output is
computed once per dataset and training is a pure optimisation over the
remaining (small) layer chain.
"""

from dataclasses import dataclass, replace
import csv
import logging
import warnings

import numpy as np

from .errors import DivergenceError, TrainingDivergenceError
from .zoo import RnnSpec, as_sequences, rnn_features, rnn_final_state, run_layers

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batch_size: int = 64
    lr: float = 0.04
    decay: float = 0.9
    seed: int = 0
    trainable: tuple = None


def log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_labels(labels, classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"labels must lie in [0, {classes})")
    return labels


def loss_and_grad(W, b, features, labels):
    """Mean softmax cross-entropy of ``features @ W.T + b`` and its gradient.

    Returns ``(loss, (grad_W, grad_b))``.
    """
    X = np.asarray(features, dtype=np.float64)
    labels = _check_labels(labels, W.shape[0])
    logp = log_softmax(X @ W.T + b)
    rows = np.arange(X.shape[0])
    loss = -logp[rows, labels].mean()
    d = np.exp(logp)
    d[rows, labels] -= 1.0
    d /= X.shape[0]
    return float(loss), (d.T @ X, d.sum(axis=0))


# ---------------------------------------------------------------------------
# forward/backward through a post-ODE layer chain


def _chain_forward(layers, x):
    cache = []
    for layer in layers:
        if layer.kind in ("linear", "readout"):
            cache.append(x)
            x = layer.logits(x)
        elif layer.kind == "relu":
            cache.append(x > 0)
            x = np.maximum(x, 0.0)
        elif layer.kind == "maxpool":
            x, idx = layer.forward_indices(x)
            cache.append(idx)
        else:
            cache.append(None)
            x = layer.forward(x)
    return x, cache


def _chain_backward(layers, cache, d, trainable):
    grads = {}
    for pos in range(len(layers) - 1, -1, -1):
        layer, c = layers[pos], cache[pos]
        if layer.kind in ("linear", "readout"):
            if pos in trainable:
                grads[pos] = (d.T @ c, d.sum(axis=0))
            d = d @ layer.W
        elif layer.kind == "relu":
            d = d * c
        elif layer.kind == "maxpool":
            dx = np.zeros((d.shape[0], layer.in_dim))
            rows = np.repeat(np.arange(d.shape[0]), d.shape[1])
            np.add.at(dx, (rows, c.ravel()), d.ravel())
            d = dx
        elif layer.kind == "select":
            dx = np.zeros((d.shape[0], layer.n))
            dx[:, layer.indices] = d
            d = dx
        elif layer.kind == "scatter":
            d = d[:, layer.indices]
        elif layer.kind == "flatten":
            pass
        else:
            raise TypeError(f"cannot backpropagate through a {layer.kind} layer")
    return grads


def chain_loss_and_grads(layers, x, labels, trainable):
    logits, cache = _chain_forward(layers, x)
    logp = log_softmax(logits)
    rows = np.arange(x.shape[0])
    loss = -logp[rows, labels].mean()
    d = np.exp(logp)
    d[rows, labels] -= 1.0
    d /= x.shape[0]
    return float(loss), _chain_backward(layers, cache, d, trainable)


def _chain_eval(layers, x, labels):
    logits, _ = _chain_forward(layers, x)
    logp = log_softmax(logits)
    loss = -logp[np.arange(x.shape[0]), labels].mean()
    acc = np.mean(np.argmax(logits, axis=1) == labels)
    return float(loss), float(acc)


# ---------------------------------------------------------------------------


def default_trainable(model):
    if isinstance(model, RnnSpec):
        return (0,)
    j = model.ode_index
    return tuple(
        i for i, l in enumerate(model.layers)
        if i > j and l.kind in ("linear", "readout") and getattr(l, "role", "linear") == "linear"
    )


def _split(model, trainable):
    """(frozen feature function, trainable chain, chain-relative trainable set)."""
    if isinstance(model, RnnSpec):
        def features(images):
            return rnn_features(model, rnn_final_state(model, as_sequences(images, model.input_dim)))
        return features, [model.readout], {0}
    j = model.ode_index
    for i in trainable:
        layer = model.layers[i]
        if i <= j:
            raise ValueError(f"layer {i} precedes or is the ODE block; only later layers train")
        if layer.kind not in ("linear", "readout"):
            raise ValueError(f"layer {i} ({layer.kind}) has no weights")
    start = min(trainable)

    def features(images):
        return run_layers(model.layers[:start], images)

    return features, list(model.layers[start:]), {i - start for i in trainable}


def frozen_features(feature_fn, images):
    """Frozen-prefix outputs; samples whose ODE diverges are dropped with a warning."""
    try:
        return feature_fn(images), np.arange(images.shape[0])
    except DivergenceError:
        rows, ok = [], []
        for i in range(images.shape[0]):
            try:
                rows.append(feature_fn(images[i : i + 1])[0])
                ok.append(i)
            except DivergenceError:
                continue
        warnings.warn(f"{images.shape[0] - len(ok)} samples diverged and were dropped")
        if not ok:
            raise
        return np.stack(rows), np.array(ok)


def fit(model, dataset, cfg, validation=None):
    """Train the post-ODE layers of ``model``; returns ``(model, metrics)``.

    ``metrics`` has one dict per epoch with keys ``epoch``, ``loss`` (mean
    loss over the training set after the epoch), ``train_acc`` and
    ``val_acc`` (``None`` without a validation set).
    """
    trainable = tuple(cfg.trainable) if cfg.trainable is not None else default_trainable(model)
    if cfg.epochs == 0:
        return model, []
    feature_fn, chain, rel = _split(model, trainable)
    X, ok = frozen_features(feature_fn, dataset.images)
    y = dataset.labels[ok]
    if validation is not None:
        Xv, okv = frozen_features(feature_fn, validation.images)
        yv = validation.labels[okv]
    chain = list(chain)
    rng = np.random.default_rng(cfg.seed)
    metrics = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr * cfg.decay**epoch
        order = rng.permutation(X.shape[0])
        for s in range(0, X.shape[0], cfg.batch_size):
            batch = order[s : s + cfg.batch_size]
            _, grads = chain_loss_and_grads(chain, X[batch], y[batch], rel)
            for pos, (gW, gb) in grads.items():
                layer = chain[pos]
                chain[pos] = type(layer)(layer.W - lr * gW, layer.b - lr * gb, layer.role)
        loss, acc = _chain_eval(chain, X, y)
        if not np.isfinite(loss):
            raise TrainingDivergenceError(f"loss became non-finite in epoch {epoch + 1}", epoch + 1)
        val = _chain_eval(chain, Xv, yv)[1] if validation is not None else None
        metrics.append({"epoch": epoch + 1, "loss": loss, "train_acc": acc, "val_acc": val})
        log.info("epoch %d loss %.4f train-acc %.4f", epoch + 1, loss, acc)
    if isinstance(model, RnnSpec):
        return replace(model, readout=chain[0]), metrics
    start = len(model.layers) - len(chain)
    return model.with_layers(list(model.layers[:start]) + chain), metrics


def write_metrics(metrics, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "train_acc", "val_acc"])
        for row in metrics:
            w.writerow([row["epoch"], repr(row["loss"]), repr(row["train_acc"]),
                        "" if row["val_acc"] is None else repr(row["val_acc"])])
