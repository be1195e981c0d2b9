"""Comparison compressors: SVD weight truncation and APoZ-style neuron pruning."""

from dataclasses import dataclass, field, replace

import numpy as np

from . import matcore
from .errors import DimensionError, RankError
from .ode import OdeBlock, _add_input, _check_activation, activate
from .zoo import Linear, OdeLayer, RnnSpec, Scatter, Select, final_state


@dataclass(frozen=True, eq=False)
class SvdTruncatedBlock:
    """``x' = f(second @ (first @ x) + b) + Z u`` with a rank-k factorised weight matrix."""

    first: np.ndarray
    second: np.ndarray
    b: np.ndarray
    Z: np.ndarray = None
    activation: str = "tanh"

    def __post_init__(self):
        first = np.asarray(self.first, dtype=np.float64)
        second = np.asarray(self.second, dtype=np.float64)
        if first.shape[0] != second.shape[1] or second.shape[0] != first.shape[1]:
            raise DimensionError(f"factor shapes {second.shape} @ {first.shape} are not n x n")
        object.__setattr__(self, "first", first)
        object.__setattr__(self, "second", second)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=np.float64))
        if self.Z is not None:
            object.__setattr__(self, "Z", np.asarray(self.Z, dtype=np.float64))
        _check_activation(self.activation)

    @property
    def dim(self):
        return self.second.shape[0]

    @property
    def rank(self):
        return self.first.shape[0]

    @property
    def input_dim(self):
        return 0 if self.Z is None else self.Z.shape[1]

    @property
    def n_params(self):
        return self.first.size + self.second.size

    def composed(self):
        return self.second @ self.first

    def nonlinearity(self, x):
        return activate(self.activation, (x @ self.first.T) @ self.second.T + self.b)

    def rhs(self, x, u=None):
        return _add_input(self.nonlinearity(x), self.Z, u)


def svd_truncate_block(block, k):
    """Best rank-k factorisation ``A ~ Phi_k (Sigma_k Psi_k.T)`` of the block's weights."""
    if not isinstance(block, OdeBlock):
        raise TypeError("SVD truncation needs a full-order OdeBlock")
    n = block.dim
    if not 1 <= k <= n:
        raise RankError(f"truncation rank k={k} outside [1, {n}]")
    t = matcore.truncate_svd(matcore.svd(block.A), k)
    first = (t.right * t.singular_values).T
    return SvdTruncatedBlock(first, t.left, block.b.copy(), block.Z, block.activation)


def svd_compress(model, k):
    """Model with its ODE block replaced by the rank-k truncated block."""
    sb = svd_truncate_block(model.block, k)
    section = {"method": "svd", "k": int(k)}
    if isinstance(model, RnnSpec):
        return replace(model, block=sb, sections={**model.sections, "compression": section})
    layers = list(model.layers)
    layers[model.ode_index] = OdeLayer(sb, model.ode_layer.solver)
    return model.with_layers(layers, compression=section)


@dataclass(frozen=True, eq=False)
class ApozScores:
    """Per-neuron scores.

    ``mode="zero"`` holds average fractions of zero activations (higher means
    less important); ``mode="magnitude"`` holds mean absolute activations
    (higher means more important).
    """

    values: np.ndarray
    mode: str = "magnitude"
    provenance: dict = field(default_factory=dict)

    def importance(self):
        return self.values if self.mode == "magnitude" else -self.values


def apoz_from_activations(O, mode="zero"):
    """Score neurons from activations ``O`` of shape (examples, neurons, feature_size)."""
    O = np.asarray(O, dtype=np.float64)
    if O.ndim == 2:
        O = O[:, :, None]
    if O.shape[0] == 0:
        raise ValueError("cannot score neurons on an empty dataset")
    if mode == "zero":
        values = np.mean(O == 0.0, axis=(0, 2))
    elif mode == "magnitude":
        values = np.mean(np.abs(O), axis=(0, 2))
    else:
        raise ValueError(f"unknown APoZ mode {mode!r}")
    return ApozScores(values, mode)


def apoz_scores(model, dataset, sample_limit=None, mode="magnitude"):
    """Score ODE neurons on their final-time outputs over training samples."""
    if dataset.split != "train":
        raise ValueError("APoZ scores are computed on training data only")
    images = dataset.images if sample_limit is None else dataset.images[:sample_limit]
    if images.shape[0] == 0:
        raise ValueError("cannot score neurons on an empty dataset")
    scores = apoz_from_activations(final_state(model, images)[:, :, None], mode)
    return replace(scores, provenance={"dataset": dataset.ident, "samples": int(images.shape[0]),
                                       "mode": mode})


def keep_indices(scores, k):
    """Top-k neurons by importance, ties going to the lower index; returned sorted."""
    imp = np.asarray(scores.importance())
    if not 1 <= k <= imp.shape[0]:
        raise RankError(f"keep={k} outside [1, {imp.shape[0]}]")
    order = np.argsort(-imp, kind="stable")
    return np.sort(order[:k])


def prune_block(block, keep):
    Z = None if block.Z is None else block.Z[keep]
    return OdeBlock(block.A[np.ix_(keep, keep)], block.b[keep], Z, block.activation)


def apoz_prune(model, scores, keep):
    """Remove all but the ``keep`` highest-scoring neurons from the ODE block.

    Rows and the matching columns of ``A`` go, as do entries of ``b`` and rows
    of ``Z``. A preceding linear layer loses the matching output rows and a
    following linear layer the matching input columns; nonlinear neighbours
    get explicit gather/scatter adapters instead.
    """
    block = model.block
    if not isinstance(block, OdeBlock):
        raise TypeError("APoZ pruning needs a full-order OdeBlock")
    n = block.dim
    idx = keep_indices(scores, keep)
    pruned = prune_block(block, idx)
    section = {"method": "apoz", "k": int(keep), "keep": [int(i) for i in idx],
               "mode": scores.mode, "scores": scores.provenance}
    if isinstance(model, RnnSpec):
        if model.lift is not None:
            return replace(model, block=pruned, lift=model.lift[:, idx],
                           sections={**model.sections, "compression": section})
        ro = model.readout
        return replace(model, block=pruned, readout=type(ro)(ro.W[:, idx], ro.b, ro.role),
                       sections={**model.sections, "compression": section})
    j = model.ode_index
    layers = list(model.layers)
    before, after = layers[:j], layers[j + 1 :]
    prev = before[-1] if before else None
    if prev is not None and prev.kind == "linear":
        before[-1] = Linear(prev.W[idx], prev.b[idx], prev.role)
    else:
        before.append(Select(idx, n))
    nxt = after[0]
    if nxt.kind in ("linear", "readout"):
        after[0] = type(nxt)(nxt.W[:, idx], nxt.b, nxt.role)
    else:
        after.insert(0, Scatter(idx, n))
    return model.with_layers(before + [OdeLayer(pruned, model.ode_layer.solver)] + after,
                             compression=section)
