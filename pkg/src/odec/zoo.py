"""Network architectures built around a single ODE block.

Feed-forward models are an ordered list of layers acting on flat,
channel-major feature vectors (batch axis first). Recurrent models
(:class:`RnnSpec`) integrate a hidden state from zero while reading one input
sample per Euler step.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .errors import DimensionError, DivergenceError
from .ode import DIVERGENCE_LIMIT, OdeBlock, SolverConfig, solve, step_euler


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# layers


@dataclass(frozen=True, eq=False)
class Linear:
    """Affine map ``x @ W.T + b``.

    ``role`` distinguishes ordinary layers from the subspace projections that
    model reduction inserts (``project_in`` / ``project_out``).
    """

    W: np.ndarray
    b: np.ndarray
    role: str = "linear"

    kind = "linear"

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise DimensionError(f"bad linear layer shapes W={W.shape} b={b.shape}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    def output_dim(self, d):
        if d != self.W.shape[1]:
            raise DimensionError(f"{self.kind} expects {self.W.shape[1]} inputs, got {d}")
        return self.W.shape[0]

    def logits(self, x):
        return x @ self.W.T + self.b

    def forward(self, x):
        return self.logits(x)


class Readout(Linear):
    """Linear layer followed by softmax; always the last layer."""

    kind = "readout"

    def forward(self, x):
        return softmax(self.logits(x))


@dataclass(frozen=True)
class ReLU:
    kind = "relu"

    def output_dim(self, d):
        return d

    def forward(self, x):
        return np.maximum(x, 0.0)


@dataclass(frozen=True)
class Flatten:
    kind = "flatten"

    def output_dim(self, d):
        return d

    def forward(self, x):
        return x.reshape(x.shape[0], -1)


@dataclass(frozen=True, eq=False)
class MaxPool:
    """Max pooling over flat ``(channel, row, col)`` vectors."""

    channels: int
    height: int
    width: int
    window: int = 2
    stride: int = 2
    gather: np.ndarray = field(init=False, repr=False)

    kind = "maxpool"

    def __post_init__(self):
        oh = (self.height - self.window) // self.stride + 1
        ow = (self.width - self.window) // self.stride + 1
        if oh < 1 or ow < 1:
            raise DimensionError("pooling window larger than the feature map")
        c, r, s, dy, dx = np.meshgrid(
            np.arange(self.channels), np.arange(oh), np.arange(ow),
            np.arange(self.window), np.arange(self.window), indexing="ij",
        )
        flat = (c * self.height + r * self.stride + dy) * self.width + s * self.stride + dx
        object.__setattr__(self, "gather", flat.reshape(self.channels * oh * ow, -1))

    @property
    def in_dim(self):
        return self.channels * self.height * self.width

    @property
    def out_dim(self):
        return self.gather.shape[0]

    @property
    def out_shape(self):
        oh = (self.height - self.window) // self.stride + 1
        ow = (self.width - self.window) // self.stride + 1
        return (self.channels, oh, ow)

    def output_dim(self, d):
        if d != self.in_dim:
            raise DimensionError(f"maxpool expects {self.in_dim} inputs, got {d}")
        return self.out_dim

    def forward_indices(self, x):
        """Pooled values plus the flat input index each one came from."""
        windows = x[:, self.gather]
        arg = np.argmax(windows, axis=-1)
        idx = np.take_along_axis(self.gather[None], arg[..., None], axis=-1)[..., 0]
        return np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0], idx

    def forward(self, x):
        return x[:, self.gather].max(axis=-1)


@dataclass(frozen=True, eq=False)
class Select:
    """Gather the listed coordinates of an ``n``-vector."""

    indices: np.ndarray
    n: int

    kind = "select"

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))

    def output_dim(self, d):
        if d != self.n:
            raise DimensionError(f"select expects {self.n} inputs, got {d}")
        return len(self.indices)

    def forward(self, x):
        return x[:, self.indices]


@dataclass(frozen=True, eq=False)
class Scatter:
    """Place a k-vector at the listed coordinates of a zero ``n``-vector."""

    indices: np.ndarray
    n: int

    kind = "scatter"

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))

    def output_dim(self, d):
        if d != len(self.indices):
            raise DimensionError(f"scatter expects {len(self.indices)} inputs, got {d}")
        return self.n

    def forward(self, x):
        out = np.zeros((x.shape[0], self.n))
        out[:, self.indices] = x
        return out


@dataclass(frozen=True, eq=False)
class OdeLayer:
    """Continuous layer: output is ``x(t_end)`` starting from the layer input."""

    block: object
    solver: SolverConfig = SolverConfig()

    kind = "ode"

    def output_dim(self, d):
        if d != self.block.dim:
            raise DimensionError(f"ODE block has dimension {self.block.dim}, input is {d}")
        return d

    def forward(self, x):
        return solve(self.block, x, None, self.solver)


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Ordered layer stack with exactly one ODE layer and a readout last.

    ``sections`` carries free-form metadata that is serialized alongside the
    layers (``mor``, ``compression``, ``provenance``).
    """

    layers: tuple
    input_shape: tuple
    class_count: int
    seed: int = None
    sections: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        odes = [i for i, l in enumerate(self.layers) if l.kind == "ode"]
        if len(odes) != 1:
            raise ValueError(f"model needs exactly one ODE layer, found {len(odes)}")
        if not self.layers or self.layers[-1].kind != "readout":
            raise ValueError("the last layer must be a readout")
        d = math.prod(self.input_shape)
        if len(self.input_shape) > 1 and self.layers[0].kind != "flatten":
            raise ValueError("image inputs need a leading flatten layer")
        for layer in self.layers:
            d = layer.output_dim(d)
        if d != self.class_count:
            raise DimensionError(f"readout emits {d} scores for {self.class_count} classes")

    @property
    def ode_index(self):
        return next(i for i, l in enumerate(self.layers) if l.kind == "ode")

    @property
    def ode_layer(self):
        return self.layers[self.ode_index]

    @property
    def block(self):
        return self.ode_layer.block

    def with_layers(self, layers, **sections):
        merged = dict(self.sections)
        merged.update(sections)
        return replace(self, layers=tuple(layers), sections=merged)


def _batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.shape == model.input_shape
    if single:
        x = x[None]
    elif x.shape[1:] != model.input_shape:
        raise DimensionError(f"input shape {x.shape} does not match {model.input_shape}")
    return x, single


def run_layers(layers, x):
    for layer in layers:
        x = layer.forward(x)
    return x


def ode_input(model, x):
    """Output of the layers preceding the ODE block (its initial value)."""
    x, _ = _batch(model, x)
    return run_layers(model.layers[: model.ode_index], x)


def forward(model, x):
    """Class probabilities for one input or a batch of inputs."""
    x, single = _batch(model, x)
    out = run_layers(model.layers, x)
    return out[0] if single else out


@dataclass(frozen=True, eq=False)
class RnnSpec:
    """ODE-RNN: ``x(0) = 0`` and one held input sample per ``steps_per_input`` Euler steps.

    ``lift`` maps the (possibly reduced) hidden state back to the readout's
    input space; ``None`` means identity.
    """

    block: object
    readout: Readout
    dt: float = 0.1
    steps_per_input: int = 1
    lift: np.ndarray = None
    W: np.ndarray = None
    gamma: float = None
    seed: int = None
    sections: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.block.input_dim == 0:
            raise ValueError("an RNN block needs an input matrix Z")
        width = self.block.dim if self.lift is None else self.lift.shape[0]
        if self.lift is not None and self.lift.shape[1] != self.block.dim:
            raise DimensionError("lift does not match the hidden dimension")
        self.readout.output_dim(width)

    @property
    def hidden(self):
        return self.block.dim

    @property
    def input_dim(self):
        return self.block.input_dim

    @property
    def class_count(self):
        return self.readout.W.shape[0]


def as_sequences(images, input_dim=1):
    """Flatten images into pixel sequences of shape ``(batch, length, input_dim)``."""
    a = np.asarray(images, dtype=np.float64)
    flat = a.reshape(a.shape[0], -1)
    return flat.reshape(a.shape[0], -1, input_dim)


def rnn_final_state(model, sequences):
    seq = np.asarray(sequences, dtype=np.float64)
    if seq.ndim == 2:
        seq = seq[..., None]
    if seq.shape[1] < 1:
        raise ValueError("sequences must have at least one step")
    x = np.zeros((seq.shape[0], model.hidden))
    step = 0
    for t in range(seq.shape[1]):
        u = seq[:, t, :]
        for _ in range(model.steps_per_input):
            x = step_euler(model.block, x, u, model.dt)
            step += 1
            if not np.all(np.abs(x) <= DIVERGENCE_LIMIT):
                raise DivergenceError(f"RNN state diverged at step {step}", step=step)
    return x


def rnn_features(model, x):
    return x if model.lift is None else x @ model.lift.T


def forward_rnn(model, sequence):
    """Class probabilities for one sequence of shape ``(length,)`` or ``(length, i)``."""
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim == 1:
        seq = seq[:, None]
    return forward_rnn_batch(model, seq[None])[0]


def forward_rnn_batch(model, sequences):
    x = rnn_final_state(model, sequences)
    return model.readout.forward(rnn_features(model, x))


def predict(model, inputs):
    """Probabilities for a batch of dataset images, whatever the model type."""
    if isinstance(model, RnnSpec):
        return forward_rnn_batch(model, as_sequences(inputs, model.input_dim))
    return forward(model, inputs)


def final_state(model, inputs):
    """ODE block output ``x(t_end)`` for a batch of dataset images."""
    if isinstance(model, RnnSpec):
        return rnn_final_state(model, as_sequences(inputs, model.input_dim))
    return model.ode_layer.forward(ode_input(model, inputs))


# ---------------------------------------------------------------------------
# structured weight constructions


def build_antisymmetric(W, gamma):
    """Shifted antisymmetric matrix ``W - W.T - gamma*I``; eigenvalues have real part ``-gamma``."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionError(f"W must be square, got {W.shape}")
    return W - W.T - gamma * np.eye(W.shape[0])


def conv_to_matrix(kernels, height, width, bias=None):
    """Express a same-padded 2-D convolution as a dense Toeplitz-structured matrix.

    Uses the cross-correlation convention of deep-learning frameworks, zero
    padding and stride 1. Vectors are channel-major: index
    ``(c * height + row) * width + col``.

    Parameters
    ----------
    kernels : array_like, shape (c_out, c_in, kh, kw)
        Odd ``kh`` and ``kw``.
    height, width : int
        Spatial size of the feature map.
    bias : array_like, shape (c_out,), optional

    Returns
    -------
    M : ndarray, shape (c_out*height*width, c_in*height*width)
    bias_vec : ndarray, shape (c_out*height*width,)
    """
    K = np.asarray(kernels, dtype=np.float64)
    if K.ndim != 4:
        raise DimensionError(f"kernels must be 4-D (c_out, c_in, kh, kw), got {K.shape}")
    c_out, c_in, kh, kw = K.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError("same padding requires odd kernel sides")
    hw = height * width
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    out_pos = (rows * width + cols).ravel()
    M = np.zeros((c_out, hw, c_in, hw))
    for dy in range(kh):
        for dx in range(kw):
            r = rows + dy - kh // 2
            c = cols + dx - kw // 2
            ok = ((r >= 0) & (r < height) & (c >= 0) & (c < width)).ravel()
            src = (r * width + c).ravel()[ok]
            dst = out_pos[ok]
            M[:, dst, :, src] += K[:, :, dy, dx][None]
    M = M.reshape(c_out * hw, c_in * hw)
    if bias is None:
        bias_vec = np.zeros(c_out * hw)
    else:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (c_out,):
            raise DimensionError(f"bias must have shape ({c_out},)")
        bias_vec = np.repeat(bias, hw)
    return M, bias_vec


# ---------------------------------------------------------------------------
# builders for desk-scale reservoir models


def dense_model(input_shape, n, classes, seed=0, gain=1.0, bias_scale=0.1,
                solver=SolverConfig()):
    """Flatten -> random linear lift -> random tanh ODE block -> zero readout."""
    rng = np.random.default_rng(seed)
    d = math.prod(input_shape)
    layers = [
        Flatten(),
        Linear(rng.normal(0.0, 1.0 / math.sqrt(d), (n, d)), rng.normal(0.0, bias_scale, n)),
        OdeLayer(
            OdeBlock(gain * rng.normal(0.0, 1.0 / math.sqrt(n), (n, n)),
                     rng.normal(0.0, bias_scale, n), None, "tanh"),
            solver,
        ),
        Readout(np.zeros((classes, n)), np.zeros(classes)),
    ]
    return ModelSpec(layers, input_shape, classes, seed=seed)


def conv_model(input_shape, channels, classes, seed=0, gain=1.0, solver=SolverConfig()):
    """Conv(3x3)+ReLU -> 2x2 max-pool -> convolutional tanh ODE block -> 2x2 max-pool -> readout.

    Both convolutions are stored in Toeplitz matrix form.
    """
    rng = np.random.default_rng(seed)
    c_in, h, w = input_shape
    pre_k = rng.normal(0.0, 1.0 / math.sqrt(9 * c_in), (channels, c_in, 3, 3))
    M1, b1 = conv_to_matrix(pre_k, h, w, rng.normal(0.0, 0.1, channels))
    pool1 = MaxPool(channels, h, w, 2, 2)
    _, ph, pw = pool1.out_shape
    ode_k = gain * rng.normal(0.0, 1.0 / math.sqrt(9 * channels), (channels, channels, 3, 3))
    A, b = conv_to_matrix(ode_k, ph, pw, rng.normal(0.0, 0.1, channels))
    pool2 = MaxPool(channels, ph, pw, 2, 2)
    layers = [
        Flatten(),
        Linear(M1, b1),
        ReLU(),
        pool1,
        OdeLayer(OdeBlock(A, b, None, "tanh"), solver),
        pool2,
        Readout(np.zeros((classes, pool2.out_dim)), np.zeros(classes)),
    ]
    return ModelSpec(layers, input_shape, classes, seed=seed)


def rnn_model(n, classes, input_dim=1, seed=0, gamma=0.01, dt=0.1, input_scale=1.0):
    """Shifted antisymmetric tanh ODE-RNN with standard-normal ``W`` scaled by ``1/sqrt(n)``."""
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, 1.0, (n, n)) / math.sqrt(n)
    A = build_antisymmetric(W, gamma)
    Z = input_scale * rng.normal(0.0, 1.0, (n, input_dim))
    block = OdeBlock(A, np.zeros(n), Z, "tanh")
    readout = Readout(np.zeros((classes, n)), np.zeros(classes))
    return RnnSpec(block, readout, dt=dt, W=W, gamma=gamma, seed=seed)


# ---------------------------------------------------------------------------
# theoretical layer sizes

_COUNT_TABLE = {
    ("original", "best"): lambda n, k, i, o: (n * n, n, n * i, o * n),
    ("pod-deim", "best"): lambda n, k, i, o: (2 * k * k, k, k * i, o * k),
    ("pod-deim", "worst"): lambda n, k, i, o: (2 * k * k, k, n * (i + k), n * (o + k)),
    ("apoz", "best"): lambda n, k, i, o: (k * k, k, k * i, o * k),
    ("apoz", "worst"): lambda n, k, i, o: (k * k, k, k * i, n * (o + 1)),
    ("svd", "best"): lambda n, k, i, o: (2 * k * n, n, n * i, o * n),
}


def parameter_counts(method, n, k, i, o, case="best"):
    """Weight and activation counts of an ODE block and its neighbours.

    ``i`` is the width of the preceding layer, ``o`` of the following one.
    ``case`` only matters for ``pod-deim`` and ``apoz``.
    """
    if not n >= k >= 1:
        raise ValueError(f"need n >= k >= 1, got n={n}, k={k}")
    if method in ("original", "svd"):
        case = "best"
    try:
        row = _COUNT_TABLE[(method, case)]
    except KeyError:
        raise ValueError(f"unknown method/case {method!r}/{case!r}") from None
    names = ("ode_weights", "ode_activations", "preceding", "following")
    return dict(zip(names, row(n, k, i, o)))
