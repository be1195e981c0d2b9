"""ODE blocks of the form ``x' = f(A x + b) + Z u`` and fixed-step solvers.

States may be a single vector of shape ``(n,)`` or a batch of shape
``(batch, n)``; every routine broadcasts over the leading batch axis.
"""

import contextlib
import contextvars
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DivergenceError

#: states larger than this in absolute value count as diverged
DIVERGENCE_LIMIT = 1e12

ACTIVATIONS = {
    "tanh": np.tanh,
    "relu": lambda z: np.maximum(z, 0.0),
    "identity": lambda z: z,
}

_counter = contextvars.ContextVar("activation_counter", default=None)


class ActivationCounter:
    """Tallies scalar activation evaluations per sample while active."""

    def __init__(self):
        self.evaluations = 0
        self.calls = 0

    @property
    def per_call(self):
        return self.evaluations / self.calls if self.calls else 0.0


@contextlib.contextmanager
def count_activations():
    counter = ActivationCounter()
    token = _counter.set(counter)
    try:
        yield counter
    finally:
        _counter.reset(token)


def activate(name, z):
    """Apply the named elementwise nonlinearity (counted when instrumented)."""
    counter = _counter.get()
    if counter is not None:
        counter.evaluations += z.shape[-1]
        counter.calls += 1
    return ACTIVATIONS[name](z)


def _check_activation(name):
    if name not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}")


@dataclass(frozen=True, eq=False)
class OdeBlock:
    """Full-order block ``x' = f(A x + b) + Z u``; ``Z=None`` is autonomous."""

    A: np.ndarray
    b: np.ndarray
    Z: np.ndarray = None
    activation: str = "tanh"

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        if b.shape != (A.shape[0],):
            raise DimensionError(f"b has shape {b.shape}, expected ({A.shape[0]},)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.Z is not None:
            Z = np.asarray(self.Z, dtype=np.float64)
            if Z.ndim == 1:
                Z = Z[:, None]
            if Z.shape[0] != A.shape[0]:
                raise DimensionError(f"Z has {Z.shape[0]} rows, A has {A.shape[0]}")
            object.__setattr__(self, "Z", Z)
        _check_activation(self.activation)

    @property
    def dim(self):
        return self.A.shape[0]

    @property
    def input_dim(self):
        return 0 if self.Z is None else self.Z.shape[1]

    @property
    def n_params(self):
        return self.A.size

    def nonlinearity(self, x):
        return activate(self.activation, x @ self.A.T + self.b)

    def rhs(self, x, u=None):
        return _add_input(self.nonlinearity(x), self.Z, u)


def _add_input(fx, Z, u):
    if Z is None or u is None:
        return fx
    return fx + np.asarray(u, dtype=np.float64) @ Z.T


def rhs(block, x, u=None):
    """Right-hand side of any block type; checks the state dimension."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != block.dim:
        raise DimensionError(f"state has length {x.shape[-1]}, block expects {block.dim}")
    if u is not None and block.input_dim:
        u = np.asarray(u, dtype=np.float64)
        if u.shape[-1] != block.input_dim:
            raise DimensionError(f"input has length {u.shape[-1]}, block expects {block.input_dim}")
    return block.rhs(x, u)


def step_euler(block, x, u, dt):
    if dt <= 0:
        raise ValueError("dt must be positive")
    return x + dt * block.rhs(x, u)


def step_rk4(block, x, u, dt):
    """Classical RK4 step; ``u`` is held constant across the four stages."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    k1 = block.rhs(x, u)
    k2 = block.rhs(x + 0.5 * dt * k1, u)
    k3 = block.rhs(x + 0.5 * dt * k2, u)
    k4 = block.rhs(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


STEPPERS = {"euler": step_euler, "rk4": step_rk4}


@dataclass(frozen=True)
class SolverConfig:
    method: str = "rk4"
    t0: float = 0.0
    t_end: float = 1.0
    dt: float = 0.1

    def __post_init__(self):
        if self.method not in STEPPERS:
            raise ValueError(f"unknown solver {self.method!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        span = (self.t_end - self.t0) / self.dt
        if span < 0 or abs(span - round(span)) > 1e-9 * max(1.0, abs(span)):
            raise ValueError(
                f"(t_end - t0) / dt = {span!r} is not a whole number of steps"
            )

    @property
    def steps(self):
        return int(round((self.t_end - self.t0) / self.dt))

    def times(self):
        return self.t0 + self.dt * np.arange(self.steps + 1)


@dataclass(frozen=True, eq=False)
class InputSignal:
    """Sample-and-hold input: ``values[j]`` applies on ``[t0 + j*hold, t0 + (j+1)*hold)``.

    ``values`` has shape ``(intervals, i)`` or ``(intervals, batch, i)``.
    """

    values: np.ndarray
    hold: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        object.__setattr__(self, "values", v)
        if not self.hold > 0:
            raise ValueError("hold must be positive")

    @property
    def duration(self):
        return self.values.shape[0] * self.hold

    def at_step(self, step, dt):
        j = int(np.floor(step * dt / self.hold + 1e-9))
        return self.values[min(j, self.values.shape[0] - 1)]


@dataclass(eq=False)
class Trajectory:
    """Recorded states; for batched runs ``states`` has shape ``(batch, n, s)``."""

    times: np.ndarray
    states: np.ndarray
    activations: np.ndarray
    final: np.ndarray
    steps: list = field(default_factory=list)


def _check_finite(x, step):
    if not np.all(np.abs(x) <= DIVERGENCE_LIMIT):
        raise DivergenceError(f"ODE state diverged at step {step}", step=step)


def solve(block, x0, signal, cfg):
    """Integrate and return only ``x(t_end)``."""
    stepper = STEPPERS[cfg.method]
    x = np.asarray(x0, dtype=np.float64)
    for j in range(cfg.steps):
        u = None if signal is None else signal.at_step(j, cfg.dt)
        x = stepper(block, x, u, cfg.dt)
        _check_finite(x, j + 1)
    return x


def integrate(block, x0, signal, cfg, record_stride=None):
    """Integrate ``block`` from ``x0`` over ``cfg`` and record a trajectory.

    Every ``record_stride``-th solver step is stored, step 0 included. With
    ``record_stride=None`` only the initial state is stored; the final state
    is always available as ``Trajectory.final``.
    """
    x = np.asarray(x0, dtype=np.float64)
    if x.shape[-1] != block.dim:
        raise DimensionError(f"x0 has length {x.shape[-1]}, block expects {block.dim}")
    if signal is not None:
        if signal.duration < (cfg.t_end - cfg.t0) - 1e-9:
            raise ValueError("input signal does not cover the integration interval")
        if block.input_dim and signal.values.shape[-1] != block.input_dim:
            raise DimensionError("input signal width does not match Z")
    if record_stride is not None and record_stride < 1:
        raise ValueError("record_stride must be >= 1")
    _check_finite(x, 0)
    stepper = STEPPERS[cfg.method]
    times = cfg.times()
    rec_steps, states, acts = [0], [x], [block.nonlinearity(x)]
    for j in range(cfg.steps):
        u = None if signal is None else signal.at_step(j, cfg.dt)
        x = stepper(block, x, u, cfg.dt)
        _check_finite(x, j + 1)
        if record_stride is not None and (j + 1) % record_stride == 0:
            rec_steps.append(j + 1)
            states.append(x)
            acts.append(block.nonlinearity(x))
    return Trajectory(
        times=times[rec_steps],
        states=np.stack(states, axis=-1),
        activations=np.stack(acts, axis=-1),
        final=x,
        steps=rec_steps,
    )
