"""Trajectory snapshots of a trained ODE block and the POD basis built from them."""

from dataclasses import dataclass, field
import json
import logging
import struct
import warnings

import numpy as np

from . import matcore
from .errors import BadMagicError, DivergenceError, RankError, TruncatedPayloadError
from .ode import InputSignal, SolverConfig, integrate
from .zoo import RnnSpec, as_sequences, ode_input

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """State snapshots ``X`` and nonlinearity snapshots ``F``, column-aligned."""

    X: np.ndarray
    F: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        F = np.asarray(self.F, dtype=np.float64)
        if X.shape != F.shape or X.ndim != 2 or X.shape[1] < 1:
            raise ValueError(f"X {X.shape} and F {F.shape} must be equal nonempty matrices")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(F))):
            raise ValueError("snapshot matrices must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "F", F)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def count(self):
        return self.X.shape[1]

    def provenance_text(self):
        return json.dumps(self.provenance, sort_keys=True, separators=(",", ":"))


def _rnn_problem(model, images):
    seq = as_sequences(images, model.input_dim)
    length = seq.shape[1]
    hold = model.dt * model.steps_per_input
    signal = InputSignal(np.transpose(seq, (1, 0, 2)), hold)
    cfg = SolverConfig("euler", 0.0, length * hold, model.dt)
    return np.zeros((seq.shape[0], model.hidden)), signal, cfg


def trajectories(model, images, record_stride):
    """Batched recorded trajectory of the model's ODE block for ``images``."""
    if isinstance(model, RnnSpec):
        x0, signal, cfg = _rnn_problem(model, images)
        return integrate(model.block, x0, signal, cfg, record_stride)
    layer = model.ode_layer
    return integrate(layer.block, ode_input(model, images), None, layer.solver, record_stride)


def _flatten(traj):
    # (batch, n, s) -> (n, batch*s), sample-major so each sample's steps stay contiguous
    b, n, s = traj.shape
    return np.transpose(traj, (1, 0, 2)).reshape(n, b * s)


def collect(model, dataset, sample_limit, record_stride=2):
    """Run the first ``sample_limit`` samples through the model and stack snapshots.

    Samples whose trajectory diverges are skipped with a warning; the number
    skipped is recorded in the provenance.
    """
    if sample_limit < 1:
        raise ValueError("sample_limit must be >= 1")
    images = dataset.images[:sample_limit]
    try:
        traj = trajectories(model, images, record_stride)
        X, F = _flatten(traj.states), _flatten(traj.activations)
        skipped = 0
    except DivergenceError:
        xs, fs, skipped = [], [], 0
        for i in range(images.shape[0]):
            try:
                t = trajectories(model, images[i : i + 1], record_stride)
            except DivergenceError as exc:
                skipped += 1
                warnings.warn(f"sample {i} diverged at step {exc.step}; skipped")
                continue
            xs.append(_flatten(t.states))
            fs.append(_flatten(t.activations))
        if not xs:
            raise
        X, F = np.hstack(xs), np.hstack(fs)
    provenance = {
        "dataset": dataset.ident,
        "samples": int(images.shape[0]),
        "record_stride": int(record_stride),
        "skipped": skipped,
    }
    log.info("collected %d snapshot columns from %d samples", X.shape[1], images.shape[0])
    return SnapshotSet(X, F, provenance)


def pod_basis(X, k):
    """First ``k`` left singular vectors of ``X``."""
    X = matcore.as_matrix(X, "X")
    bound = min(X.shape)
    if not 1 <= k <= bound:
        raise RankError(f"POD dimension k={k} outside [1, {bound}]")
    return matcore.svd(X).left[:, :k]


def singular_spectrum(M):
    """Singular values of ``M`` normalised to sum to one."""
    s = matcore.svd(M).singular_values
    total = s.sum()
    return s / total if total > 0 else s


def retained_energy(singular_values):
    """Cumulative fraction of ``sum(sigma**2)`` captured by the leading k values, k = 1..q."""
    s2 = np.asarray(singular_values) ** 2
    return np.cumsum(s2) / s2.sum()


# ---------------------------------------------------------------------------
# SNP1 file: "SNP1", u32 rows, u32 cols, X then F as float64 column-major,
# u32 byte length + UTF-8 provenance JSON; all little-endian.

SNAPSHOT_MAGIC = b"SNP1"


def encode_snapshots(snaps):
    rows, cols = snaps.X.shape
    parts = [
        SNAPSHOT_MAGIC,
        struct.pack("<II", rows, cols),
        np.asarray(snaps.X, dtype="<f8").tobytes(order="F"),
        np.asarray(snaps.F, dtype="<f8").tobytes(order="F"),
    ]
    text = snaps.provenance_text().encode("utf-8")
    parts += [struct.pack("<I", len(text)), text]
    return b"".join(parts)


def decode_snapshots(data):
    data = bytes(data)
    if data[:4] != SNAPSHOT_MAGIC:
        raise BadMagicError(f"snapshot magic must be SNP1, got {data[:4]!r}")
    if len(data) < 12:
        raise TruncatedPayloadError("snapshot header truncated")
    rows, cols = struct.unpack_from("<II", data, 4)
    size = rows * cols * 8
    end = 12 + 2 * size
    if len(data) < end + 4:
        raise TruncatedPayloadError(
            f"snapshot payload truncated: expected at least {end + 4} bytes, got {len(data)}"
        )
    X = np.frombuffer(data, "<f8", rows * cols, 12).reshape((rows, cols), order="F")
    F = np.frombuffer(data, "<f8", rows * cols, 12 + size).reshape((rows, cols), order="F")
    (length,) = struct.unpack_from("<I", data, end)
    text = data[end + 4 : end + 4 + length]
    if len(text) != length:
        raise TruncatedPayloadError("snapshot provenance truncated")
    provenance = json.loads(text.decode("utf-8")) if length else {}
    return SnapshotSet(X.astype(np.float64), F.astype(np.float64), provenance)


def save_snapshots(snaps, path):
    with open(path, "wb") as fh:
        fh.write(encode_snapshots(snaps))


def load_snapshots(path):
    with open(path, "rb") as fh:
        return decode_snapshots(fh.read())
