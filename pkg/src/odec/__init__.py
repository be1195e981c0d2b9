"""Compression of neural-ODE blocks by POD-DEIM model order reduction.

Baselines (SVD weight truncation, APoZ neuron pruning), a fixed-step ODE
engine, reservoir-style readout training and benchmarking utilities are
included. See the README for a walkthrough.
"""

import sys as _sys

from .baselines import apoz_prune, apoz_scores, svd_compress, svd_truncate_block
from .bench import evaluate, read_report, relative_curve, sweep, write_report
from .data import Dataset, load_idx, parse_idx, synth_dataset
from .errors import (
    DegeneracyError,
    DimensionError,
    DivergenceError,
    FormatError,
    NonFiniteError,
    OdecError,
    RankError,
    TrainingDivergenceError,
)
from .mor import ReducedOdeBlock, deim_select, odeim_select, reduce_model
from .ode import InputSignal, OdeBlock, SolverConfig, count_activations, integrate, solve
from .serialize import load_model, save_model
from .snapshots import SnapshotSet, collect, load_snapshots, pod_basis, save_snapshots
from .trainer import TrainConfig, fit
from .zoo import (
    ModelSpec,
    RnnSpec,
    build_antisymmetric,
    conv_model,
    conv_to_matrix,
    dense_model,
    forward,
    parameter_counts,
    predict,
    rnn_model,
)

__version__ = "0.1.0"

__all__ = [
    name for name, value in list(globals().items())
    if not name.startswith("_") and not isinstance(value, type(_sys))
]
