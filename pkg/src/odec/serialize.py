"""JSON model files.

Layout (keys in this order)::

    {"schema": "odec-model", "schema_version": 1, "type": "feedforward" | "rnn",
     ...model fields..., "sections": {"mor": ..., "compression": ..., "provenance": ...}}

Tensors are ``{"shape": [...], "data": [...]}`` with row-major data; integer
index tensors additionally carry ``"dtype": "int64"``. Floats are written with
``repr`` precision, so a write/read cycle reproduces every tensor bit for bit.
Vector layout inside convolutional blocks is channel-major
``(channel, row, col)``; interpolation point lists are 0-based.
"""

import hashlib
import json

import numpy as np

from .baselines import SvdTruncatedBlock
from .errors import FormatError, SchemaVersionError
from .mor import ReducedOdeBlock
from .ode import OdeBlock, SolverConfig
from .zoo import (Flatten, Linear, MaxPool, ModelSpec, OdeLayer, ReLU, Readout, RnnSpec,
                  Scatter, Select)

SCHEMA = "odec-model"
SCHEMA_VERSION = 1


def tensor_to_json(a):
    a = np.asarray(a)
    out = {"shape": list(a.shape), "data": a.ravel().tolist()}
    if a.dtype.kind in "iu":
        out["dtype"] = "int64"
    return out


def tensor_from_json(t):
    dtype = np.int64 if t.get("dtype") == "int64" else np.float64
    return np.asarray(t["data"], dtype=dtype).reshape(t["shape"])


def _tensors(**arrays):
    return {k: tensor_to_json(v) for k, v in arrays.items() if v is not None}


def block_to_json(block):
    if isinstance(block, OdeBlock):
        return {"type": "full", "activation": block.activation,
                "tensors": _tensors(A=block.A, b=block.b, Z=block.Z)}
    if isinstance(block, ReducedOdeBlock):
        return {"type": "pod-deim", "activation": block.activation,
                "tensors": _tensors(A_m=block.A_m, b_m=block.b_m, Z_r=block.Z_r, N=block.N)}
    if isinstance(block, SvdTruncatedBlock):
        return {"type": "svd", "activation": block.activation,
                "tensors": _tensors(first=block.first, second=block.second, b=block.b,
                                    Z=block.Z)}
    raise TypeError(f"cannot serialize block {type(block).__name__}")


def block_from_json(d):
    t = {k: tensor_from_json(v) for k, v in d["tensors"].items()}
    act = d["activation"]
    kind = d["type"]
    if kind == "full":
        return OdeBlock(t["A"], t["b"], t.get("Z"), act)
    if kind == "pod-deim":
        return ReducedOdeBlock(t["A_m"], t["b_m"], t.get("Z_r"), t["N"], act)
    if kind == "svd":
        return SvdTruncatedBlock(t["first"], t["second"], t["b"], t.get("Z"), act)
    raise FormatError(f"unknown block type {kind!r}")


def solver_to_json(cfg):
    return {"method": cfg.method, "t0": cfg.t0, "t_end": cfg.t_end, "dt": cfg.dt}


def layer_to_json(layer):
    kind = layer.kind
    if kind in ("linear", "readout"):
        return {"kind": kind, "role": layer.role, "tensors": _tensors(W=layer.W, b=layer.b)}
    if kind in ("relu", "flatten"):
        return {"kind": kind}
    if kind == "maxpool":
        return {"kind": kind, "channels": layer.channels, "height": layer.height,
                "width": layer.width, "window": layer.window, "stride": layer.stride}
    if kind in ("select", "scatter"):
        return {"kind": kind, "n": layer.n, "tensors": _tensors(indices=layer.indices)}
    if kind == "ode":
        return {"kind": kind, "block": block_to_json(layer.block),
                "solver": solver_to_json(layer.solver)}
    raise TypeError(f"cannot serialize layer kind {kind!r}")


def layer_from_json(d):
    kind = d["kind"]
    if kind in ("linear", "readout"):
        cls = Linear if kind == "linear" else Readout
        return cls(tensor_from_json(d["tensors"]["W"]), tensor_from_json(d["tensors"]["b"]),
                   d.get("role", "linear"))
    if kind == "relu":
        return ReLU()
    if kind == "flatten":
        return Flatten()
    if kind == "maxpool":
        return MaxPool(d["channels"], d["height"], d["width"], d["window"], d["stride"])
    if kind in ("select", "scatter"):
        cls = Select if kind == "select" else Scatter
        return cls(tensor_from_json(d["tensors"]["indices"]), d["n"])
    if kind == "ode":
        return OdeLayer(block_from_json(d["block"]), SolverConfig(**d["solver"]))
    raise FormatError(f"unknown layer kind {kind!r}")


def model_to_dict(model):
    head = {"schema": SCHEMA, "schema_version": SCHEMA_VERSION}
    if isinstance(model, RnnSpec):
        body = {
            "type": "rnn",
            "seed": model.seed,
            "dt": model.dt,
            "steps_per_input": model.steps_per_input,
            "gamma": model.gamma,
            "block": block_to_json(model.block),
            "readout": layer_to_json(model.readout),
            "tensors": _tensors(lift=model.lift, W=model.W),
        }
    else:
        body = {
            "type": "feedforward",
            "seed": model.seed,
            "input_shape": list(model.input_shape),
            "class_count": model.class_count,
            "layers": [layer_to_json(l) for l in model.layers],
        }
    return {**head, **body, "sections": model.sections}


def model_from_dict(d):
    if d.get("schema") != SCHEMA:
        raise FormatError(f"not a model file (schema {d.get('schema')!r})")
    if d.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"model schema version {d.get('schema_version')!r}, expected {SCHEMA_VERSION}"
        )
    sections = d.get("sections", {})
    if d["type"] == "rnn":
        t = {k: tensor_from_json(v) for k, v in d.get("tensors", {}).items()}
        return RnnSpec(block_from_json(d["block"]), layer_from_json(d["readout"]), d["dt"],
                       d["steps_per_input"], t.get("lift"), t.get("W"), d.get("gamma"),
                       d.get("seed"), sections)
    if d["type"] != "feedforward":
        raise FormatError(f"unknown model type {d['type']!r}")
    return ModelSpec([layer_from_json(l) for l in d["layers"]], d["input_shape"],
                     d["class_count"], d.get("seed"), sections)


def dumps_model(model):
    return json.dumps(model_to_dict(model), separators=(",", ":"))


def loads_model(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(d)


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
