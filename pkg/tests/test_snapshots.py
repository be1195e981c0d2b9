import warnings

import numpy as np
import pytest

from odec import matcore
from odec.data import Dataset
from odec.errors import FormatError, RankError, TruncatedPayloadError
from odec.ode import OdeBlock, SolverConfig, integrate
from odec.snapshots import (
    SnapshotSet,
    collect,
    decode_snapshots,
    encode_snapshots,
    load_snapshots,
    pod_basis,
    retained_energy,
    save_snapshots,
    singular_spectrum,
)
from odec.zoo import Flatten, Linear, ModelSpec, OdeLayer, Readout, dense_model, ode_input


def _model(block, steps=10):
    n = block.dim
    return ModelSpec([Flatten(), Linear(np.eye(n, 4), np.zeros(n)),
                      OdeLayer(block, SolverConfig("euler", 0, steps * 0.1, 0.1)),
                      Readout(np.zeros((2, n)), np.zeros(2))], (1, 2, 2), 2)


def _data(count, rng):
    return Dataset(rng.random((count, 1, 2, 2)), rng.integers(0, 2, count), "train", "t", 2)


def test_column_count_single_sample(rng):
    m = _model(OdeBlock(rng.standard_normal((3, 3)), np.zeros(3)))
    s = collect(m, _data(1, rng), 1, 2)
    assert s.X.shape == (3, 6) and s.F.shape == (3, 6)


def test_zero_dynamics(rng):
    m = _model(OdeBlock(np.zeros((3, 3)), np.zeros(3), activation="identity"))
    data = _data(1, rng)
    s = collect(m, data, 1, 2)
    x0 = ode_input(m, data.images[:1])[0]
    np.testing.assert_array_equal(s.X, np.repeat(x0[:, None], 6, axis=1))
    np.testing.assert_array_equal(s.F, 0.0)


def test_sample_major_order(rng):
    block = OdeBlock(rng.standard_normal((3, 3)), rng.standard_normal(3))
    m = _model(block)
    data = _data(3, rng)
    s = collect(m, data, 3, 2)
    assert s.count == 18
    x0 = ode_input(m, data.images)
    cols = [integrate(block, x0[i], None, m.ode_layer.solver, 2).states for i in range(3)]
    np.testing.assert_allclose(s.X, np.hstack(cols), atol=1e-14)
    np.testing.assert_allclose(s.F, block.nonlinearity(s.X.T).T, atol=1e-12)


def test_divergent_sample_skipped(rng):
    block = OdeBlock(np.array([[400.0]]), np.zeros(1), activation="identity")
    m = ModelSpec([Flatten(), Linear(np.array([[1.0]]), np.zeros(1)),
                   OdeLayer(block, SolverConfig("euler", 0, 1.0, 0.1)),
                   Readout(np.zeros((2, 1)), np.zeros(2))], (1, 1, 1), 2)
    data = Dataset(np.array([0.0, 1.0, 0.0]).reshape(3, 1, 1, 1), [0, 1, 0], "train", "d", 2)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        s = collect(m, data, 3, 1)
    assert s.provenance["skipped"] == 1 and s.count == 22
    assert any("diverged" in str(w.message) for w in caught)


def test_collect_deterministic(tiny_model, tiny_data):
    a, b = collect(tiny_model, tiny_data[0], 5, 2), collect(tiny_model, tiny_data[0], 5, 2)
    assert encode_snapshots(a) == encode_snapshots(b)


def test_pod_examples(rng):
    c = np.array([1.0, -2.0, 2.0])
    V = pod_basis(np.repeat(c[:, None], 4, axis=1), 1)
    np.testing.assert_allclose(np.abs(V[:, 0]), np.abs(c) / 3)
    Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    V = pod_basis(Q, 5)
    assert np.linalg.norm(Q - V @ V.T @ Q) < 1e-12


def test_pod_residual_tail(rng):
    X = rng.standard_normal((8, 12))
    sv = np.sqrt(np.linalg.eigvalsh(X @ X.T)[::-1])
    for k in range(1, 9):
        V = pod_basis(X, k)
        np.testing.assert_allclose(V.T @ V, np.eye(k), atol=1e-10)
        resid = np.linalg.norm(X - V @ (V.T @ X))
        assert abs(resid - np.sqrt(np.sum(sv[k:] ** 2))) < 1e-9


def test_pod_rank_bound():
    with pytest.raises(RankError):
        pod_basis(np.ones((4, 2)), 3)


def test_singular_spectrum(rng):
    np.testing.assert_allclose(singular_spectrum(np.diag([3.0, 1.0])), [0.75, 0.25])
    np.testing.assert_allclose(singular_spectrum(np.outer([1.0, 2, 3], [1.0, 1, 1])),
                               [1, 0, 0], atol=1e-15)
    M = rng.standard_normal((5, 7))
    s = np.linalg.svd(M, compute_uv=False)
    np.testing.assert_allclose(singular_spectrum(M), s / s.sum(), rtol=1e-12)


def test_retained_energy():
    np.testing.assert_allclose(retained_energy(np.array([3.0, 1.0])), [0.9, 1.0])


def test_round_trip(tmp_path, tiny_model, tiny_data):
    s = collect(tiny_model, tiny_data[0], 4, 2)
    path = tmp_path / "s.snp"
    save_snapshots(s, path)
    t = load_snapshots(path)
    assert t.X.tobytes() == s.X.tobytes() and t.F.tobytes() == s.F.tobytes()
    assert t.provenance == s.provenance
    assert path.read_bytes() == encode_snapshots(t)


def test_decode_errors():
    s = SnapshotSet(np.ones((2, 3)), np.zeros((2, 3)), {"a": 1})
    blob = encode_snapshots(s)
    with pytest.raises(FormatError):
        decode_snapshots(b"XXXX" + blob[4:])
    with pytest.raises(TruncatedPayloadError):
        decode_snapshots(blob[:-3])


def test_mismatched_shapes_rejected():
    with pytest.raises(ValueError):
        SnapshotSet(np.ones((2, 3)), np.ones((3, 2)))


def test_conditioning_of_dense_snapshots(tiny_model, tiny_data):
    s = collect(tiny_model, tiny_data[0], 10, 2)
    sx = matcore.svd(s.X)
    assert matcore.numerical_rank(sx.singular_values, s.X.shape) == s.n
