import numpy as np
import pytest

from odec.data import Dataset, encode_idx, load_idx, parse_idx, synth_dataset
from odec.errors import BadMagicError, TruncatedPayloadError, UnsupportedDtypeError
from odec.ode import SolverConfig
from odec.trainer import TrainConfig, fit
from odec.zoo import dense_model, predict


def test_label_vector():
    out = parse_idx(bytes([0, 0, 8, 1, 0, 0, 0, 3, 1, 2, 3]))
    assert out.dtype == np.int64
    np.testing.assert_array_equal(out, [1, 2, 3])


def test_image_scaled():
    out = parse_idx(bytes([0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 0, 255]))
    np.testing.assert_array_equal(out, [[[0.0, 1.0], [0.0, 1.0]]])


def test_truncated_names_lengths():
    with pytest.raises(TruncatedPayloadError, match="expected 4 bytes, got 3"):
        parse_idx(bytes([0, 0, 8, 1, 0, 0, 0, 4, 1, 2, 3]))


def test_distinct_errors():
    with pytest.raises(BadMagicError):
        parse_idx(bytes([1, 0, 8, 1, 0, 0, 0, 1, 5]))
    with pytest.raises(UnsupportedDtypeError):
        parse_idx(bytes([0, 0, 0x0A, 1, 0, 0, 0, 1, 5]))
    with pytest.raises(TruncatedPayloadError):
        parse_idx(bytes([0, 0, 8, 2, 0, 0]))
    assert len({BadMagicError, TruncatedPayloadError, UnsupportedDtypeError}) == 3


def test_big_endian_float_round_trip(rng):
    a = rng.standard_normal((2, 3))
    np.testing.assert_array_equal(parse_idx(encode_idx(a, 0x0E)), a)
    blob = encode_idx(np.array([1.0], dtype=">f8"), 0x0E)
    assert blob[8:] == np.array([1.0], dtype=">f8").tobytes()


def test_load_idx_files(tmp_path):
    imgs = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3) * 10
    (tmp_path / "i.idx").write_bytes(encode_idx(imgs))
    (tmp_path / "l.idx").write_bytes(encode_idx(np.array([1, 0], dtype=np.uint8)))
    ds = load_idx(tmp_path / "i.idx", tmp_path / "l.idx", "test")
    assert ds.images.shape == (2, 1, 3, 3) and ds.split == "test"
    np.testing.assert_allclose(ds.images[:, 0], imgs / 255.0)
    np.testing.assert_array_equal(ds.labels, [1, 0])


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1, 2, 2)), [0])
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1, 2, 2)), [0, 3], class_count=3)


def test_synth_deterministic():
    a, b = synth_dataset(seed=4, samples=20), synth_dataset(seed=4, samples=20)
    assert a.images.tobytes() == b.images.tobytes() and a.labels.tobytes() == b.labels.tobytes()
    assert a.images.min() >= 0 and a.images.max() <= 1
    c = synth_dataset(seed=4, samples=20, split="test")
    assert c.images.tobytes() != a.images.tobytes()


def _trained_accuracy(margin):
    kw = dict(seed=2, classes=4, shape=(1, 8, 8), margin=margin)
    train = synth_dataset(samples=600, split="train", **kw)
    test = synth_dataset(samples=400, split="test", **kw)
    m = dense_model((1, 8, 8), 32, 4, seed=1, solver=SolverConfig("rk4", 0, 0.5, 0.1))
    m, _ = fit(m, train, TrainConfig(epochs=30, batch_size=32))
    return float(np.mean(np.argmax(predict(m, test.images), axis=1) == test.labels))


def test_margin_zero_is_chance():
    # train and test share no signal, so test accuracy sits near 1/classes
    assert abs(_trained_accuracy(0.0) - 0.25) < 0.08


def test_large_margin_separable():
    assert _trained_accuracy(2.0) >= 0.95
