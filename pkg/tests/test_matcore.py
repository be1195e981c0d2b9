import numpy as np
import pytest

from odec import matcore
from odec.errors import DegeneracyError, NonFiniteError, RankError


def gram_svd(m):
    """Singular values and right vectors from the eigendecomposition of m.T m."""
    ev, vecs = np.linalg.eigh(m.T @ m)
    order = np.argsort(ev)[::-1]
    return np.sqrt(np.clip(ev[order], 0, None)), vecs[:, order]


def test_identity_singular_values():
    np.testing.assert_allclose(matcore.svd(np.eye(3)).singular_values, [1, 1, 1])


def test_diagonal_axis_aligned():
    r = matcore.svd(np.diag([3.0, 2.0, 1.0]))
    np.testing.assert_allclose(r.singular_values, [3, 2, 1])
    np.testing.assert_allclose(np.abs(r.left), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(np.abs(r.right), np.eye(3), atol=1e-15)


def test_random_matches_gram_oracle(rng):
    m = rng.standard_normal((6, 4))
    r = matcore.svd(m)
    sv, vecs = gram_svd(m)
    np.testing.assert_allclose(r.singular_values, sv, rtol=1e-10)
    # right vectors agree up to sign
    np.testing.assert_allclose(np.abs(np.sum(r.right * vecs, axis=0)), 1.0, atol=1e-10)
    assert np.linalg.norm(m - r.reconstruct()) <= 1e-8 * sv[0]


def test_sign_convention_deterministic(rng):
    m = rng.standard_normal((5, 3))
    a, b = matcore.svd(m), matcore.svd(m.copy())
    assert np.array_equal(a.left, b.left)
    idx = np.argmax(np.abs(a.left), axis=0)
    assert np.all(a.left[idx, range(3)] > 0)


def test_nonfinite_rejected():
    with pytest.raises(NonFiniteError):
        matcore.svd(np.array([[1.0, np.nan], [0.0, 1.0]]))


@pytest.mark.parametrize(
    "m,k,err",
    [
        (np.outer([1.0, 2.0, 3.0], [1.0, -1.0]), 1, 0.0),
        (np.eye(4), 2, np.sqrt(2)),
        (np.diag([3.0, 2.0, 1.0]), 2, 1.0),
    ],
)
def test_truncation_examples(m, k, err):
    t = matcore.truncate_svd(matcore.svd(m), k)
    assert abs(np.linalg.norm(m - t.reconstruct()) - err) < 1e-12


@pytest.mark.parametrize("k", [0, 4])
def test_truncation_out_of_range(k):
    with pytest.raises(RankError):
        matcore.truncate_svd(matcore.svd(np.eye(3)), k)


def test_eckart_young(rng):
    for _ in range(20):
        m = rng.standard_normal((rng.integers(2, 9), rng.integers(2, 9)))
        r = matcore.svd(m)
        for k in range(1, len(r.singular_values) + 1):
            err = np.linalg.norm(m - matcore.truncate_svd(r, k).reconstruct())
            assert abs(err - matcore.tail_norm(r.singular_values, k)) < 1e-8


def test_pinv_examples():
    np.testing.assert_allclose(matcore.pseudo_inverse(np.eye(2)), np.eye(2))
    np.testing.assert_allclose(matcore.pseudo_inverse(np.ones((2, 1))), [[0.5, 0.5]])


def test_pinv_normal_equations(rng):
    m = rng.standard_normal((5, 3))
    oracle = np.linalg.solve(m.T @ m, m.T)
    np.testing.assert_allclose(matcore.pseudo_inverse(m), oracle, atol=1e-12)


def test_pinv_square_is_inverse(rng):
    a = rng.standard_normal((6, 6)) + 6 * np.eye(6)
    np.testing.assert_allclose(matcore.pseudo_inverse(a), np.linalg.inv(a), atol=1e-8)


def test_solve_examples(rng):
    b = rng.standard_normal((3, 2))
    np.testing.assert_allclose(matcore.solve_linear(np.eye(3), b), b)
    np.testing.assert_allclose(matcore.solve_linear(np.diag([2.0, 4.0]), np.array([2.0, 8.0])),
                               [1.0, 2.0])


def test_solve_residual(rng):
    a = rng.standard_normal((5, 5)) + 5 * np.eye(5)
    b = rng.standard_normal(5)
    assert np.linalg.norm(a @ matcore.solve_linear(a, b) - b) < 1e-12


def test_solve_singular_names_degeneracy():
    with pytest.raises(DegeneracyError, match="DEIM degeneracy"):
        matcore.solve_linear(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))


def test_numerical_rank():
    m = np.outer([1.0, 2.0], [3.0, 4.0, 5.0])
    assert matcore.numerical_rank(np.linalg.svd(m, compute_uv=False), m.shape) == 1
