import numpy as np
import pytest

from odec.errors import DimensionError, DivergenceError
from odec.ode import (
    InputSignal,
    OdeBlock,
    SolverConfig,
    count_activations,
    integrate,
    rhs,
    solve,
    step_euler,
    step_rk4,
)
from odec.zoo import build_antisymmetric


def expm(M):
    """Matrix exponential by scaling and squaring with a Taylor core."""
    s = max(0, int(np.ceil(np.log2(max(np.linalg.norm(M, 1), 1e-16)))) + 1)
    A = M / 2**s
    E, term = np.eye(len(M)), np.eye(len(M))
    for j in range(1, 25):
        term = term @ A / j
        E = E + term
    for _ in range(s):
        E = E @ E
    return E


def decay():
    return OdeBlock(-np.eye(1), np.zeros(1), activation="identity")


def test_rhs_examples():
    z = OdeBlock(np.zeros((3, 3)), np.zeros(3))
    np.testing.assert_array_equal(rhs(z, np.array([1.0, -2.0, 3.0])), 0.0)
    ident = OdeBlock(np.eye(2), np.zeros(2), activation="identity")
    np.testing.assert_array_equal(rhs(ident, np.array([1.0, 2.0])), [1.0, 2.0])
    rot = OdeBlock(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.zeros(2))
    np.testing.assert_allclose(rhs(rot, np.array([0.5, 0.0])), [np.tanh(0.0), np.tanh(-0.5)])


def test_rhs_with_input():
    blk = OdeBlock(np.zeros((2, 2)), np.zeros(2), Z=np.array([[1.0], [2.0]]))
    np.testing.assert_allclose(rhs(blk, np.zeros(2), np.array([3.0])), [3.0, 6.0])


def test_rhs_dimension_mismatch():
    with pytest.raises(DimensionError):
        rhs(decay(), np.zeros(2))
    blk = OdeBlock(np.zeros((2, 2)), np.zeros(2), Z=np.ones((2, 1)))
    with pytest.raises(DimensionError):
        rhs(blk, np.zeros(2), np.zeros(3))


def test_euler_examples():
    assert step_euler(decay(), np.ones(1), None, 0.1)[0] == pytest.approx(0.9, abs=1e-15)
    zero = OdeBlock(np.zeros((2, 2)), np.zeros(2), activation="identity")
    x = np.array([0.3, -1.0])
    np.testing.assert_array_equal(step_euler(zero, x, None, 0.1), x)


def test_euler_rotation_hand_expansion():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    blk = OdeBlock(A, np.zeros(2), activation="identity")
    x, dt = np.array([1.0, 2.0]), 0.25
    np.testing.assert_allclose(step_euler(blk, x, None, dt), [1.0 + dt * 2.0, 2.0 - dt * 1.0])


def test_rk4_examples():
    assert abs(step_rk4(decay(), np.ones(1), None, 0.1)[0] - np.exp(-0.1)) <= 1e-7
    assert step_rk4(decay(), np.ones(1), None, 0.1)[0] == pytest.approx(0.90483742, abs=1e-7)
    zero = OdeBlock(np.zeros((2, 2)), np.zeros(2), activation="identity")
    x = np.array([0.3, -1.0])
    np.testing.assert_array_equal(step_rk4(zero, x, None, 0.1), x)
    const = OdeBlock(np.zeros((2, 2)), np.array([0.5, -2.0]), activation="identity")
    np.testing.assert_allclose(step_rk4(const, x, None, 0.1), x + 0.1 * np.array([0.5, -2.0]),
                               atol=1e-15)


def test_rk4_holds_input_constant():
    blk = OdeBlock(np.zeros((1, 1)), np.zeros(1), Z=np.ones((1, 1)), activation="identity")
    sig = InputSignal(np.array([[2.0], [5.0]]), hold=0.5)
    tr = integrate(blk, np.zeros(1), sig, SolverConfig("rk4", 0, 1.0, 0.5), 1)
    np.testing.assert_allclose(tr.states[0], [0.0, 1.0, 3.5])


def test_integrate_examples():
    tr = integrate(decay(), np.ones(1), None, SolverConfig("euler", 0, 1.0, 0.1))
    assert tr.final[0] == pytest.approx(0.9**10, abs=1e-14)
    assert tr.final[0] == pytest.approx(0.34867844, abs=1e-8)
    zero = OdeBlock(np.zeros((2, 2)), np.zeros(2), activation="identity")
    x0 = np.array([1.0, -1.0])
    tr = integrate(zero, x0, None, SolverConfig("rk4", 0, 1.0, 0.1), 1)
    np.testing.assert_array_equal(tr.states, np.repeat(x0[:, None], 11, axis=1))


def test_rk4_matches_matrix_exponential():
    A = np.array([[-0.5, 1.0], [-1.0, -0.2]])
    blk = OdeBlock(A, np.zeros(2), activation="identity")
    x0 = np.array([1.0, 0.5])
    tr = integrate(blk, x0, None, SolverConfig("rk4", 0, 1.0, 0.1))
    assert np.max(np.abs(tr.final - expm(A) @ x0)) <= 1e-6


def test_convergence_orders():
    def err(method, dt):
        return abs(integrate(decay(), np.ones(1), None,
                             SolverConfig(method, 0, 1, dt)).final[0] - np.exp(-1))
    assert err("rk4", 0.1) <= 1e-6
    assert err("rk4", 0.1) / err("rk4", 0.05) >= 12
    assert err("euler", 0.1) < 2e-2
    assert 1.6 <= err("euler", 0.1) / err("euler", 0.05) <= 2.4


def test_record_stride_counts(rng):
    blk = OdeBlock(rng.standard_normal((3, 3)), np.zeros(3))
    cfg = SolverConfig("euler", 0, 1.0, 0.1)
    assert integrate(blk, np.zeros(3), None, cfg, 1).states.shape == (3, 11)
    tr = integrate(blk, np.zeros(3), None, cfg, 3)
    assert tr.states.shape == (3, 4)
    np.testing.assert_allclose(tr.times, [0.0, 0.3, 0.6, 0.9])
    assert integrate(blk, np.zeros(3), None, cfg).states.shape == (3, 1)


def test_trajectory_activations_match_states(rng):
    blk = OdeBlock(rng.standard_normal((3, 3)), rng.standard_normal(3))
    tr = integrate(blk, rng.standard_normal(3), None, SolverConfig("rk4", 0, 0.5, 0.1), 1)
    np.testing.assert_allclose(tr.activations, np.tanh(blk.A @ tr.states + blk.b[:, None]),
                               atol=1e-15)


def test_batched_matches_single(rng):
    blk = OdeBlock(rng.standard_normal((4, 4)) / 2, rng.standard_normal(4))
    cfg = SolverConfig("rk4", 0, 1.0, 0.1)
    X0 = rng.standard_normal((3, 4))
    batch = solve(blk, X0, None, cfg)
    for i in range(3):
        np.testing.assert_allclose(batch[i], solve(blk, X0[i], None, cfg), atol=1e-14)


def test_divergence_names_step():
    blk = OdeBlock(np.array([[50.0]]), np.zeros(1), activation="identity")
    with pytest.raises(DivergenceError) as exc:
        integrate(blk, np.ones(1), None, SolverConfig("euler", 0, 10.0, 1.0))
    assert exc.value.step == 8
    assert "step 8" in str(exc.value)


def test_nonintegral_steps_rejected():
    with pytest.raises(ValueError):
        SolverConfig("rk4", 0.0, 1.0, 0.3)


def test_antisymmetric_identity_norm_nonincreasing(rng):
    for gamma in (0.0, 0.01, 0.3):
        A = build_antisymmetric(rng.standard_normal((6, 6)) / 3, gamma)
        blk = OdeBlock(A, np.zeros(6), activation="identity")
        tr = integrate(blk, rng.standard_normal(6), None, SolverConfig("rk4", 0, 3.0, 0.05), 1)
        norms = np.linalg.norm(tr.states, axis=0)
        assert np.all(np.diff(norms) <= 1e-12 * norms[:-1])


def test_activation_counter(rng):
    blk = OdeBlock(rng.standard_normal((5, 5)), np.zeros(5))
    with count_activations() as c:
        blk.rhs(np.zeros(5))
        blk.rhs(np.zeros((7, 5)))
    assert c.calls == 2 and c.evaluations == 10 and c.per_call == 5


def test_input_signal_must_cover_interval():
    blk = OdeBlock(np.zeros((1, 1)), np.zeros(1), Z=np.ones((1, 1)))
    with pytest.raises(ValueError):
        integrate(blk, np.zeros(1), InputSignal(np.ones((1, 1)), 0.5),
                  SolverConfig("euler", 0, 1.0, 0.5))
