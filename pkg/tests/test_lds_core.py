"""Tests for the linear-dynamical-system core: stepping, observation,
diagnostics, linearization, and the simulation loop.

Expected values are produced by independent oracles (hand arithmetic,
explicit loops, geometric series) and frozen here.
"""

import numpy as np
import pytest

from nscontrol.errors import ConfigurationError, EvaluationError
from nscontrol.lds_core import (
    LinearSystem,
    PerturbationSource,
    QuadraticCost,
    controllability,
    linearize,
    lyapunov_certificate,
    observability_rank,
    observe,
    simulate,
    spectral_radius,
    step,
)


def matvec_oracle(A, x):
    """Dense matrix-vector product via explicit loops (independent of
    numpy's matmul path)."""
    out = np.zeros(A.shape[0])
    for i in range(A.shape[0]):
        acc = 0.0
        for j in range(A.shape[1]):
            acc += A[i, j] * x[j]
        out[i] = acc
    return out


# ---------------------------------------------------------------------------
# step / observe
# ---------------------------------------------------------------------------


def test_step_zero_fixed_point():
    sys2 = LinearSystem.time_invariant(np.eye(2), np.ones((2, 1)))
    out = step(sys2, [0, 0], [0], [0, 0], t=0)
    assert np.all(out == 0)


def test_step_double_integrator_hand_value():
    delta = 0.1
    sys2 = LinearSystem.time_invariant([[1, delta], [0, 1]], [[0], [1]])
    out = step(sys2, [1, 2], [3], [0, 0])
    # By hand: A x = [1 + 0.1*2, 2] = [1.2, 2]; B u = [0, 3]; sum = [1.2, 5].
    assert np.allclose(out, [1.2, 5.0], atol=1e-15)
    # Variant with the force integrated over the step (B = [0, delta]'):
    sys2b = LinearSystem.time_invariant([[1, delta], [0, 1]], [[0], [delta]])
    assert np.allclose(step(sys2b, [1, 2], [3], [0, 0]), [1.2, 2.3], atol=1e-15)


def test_step_matches_loop_oracle():
    rng = np.random.default_rng(7)
    for _ in range(20):
        A = rng.standard_normal((4, 4))
        x = rng.standard_normal(4)
        w = rng.standard_normal(4)
        sys4 = LinearSystem.time_invariant(A, np.zeros((4, 1)))
        got = step(sys4, x, [0.0], w)
        want = matvec_oracle(A, x) + w
        assert np.max(np.abs(got - want)) < 1e-12


def test_step_dimension_mismatch_raises():
    sys2 = LinearSystem.time_invariant(np.eye(2), np.ones((2, 1)))
    with pytest.raises(ConfigurationError):
        step(sys2, [1, 2, 3], [0], [0, 0])
    with pytest.raises(ConfigurationError):
        step(sys2, [1, 2], [0, 0], [0, 0])


def test_observe_identity_and_projection():
    full = LinearSystem.time_invariant(np.eye(2), np.ones((2, 1)))
    assert np.array_equal(observe(full, [3, -1]), [3, -1])
    partial = LinearSystem.time_invariant(np.eye(2), np.ones((2, 1)), C=[[1, 0]])
    assert np.array_equal(observe(partial, [3, -1]), [3])


def test_observe_matches_loop_oracle():
    rng = np.random.default_rng(11)
    C = rng.standard_normal((3, 5))
    x = rng.standard_normal(5)
    sysp = LinearSystem.time_invariant(np.eye(5), np.ones((5, 1)), C=C)
    assert np.max(np.abs(observe(sysp, x) - matvec_oracle(C, x))) < 1e-12


def test_time_varying_provider():
    def provider(t):
        return np.eye(2) * (t + 1), np.ones((2, 1)), None

    sysv = LinearSystem.time_varying(provider, d_x=2, d_u=1)
    assert np.allclose(step(sysv, [1, 1], [0], [0, 0], t=2), [3, 3])


# ---------------------------------------------------------------------------
# spectral radius
# ---------------------------------------------------------------------------


def test_spectral_radius_nilpotent_identity_rotation():
    assert spectral_radius([[0, 1], [0, 0]]) == 0.0
    assert abs(spectral_radius(np.eye(3)) - 1.0) < 1e-14
    # Rotation matrix: characteristic polynomial lambda^2 + 1, roots +-i.
    assert abs(spectral_radius([[0, 1], [-1, 0]]) - 1.0) < 1e-12


def test_spectral_radius_power_property():
    rng = np.random.default_rng(5)
    for _ in range(10):
        M = 0.3 * rng.standard_normal((4, 4))
        rho = spectral_radius(M)
        for k in range(1, 6):
            assert abs(spectral_radius(np.linalg.matrix_power(M, k)) - rho**k) < 1e-8


def test_spectral_radius_power_iteration_crosscheck():
    # Power iteration on a symmetric matrix converges to the top |eigenvalue|;
    # written out by hand so the dense eigensolver has an independent check.
    rng = np.random.default_rng(13)
    for _ in range(5):
        M = rng.standard_normal((6, 6))
        S = (M + M.T) / 2.0
        v = rng.standard_normal(6)
        v /= np.linalg.norm(v)
        estimate = 0.0
        for _ in range(2000):
            Sv = S @ v
            estimate = np.linalg.norm(Sv)
            v = Sv / estimate
        assert abs(spectral_radius(S) - estimate) < 1e-6


def test_spectral_radius_rejects_nonsquare():
    with pytest.raises(ConfigurationError):
        spectral_radius(np.ones((2, 3)))


# ---------------------------------------------------------------------------
# Lyapunov certificate
# ---------------------------------------------------------------------------


def test_lyapunov_zero_matrix_gives_identity():
    P = lyapunov_certificate(np.zeros((3, 3)))
    assert np.allclose(P, np.eye(3), atol=1e-12)


def test_lyapunov_scalar_geometric_series():
    # Sum of 0.25^t = 1/(1 - 0.25) = 4/3.
    P = lyapunov_certificate([[0.5]])
    assert abs(P[0, 0] - 4.0 / 3.0) < 1e-9


def test_lyapunov_unstable_absent():
    assert lyapunov_certificate([[1.1]]) is None
    assert lyapunov_certificate(1.1 * np.eye(3)) is None


def test_lyapunov_iff_spectral_radius():
    rng = np.random.default_rng(3)
    for _ in range(10):
        M = rng.standard_normal((4, 4))
        rho = spectral_radius(M)
        stable = M * (0.6 / rho)
        unstable = M * (1.2 / rho)
        P = lyapunov_certificate(stable)
        assert P is not None
        # P >= I and P - A'PA > 0 (up to truncation tolerance).
        A = stable
        assert np.linalg.eigvalsh(P - np.eye(4)).min() > -1e-9
        assert np.linalg.eigvalsh(P - A.T @ P @ A).min() > 1e-3
        assert lyapunov_certificate(unstable) is None


# ---------------------------------------------------------------------------
# Controllability / observability
# ---------------------------------------------------------------------------


def test_controllability_examples():
    K, rank, _ = controllability(np.eye(2), [[1], [0]], r=2)
    assert rank == 1  # AB = B, so the matrix has a single independent column

    downshift = [[0, 0], [1, 0]]
    K2, rank2, kappa2 = controllability(downshift, [[1], [0]], r=2)
    assert np.allclose(K2, [[1, 0], [0, 1]])
    assert rank2 == 2
    assert abs(kappa2 - 1.0) < 1e-12

    _, rank0, kappa0 = controllability([[0.7]], [[0.0]], r=3)
    assert rank0 == 0
    assert kappa0 == float("inf")


def test_controllability_rank_monotone_and_stabilizes():
    rng = np.random.default_rng(17)
    A = rng.standard_normal((4, 4))
    B = rng.standard_normal((4, 1))
    ranks = [controllability(A, B, r)[1] for r in range(1, 8)]
    assert all(r2 >= r1 for r1, r2 in zip(ranks, ranks[1:]))
    # Once two consecutive ranks agree, the rank has stabilized for good.
    for i in range(len(ranks) - 1):
        if ranks[i] == ranks[i + 1]:
            assert all(r == ranks[i] for r in ranks[i + 1 :])
            break


def test_observability_examples_and_duality():
    assert observability_rank(np.eye(3) * 0.5, np.eye(3)) == 3
    assert observability_rank(np.eye(2), [[1, 0]]) == 1
    rng = np.random.default_rng(23)
    A = rng.standard_normal((4, 4))
    C = rng.standard_normal((2, 4))
    dual_rank = controllability(A.T, C.T, r=4)[1]
    assert observability_rank(A, C) == dual_rank


# ---------------------------------------------------------------------------
# Linearization
# ---------------------------------------------------------------------------


def test_linearize_recovers_linear_system():
    rng = np.random.default_rng(29)
    A0 = rng.standard_normal((3, 3))
    B0 = rng.standard_normal((3, 2))

    def f(x, u):
        return A0 @ x + B0 @ u

    A, B = linearize(f, np.zeros(3), np.zeros(2), fd_step=1e-5)
    assert np.max(np.abs(A - A0)) < 1e-8
    assert np.max(np.abs(B - B0)) < 1e-8


def test_linearize_pendulum_gravity_entry():
    delta, g, ell, m = 0.1, 9.8, 1.0, 1.0

    def f(x, u):
        theta, theta_dot = x
        return np.array(
            [
                theta + delta * theta_dot,
                theta_dot + delta * (u[0] - m * g * ell * np.sin(theta)) / (m * ell**2),
            ]
        )

    A, _ = linearize(f, [0.0, 0.0], [0.0])
    # By hand: d(theta_dot')/d(theta) at theta=0 is -delta * g / ell = -0.98.
    assert abs(A[1, 0] - (-0.98)) < 1e-8


def test_linearize_pressure_map_hand_derivative():
    c0, c1, c2 = 2.0, 3.0, 3.0

    def f(v, u):
        return np.array([c0 + c1 * v[0] ** (-1.0 / 3.0) + c2 * v[0] ** (5.0 / 3.0)])

    A, _ = linearize(f, [1.0], [0.0])
    # By hand: dp/dv at v=1 is -c1/3 + 5*c2/3 = -1 + 5 = 4.
    assert abs(A[0, 0] - 4.0) < 1e-7


def test_linearize_nan_raises():
    def f(x, u):
        return np.array([float("nan")])

    with pytest.raises(EvaluationError):
        linearize(f, [0.0], [0.0])


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def zero_controller(t, x, y):
    return np.zeros(1)


def test_simulate_zero_everything():
    sys2 = LinearSystem.time_invariant(np.eye(2) * 0.5, [[0], [1]])
    cost = QuadraticCost(np.eye(2), np.eye(1))
    traj = simulate(sys2, zero_controller, PerturbationSource.zero(), cost, T=10, seed=0)
    assert np.all(traj.states == 0)
    assert traj.total_cost == 0.0
    assert traj.gamma == 0.0


def test_simulate_geometric_series():
    sys1 = LinearSystem.time_invariant([[0.5]], [[1.0]])
    cost = QuadraticCost(np.eye(1), np.eye(1))
    T = 60
    traj = simulate(sys1, zero_controller, PerturbationSource.constant([1.0]), cost, T=T)
    # x_T = sum_{i=0}^{T-1} 0.5^i = 2 (1 - 0.5^T); at T=60 that is 2 to 1e-15.
    assert abs(traj.states[-1, 0] - 2.0 * (1 - 0.5**T)) < 1e-12
    assert abs(traj.states[-1, 0] - 2.0) < 1e-12


def test_simulate_recorded_replay_is_bit_exact():
    sys2 = LinearSystem.time_invariant([[0.9, 0.1], [0.0, 0.8]], [[0.0], [1.0]])
    cost = QuadraticCost(np.eye(2), np.eye(1))

    def controller(t, x, y):
        return np.array([-0.3 * x[0]])

    first = simulate(sys2, controller, PerturbationSource.gaussian(0.5), cost, T=40, seed=42)
    replay = simulate(
        sys2, controller, PerturbationSource.recorded(first.perturbations), cost, T=40, seed=7
    )
    assert first.states.tobytes() == replay.states.tobytes()
    assert first.costs.tobytes() == replay.costs.tobytes()
    assert first.replay_residual(sys2) == 0.0


def test_simulate_same_seed_byte_identical():
    sys2 = LinearSystem.time_invariant([[0.9, 0.1], [0.0, 0.8]], [[0.0], [1.0]])
    cost = QuadraticCost(np.eye(2), np.eye(1))
    a = simulate(sys2, zero_controller, PerturbationSource.gaussian(1.0), cost, T=25, seed=5)
    b = simulate(sys2, zero_controller, PerturbationSource.gaussian(1.0), cost, T=25, seed=5)
    assert a.states.tobytes() == b.states.tobytes()
    assert a.perturbations.tobytes() == b.perturbations.tobytes()


def test_simulate_nan_controller_aborts():
    sys1 = LinearSystem.time_invariant([[1.0]], [[1.0]])
    cost = QuadraticCost(np.eye(1), np.eye(1))

    def bad(t, x, y):
        return np.array([float("nan")])

    with pytest.raises(EvaluationError):
        simulate(sys1, bad, PerturbationSource.zero(), cost, T=3)


def test_perturbation_clipping_and_kinds():
    rng = np.random.default_rng(0)
    big = PerturbationSource.constant([3.0, 4.0], clip_to_unit_ball=True)
    w = big.sample(0, 2, rng)
    assert abs(np.linalg.norm(w) - 1.0) < 1e-12
    assert np.allclose(w, [0.6, 0.8])

    ball = PerturbationSource.uniform_ball()
    for t in range(50):
        assert np.linalg.norm(ball.sample(t, 3, rng)) <= 1.0 + 1e-12

    sine = PerturbationSource.sinusoidal(amplitude=2.0, omega=0.5, phase=[0.0, np.pi / 2])
    w0 = sine.sample(0, 2, rng)
    assert np.allclose(w0, [0.0, 2.0])


def test_quadratic_cost_validation():
    with pytest.raises(ConfigurationError):
        QuadraticCost([[1.0, 2.0], [0.0, 1.0]], np.eye(1))  # asymmetric
    with pytest.raises(ConfigurationError):
        QuadraticCost(-np.eye(2), np.eye(1))  # negative definite
    cost = QuadraticCost(2 * np.eye(2), np.eye(1), target=[1.0, 0.0])
    assert abs(cost.value([2.0, 0.0], [3.0]) - (2.0 + 9.0)) < 1e-14
    assert np.allclose(cost.grad_x([2.0, 0.0], [3.0]), [4.0, 0.0])
    assert np.allclose(cost.grad_u([2.0, 0.0], [3.0]), [6.0])
