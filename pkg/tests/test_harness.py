"""Tests for the experiment harness: scenario presets, offline comparators,
regret reports, artifact serialization, and the experiment driver.

Comparator optimizers are checked against independent oracles: exact
quadratic fits and dense grids for scalar problems, brute-force rollouts
for the counterfactual cost accounting, and stationarity probes at the
returned optimum.
"""

import os
import tempfile
import zlib

import numpy as np
import pytest

from nscontrol.errors import ConfigurationError
from nscontrol.harness import (
    CSV_COLUMNS,
    RegretReport,
    ScenarioConfig,
    best_dac_in_hindsight,
    best_drc_in_hindsight,
    best_linear_in_hindsight,
    component_seed,
    config_from_preset,
    dac_rollout_costs,
    drc_rollout_costs,
    generate_perturbations,
    linear_rollout_costs,
    load_config,
    report_summary,
    run_experiment,
    scenario_presets,
    write_report_csv,
)
from nscontrol.lds_core import LinearSystem, PerturbationSource, QuadraticCost
from nscontrol.optimal_control import dare_solve
from nscontrol.serialize import (
    load_matrix,
    read_csv,
    read_json_summary,
    save_matrix,
    write_csv,
    write_json_summary,
)


def spectral_radius(A):
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(A, dtype=float)))))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def test_matrix_roundtrip_exact():
    rng = np.random.default_rng(7)
    M = rng.standard_normal((3, 4))
    M[0, 0] = 1e-300
    M[1, 1] = -1e300
    M[2, 2] = 1.0 / 3.0
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "m.txt")
        save_matrix(M, path)
        back = load_matrix(path)
    assert back.shape == (3, 4)
    assert np.array_equal(back, M)


def test_matrix_file_errors():
    with tempfile.TemporaryDirectory() as tmp:
        try:
            load_matrix(os.path.join(tmp, "missing.txt"))
            assert False, "expected ConfigurationError"
        except ConfigurationError:
            pass
        bad = os.path.join(tmp, "bad.txt")
        with open(bad, "w") as fh:
            fh.write("2 2\n1.0 2.0\n3.0 oops\n")
        try:
            load_matrix(bad)
            assert False, "expected ConfigurationError"
        except ConfigurationError:
            pass
        short = os.path.join(tmp, "short.txt")
        with open(short, "w") as fh:
            fh.write("3 2\n1.0 2.0\n3.0 4.0\n")
        try:
            load_matrix(short)
            assert False, "expected ConfigurationError"
        except ConfigurationError:
            pass


def test_csv_roundtrip_exact():
    rng = np.random.default_rng(11)
    rows = rng.standard_normal((5, 3))
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "t.csv")
        write_csv(path, ["a", "b", "c"], rows)
        header, data = read_csv(path)
    assert header == ["a", "b", "c"]
    assert np.array_equal(data, rows)


def test_json_summary_flat_and_sorted():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "s.json")
        write_json_summary(path, {"zeta": 1.5, "alpha": np.float64(2.0), "n": 3})
        back = read_json_summary(path)
        assert back == {"zeta": 1.5, "alpha": 2.0, "n": 3}
        with open(path) as fh:
            text = fh.read()
        assert text.index('"alpha"') < text.index('"n"') < text.index('"zeta"')
        try:
            write_json_summary(path, {"nested": {"x": 1}})
            assert False, "expected ConfigurationError"
        except ConfigurationError:
            pass


# ---------------------------------------------------------------------------
# Seed streams and scenario presets
# ---------------------------------------------------------------------------


def test_component_seed_hand_value():
    master = 123456789
    tag = "perturbation"
    expected = (master ^ zlib.crc32(tag.encode())) & 0xFFFFFFFFFFFFFFFF
    assert component_seed(master, tag) == expected
    assert component_seed(master, "simulate") != component_seed(master, "perturbation")
    assert component_seed(master, tag) == component_seed(master, tag)


def test_scenario_preset_catalog():
    presets = scenario_presets()
    assert set(presets) == {
        "double-integrator",
        "scalar-0.9",
        "b747",
        "pendulum",
        "ventilator",
        "sir",
    }
    for bp in presets.values():
        d_x, d_u = bp.system.d_x, bp.system.d_u
        A0, B0, _ = bp.system.matrices(0)
        assert A0.shape == (d_x, d_x)
        assert B0.shape == (d_x, d_u)
        if bp.x0 is not None:
            assert bp.x0.shape == (d_x,)
        if bp.noise_embedding is not None:
            assert bp.noise_embedding.shape[0] == d_x


def test_double_integrator_matrices():
    bp = scenario_presets()["double-integrator"]
    A, B, _ = bp.system.matrices(0)
    assert np.array_equal(A, [[1.0, 0.1], [0.0, 1.0]])
    assert np.array_equal(B, [[0.0], [1.0]])
    assert np.array_equal(bp.x0, [1.0, 0.0])


def test_pendulum_upright_linearization():
    # Linearizing theta' = theta + dt*omega, omega' = omega + dt*(u - g sin
    # theta) at the upright point [pi, 0]: d(-g sin)/dtheta = -g cos(pi) =
    # +g, so the gravity entry is +dt*g = +0.49 (destabilizing), the
    # opposite sign from the hanging-down expansion.
    bp = scenario_presets()["pendulum"]
    A, B, _ = bp.system.matrices(0)
    assert np.allclose(A, [[1.0, 0.05], [0.49, 1.0]], atol=1e-6)
    assert np.allclose(B, [[0.0], [0.05]], atol=1e-9)
    assert spectral_radius(A) > 1.0


def test_sir_disease_free_linearization():
    # At the disease-free anchor (S, I, R) = (1, 0, 0) the infected
    # compartment decouples: I' = (1 + beta - gamma) I with beta = 0.3,
    # gamma = 0.5, and vaccination enters S with coefficient -alpha.
    bp = scenario_presets()["sir"]
    A, B, _ = bp.system.matrices(0)
    assert abs(A[1, 1] - 0.8) < 1e-6
    assert abs(A[0, 1] + 0.3) < 1e-6
    assert abs(A[2, 1] - 0.5) < 1e-6
    assert abs(A[1, 0]) < 1e-6 and abs(A[2, 0] ) < 1e-6
    assert abs(B[0, 0] + 0.1) < 1e-9
    assert 0.8 in set(np.round(np.linalg.eigvals(A).real, 6))


def test_jet_blueprint_consistency():
    bp = scenario_presets()["b747"]
    A, B, _ = bp.system.matrices(0)
    assert spectral_radius(A) < 1.0
    H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, -1.0, 0.0, 7.74]])
    assert np.allclose(bp.cost.Q, H.T @ H)
    assert np.array_equal(bp.cost.R, np.diag([0.0, 1.0]))
    assert np.array_equal(bp.noise_embedding, A[:2, :].T)
    assert np.min(np.linalg.eigvalsh(bp.cost.Q)) >= -1e-12


def test_ventilator_blueprint():
    # Pressure map p(v) = 2 + v^(-1/3) + v^(5/3) linearized at v = 1 has
    # slope -1/3 + 5/3 = 4/3.
    bp = scenario_presets()["ventilator"]
    A, B, C = bp.system.matrices(0)
    assert np.allclose(A, [[1.0]], atol=1e-9)
    assert np.allclose(B, [[0.1]], atol=1e-9)
    assert np.allclose(C, [[4.0 / 3.0]], atol=1e-6)
    assert bp.cost_on == "observation"
    y, u = np.array([1.0]), np.array([0.5])
    assert abs(bp.cost.value(y, u) - 0.5) < 1e-12
    assert np.allclose(bp.cost.grad_x(y, u), [1.0])
    assert np.allclose(bp.cost.grad_u(y, u), [0.0])


def test_generate_perturbations_determinism_and_embedding():
    source = PerturbationSource.gaussian(sigma=0.5)
    w1 = generate_perturbations(source, 20, 3, seed=42)
    w2 = generate_perturbations(source, 20, 3, seed=42)
    w3 = generate_perturbations(source, 20, 3, seed=43)
    assert np.array_equal(w1, w2)
    assert not np.array_equal(w1, w3)
    assert w1.shape == (20, 3)

    embedding = np.array([[1.0], [0.0]])
    w = generate_perturbations(source, 15, 2, seed=1, embedding=embedding)
    assert w.shape == (15, 2)
    assert np.all(w[:, 1] == 0.0)
    assert np.any(w[:, 0] != 0.0)

    try:
        generate_perturbations(source, 5, 3, seed=0, embedding=embedding)
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass


# ---------------------------------------------------------------------------
# Counterfactual rollouts
# ---------------------------------------------------------------------------


def test_dac_rollout_hand_computed():
    # Scalar A = 0.5, B = 1, K = 0, single action block M_1 = 2 acting on
    # the previous perturbation, w = (1, 0, 0), x0 = 0:
    #   t=0: u = 2*w_{-1} = 0, cost 0,            x1 = 1
    #   t=1: u = 2*w_0  = 2, cost 1 + 4 = 5,      x2 = 0.5 + 2 = 2.5
    #   t=2: u = 2*w_1  = 0, cost 2.5^2 = 6.25
    system = LinearSystem.time_invariant([[0.5]], [[1.0]])
    cost = QuadraticCost(Q=np.eye(1), R=np.eye(1))
    w = np.array([[1.0], [0.0], [0.0]])
    out = dac_rollout_costs(system, cost, [[0.0]], [[[2.0]]], w)
    assert np.allclose(out, [0.0, 5.0, 6.25], atol=1e-12)


def test_dac_rollout_matches_bruteforce():
    rng = np.random.default_rng(5)
    A = 0.4 * rng.standard_normal((2, 2))
    B = rng.standard_normal((2, 1))
    system = LinearSystem.time_invariant(A, B)
    cost = QuadraticCost(Q=np.eye(2), R=2.0 * np.eye(1))
    T, h = 40, 3
    w = rng.standard_normal((T, 2))
    K = 0.2 * rng.standard_normal((1, 2))
    Ms = rng.standard_normal((h, 1, 2))
    x0 = rng.standard_normal(2)

    out = dac_rollout_costs(system, cost, K, Ms, w, x0)

    x = x0.copy()
    expected = np.zeros(T)
    for t in range(T):
        u = K @ x
        for i in range(h):
            if t - 1 - i >= 0:
                u = u + Ms[i] @ w[t - 1 - i]
        expected[t] = cost.value(x, u)
        x = A @ x + B @ u + w[t]
    assert np.allclose(out, expected, atol=1e-10)


def test_drc_rollout_matches_bruteforce():
    rng = np.random.default_rng(9)
    A = 0.4 * rng.standard_normal((3, 3))
    B = rng.standard_normal((3, 2))
    C = rng.standard_normal((2, 3))
    system = LinearSystem.time_invariant(A, B, C)
    cost = QuadraticCost(Q=np.eye(2), R=np.eye(2))
    T, h = 30, 2
    w = rng.standard_normal((T, 3))
    Ms = 0.3 * rng.standard_normal((h + 1, 2, 2))
    x0 = rng.standard_normal(3)

    out = drc_rollout_costs(system, cost, Ms, w, x0)

    # Zero-control observations first, then the actual closed loop.
    ynat = np.zeros((T, 2))
    x = x0.copy()
    for t in range(T):
        ynat[t] = C @ x
        x = A @ x + w[t]
    expected = np.zeros(T)
    x = x0.copy()
    for t in range(T):
        u = np.zeros(2)
        for i in range(h + 1):
            if t - i >= 0:
                u = u + Ms[i] @ ynat[t - i]
        expected[t] = cost.value(C @ x, u)
        x = A @ x + B @ u + w[t]
    assert np.allclose(out, expected, atol=1e-10)


def test_linear_rollout_is_dac_with_zero_blocks():
    rng = np.random.default_rng(3)
    system = LinearSystem.time_invariant([[0.9]], [[1.0]])
    cost = QuadraticCost(Q=np.eye(1), R=np.eye(1))
    w = rng.standard_normal((25, 1))
    K = np.array([[-0.4]])
    a = linear_rollout_costs(system, cost, K, w)
    b = dac_rollout_costs(system, cost, K, np.zeros((4, 1, 1)), w)
    assert np.allclose(a, b, atol=1e-14)


# ---------------------------------------------------------------------------
# Offline comparators
# ---------------------------------------------------------------------------


def test_best_dac_matches_quadratic_oracle_scalar():
    # With one scalar action block the counterfactual total cost J(M) is a
    # quadratic polynomial in M, so three evaluations determine it exactly
    # and the analytic vertex is an independent oracle.
    system = LinearSystem.time_invariant([[0.9]], [[1.0]])
    cost = QuadraticCost(Q=np.eye(1), R=np.eye(1))
    T = 120
    w = np.ones((T, 1))
    K = [[0.0]]

    def total(m):
        return float(
            dac_rollout_costs(system, cost, K, np.array([[[m]]]), w).sum()
        )

    j_neg, j_zero, j_pos = total(-1.0), total(0.0), total(1.0)
    a = (j_pos + j_neg) / 2.0 - j_zero
    b = (j_pos - j_neg) / 2.0
    # Verify J really is quadratic by predicting a fourth point.
    assert abs(total(2.0) - (4 * a + 2 * b + j_zero)) < 1e-8 * (1 + j_zero)
    m_star = -b / (2 * a)
    j_star = j_zero - b * b / (4 * a)

    Ms, value = best_dac_in_hindsight(system, cost, K, w, h=1)
    assert Ms.shape == (1, 1, 1)
    assert abs(value - j_star) < 2e-3
    assert abs(float(Ms[0, 0, 0]) - m_star) < 2e-3
    # Coarse grid as a belt-and-braces bound.
    grid = np.arange(-2.0, 2.0, 0.01)
    assert value <= min(total(m) for m in grid) + 2e-3


def test_best_dac_zero_noise_yields_zero_blocks():
    bp = scenario_presets()["double-integrator"]
    A, B, _ = bp.system.matrices(0)
    K = dare_solve(A, B, bp.cost.Q, bp.cost.R).K
    w = np.zeros((60, 2))
    Ms, value = best_dac_in_hindsight(bp.system, bp.cost, K, w, h=3, x0=bp.x0)
    assert np.linalg.norm(Ms) <= 1e-8
    ref = linear_rollout_costs(bp.system, bp.cost, K, w, bp.x0).sum()
    assert abs(value - ref) < 1e-10


def test_best_dac_stationary_at_optimum():
    rng = np.random.default_rng(17)
    system = LinearSystem.time_invariant([[0.8, 0.1], [0.0, 0.7]], [[0.0], [1.0]])
    cost = QuadraticCost(Q=np.eye(2), R=np.eye(1))
    w = 0.5 * rng.standard_normal((80, 2))
    K = np.zeros((1, 2))
    Ms, value = best_dac_in_hindsight(system, cost, K, w, h=2)
    total = dac_rollout_costs(system, cost, K, Ms, w).sum()
    assert abs(total - value) < 1e-8 * (1 + abs(value))
    for _ in range(8):
        direction = rng.standard_normal(Ms.shape)
        direction /= np.linalg.norm(direction)
        for sign in (+1.0, -1.0):
            probe = Ms + sign * 1e-4 * direction
            probed = dac_rollout_costs(system, cost, K, probe, w).sum()
            assert probed >= value - 1e-6


def test_best_dac_contains_best_linear():
    system = LinearSystem.time_invariant([[0.9]], [[1.0]])
    cost = QuadraticCost(Q=np.eye(1), R=np.eye(1))
    w = generate_perturbations(PerturbationSource.sinusoidal(1.0, 1.0), 150, 1, seed=0)
    K_star, j_lin = best_linear_in_hindsight(system, cost, w)
    _, j_dac = best_dac_in_hindsight(system, cost, K_star, w, h=3)
    assert j_dac <= j_lin + 1e-6


def test_best_drc_consistency_and_stationarity():
    rng = np.random.default_rng(23)
    system = LinearSystem.time_invariant([[0.5]], [[1.0]], [[2.0]])
    cost = QuadraticCost(Q=np.eye(1), R=np.eye(1))
    w = generate_perturbations(PerturbationSource.sinusoidal(1.0, 0.7), 100, 1, seed=2)
    Ms, value = best_drc_in_hindsight(system, cost, w, h=3)
    assert Ms.shape == (4, 1, 1)
    total = drc_rollout_costs(system, cost, Ms, w).sum()
    assert abs(total - value) < 1e-8 * (1 + abs(value))
    for _ in range(8):
        direction = rng.standard_normal(Ms.shape)
        direction /= np.linalg.norm(direction)
        for sign in (+1.0, -1.0):
            probe = Ms + sign * 1e-4 * direction
            probed = drc_rollout_costs(system, cost, probe, w).sum()
            assert probed >= value - 1e-6


def test_best_drc_zero_noise_is_zero():
    system = LinearSystem.time_invariant([[0.5]], [[1.0]])
    cost = QuadraticCost(Q=np.eye(1), R=np.eye(1))
    w = np.zeros((40, 1))
    Ms, value = best_drc_in_hindsight(system, cost, w, h=2)
    assert np.linalg.norm(Ms) <= 1e-8
    assert abs(value) < 1e-12


def test_best_linear_matches_grid_scalar():
    system = LinearSystem.time_invariant([[0.9]], [[1.0]])
    cost = QuadraticCost(Q=np.eye(1), R=np.eye(1))
    w = generate_perturbations(PerturbationSource.sinusoidal(1.0, 1.0), 100, 1, seed=4)
    K_star, value = best_linear_in_hindsight(system, cost, w)

    grid = np.arange(-2.0, 0.0, 2e-3)
    grid_values = [
        linear_rollout_costs(system, cost, [[k]], w).sum() for k in grid
    ]
    j_grid = min(grid_values)
    assert value <= j_grid + 1e-3
    assert abs(value - j_grid) <= 1e-3 * (1.0 + abs(j_grid))


def test_best_linear_zero_when_control_has_no_effect():
    system = LinearSystem.time_invariant([[0.5]], [[0.0]])
    cost = QuadraticCost(Q=np.eye(1), R=np.eye(1))
    w = generate_perturbations(PerturbationSource.gaussian(1.0), 60, 1, seed=6)
    K_star, value = best_linear_in_hindsight(system, cost, w)
    assert np.linalg.norm(K_star) <= 1e-6
    ref = linear_rollout_costs(system, cost, [[0.0]], w).sum()
    assert abs(value - ref) < 1e-10


def test_comparator_input_validation():
    system = LinearSystem.time_invariant([[0.5]], [[1.0]])
    cost = QuadraticCost(Q=np.eye(1), R=np.eye(1))
    try:
        best_dac_in_hindsight(system, cost, [[0.0]], np.zeros((0, 1)), h=1)
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass
    try:
        best_dac_in_hindsight(system, cost, [[0.0, 0.0]], np.ones((5, 1)), h=1)
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass


# ---------------------------------------------------------------------------
# Regret reports and artifacts
# ---------------------------------------------------------------------------


def make_report(T=10, seed=0):
    rng = np.random.default_rng(seed)
    return RegretReport(
        controller="gpc",
        comparator="best-dac",
        costs=rng.uniform(0.0, 2.0, T),
        comparator_costs=rng.uniform(0.0, 2.0, T),
        state_norms=rng.uniform(0.0, 1.0, T),
        horizon=T,
        seed=seed,
        gamma=0.1,
        wall_clock=0.5,
    )


def test_report_shape_validation():
    try:
        RegretReport(
            controller="x",
            comparator="y",
            costs=np.zeros(5),
            comparator_costs=np.zeros(4),
            state_norms=np.zeros(5),
            horizon=5,
            seed=0,
            gamma=0.0,
            wall_clock=0.0,
        )
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass


def test_report_regret_identity():
    report = make_report(T=17, seed=3)
    cum = np.cumsum(report.costs)
    cumc = np.cumsum(report.comparator_costs)
    steps = np.arange(1, 18, dtype=float)
    assert np.array_equal(report.avg_regret, (cum - cumc) / steps)
    assert report.final_avg_regret == report.avg_regret[-1]
    assert report.total_cost == float(report.costs.sum())


def test_report_csv_roundtrip_exact():
    report = make_report(T=12, seed=5)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "report.csv")
        write_report_csv(report, path)
        header, data = read_csv(path)
    assert header == CSV_COLUMNS
    assert np.array_equal(data[:, 0], np.arange(1, 13, dtype=float))
    assert np.array_equal(data[:, 1], report.costs)
    assert np.array_equal(data[:, 2], report.cum_cost)
    assert np.array_equal(data[:, 3], report.cum_comparator_cost)
    assert np.array_equal(data[:, 4], report.avg_regret)
    assert np.array_equal(data[:, 5], report.state_norms)
    # The regret identity survives the text round trip bit-for-bit.
    assert np.array_equal(data[:, 4], (data[:, 2] - data[:, 3]) / data[:, 0])


def test_report_csv_byte_identical():
    report = make_report(T=9, seed=8)
    with tempfile.TemporaryDirectory() as tmp:
        p1, p2 = os.path.join(tmp, "a.csv"), os.path.join(tmp, "b.csv")
        write_report_csv(report, p1)
        write_report_csv(report, p2)
        with open(p1, "rb") as fh:
            b1 = fh.read()
        with open(p2, "rb") as fh:
            b2 = fh.read()
    assert b1 == b2


def test_report_summary_includes_extras():
    report = make_report(T=4, seed=1)
    report.extras["exploration_cost"] = 1.25
    summary = report_summary(report)
    assert summary["controller"] == "gpc"
    assert summary["horizon"] == 4
    assert summary["exploration_cost"] == 1.25
    assert abs(summary["final_avg_regret"] - report.final_avg_regret) == 0.0


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------


def test_run_experiment_zero_controller_zero_noise():
    # Double integrator from x0 = (1, 0) with no control and no noise stays
    # put, so every per-step cost is exactly 1 and the zero comparator ties.
    with tempfile.TemporaryDirectory() as tmp:
        config = config_from_preset(
            "double-integrator",
            controller={"kind": "zero"},
            horizon=25,
            seed=0,
            comparator={"kind": "zero"},
            out_dir=tmp,
        )
        report = run_experiment(config)
        assert np.all(report.costs == 1.0)
        assert np.all(report.comparator_costs == 1.0)
        assert np.all(report.avg_regret == 0.0)
        assert os.path.exists(os.path.join(tmp, "report.csv"))
        summary = read_json_summary(os.path.join(tmp, "summary.json"))
        assert summary["controller"] == "zero"
        assert summary["total_cost"] == 25.0


def test_run_experiment_gpc_deterministic_artifacts():
    with tempfile.TemporaryDirectory() as tmp:
        d1, d2 = os.path.join(tmp, "r1"), os.path.join(tmp, "r2")
        kwargs = dict(
            controller={"kind": "gpc", "h": 4, "radius": 2.0, "step_size": 0.05},
            horizon=150,
            seed=12,
        )
        r1 = run_experiment(config_from_preset("scalar-0.9", out_dir=d1, **kwargs))
        r2 = run_experiment(config_from_preset("scalar-0.9", out_dir=d2, **kwargs))
        assert r1.controller == "gpc"
        assert r1.comparator == "best-dac"
        assert r1.horizon == 150
        assert np.array_equal(r1.costs, r2.costs)
        assert np.array_equal(r1.comparator_costs, r2.comparator_costs)
        with open(os.path.join(d1, "report.csv"), "rb") as fh:
            b1 = fh.read()
        with open(os.path.join(d2, "report.csv"), "rb") as fh:
            b2 = fh.read()
        assert b1 == b2


def test_run_experiment_grc_requires_stable_dynamics():
    for preset in ("double-integrator", "ventilator"):
        try:
            run_experiment(
                config_from_preset(preset, controller={"kind": "grc"}, horizon=30)
            )
            assert False, "expected ConfigurationError"
        except ConfigurationError:
            pass


def test_run_experiment_observation_cost():
    # Ventilator costs live on (pressure deviation, flow) pairs: at t = 0
    # the volume deviation is 0.5, the pressure deviation is (4/3)*0.5, and
    # the zero controller pays its square.
    config = config_from_preset(
        "ventilator",
        controller={"kind": "zero"},
        horizon=40,
        seed=0,
        comparator={"kind": "best-drc", "h": 3},
    )
    report = run_experiment(config)
    y0 = (4.0 / 3.0) * 0.5
    assert abs(report.costs[0] - y0 * y0) < 1e-9
    assert report.comparator_total_cost <= report.total_cost + 1e-9

    try:
        run_experiment(
            config_from_preset(
                "ventilator",
                controller={"kind": "zero"},
                horizon=10,
                comparator={"kind": "best-dac"},
            )
        )
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass


def test_configuration_error_paths():
    try:
        config_from_preset("no-such-preset", controller={"kind": "zero"}, horizon=10)
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass
    try:
        run_experiment(
            config_from_preset("scalar-0.9", controller={"kind": "pid"}, horizon=10)
        )
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass
    try:
        run_experiment(
            config_from_preset(
                "scalar-0.9",
                controller={"kind": "gpc", "h": 2, "bogus": 1.0},
                horizon=10,
            )
        )
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass
    try:
        run_experiment(
            config_from_preset(
                "scalar-0.9",
                controller={"kind": "zero"},
                horizon=10,
                comparator={"kind": "oracle"},
            )
        )
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass
    try:
        config_from_preset("scalar-0.9", controller={"kind": "zero"}, horizon=0)
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass
    try:
        ScenarioConfig(
            name="x",
            system=LinearSystem.time_invariant([[1.0]], [[1.0]]),
            cost=QuadraticCost(Q=np.eye(1), R=np.eye(1)),
            perturbation=PerturbationSource.zero(),
            controller={"kind": "zero"},
            horizon=5,
            x0=np.zeros(3),
        )
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass


def test_load_config_preset_with_overrides():
    text = """
[system]
preset = scalar-0.9

[controller]
kind = gpc
h = 4
radius = 2.0
step_size = 0.05

[run]
horizon = 60
seed = 3
"""
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "run.cfg")
        with open(path, "w") as fh:
            fh.write(text)
        config = load_config(path)
        assert config.horizon == 60
        assert config.seed == 3
        assert config.controller["kind"] == "gpc"
        assert config.controller["h"] == 4
        report = run_experiment(config)
        assert report.horizon == 60

        config2 = load_config(path, overrides={"horizon": 25, "seed": 9})
        assert config2.horizon == 25
        assert config2.seed == 9

    try:
        load_config(os.path.join(tmp, "gone.cfg"))
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass


def test_load_config_inline_system():
    with tempfile.TemporaryDirectory() as tmp:
        save_matrix(np.array([[0.5, 0.0], [0.0, 0.5]]), os.path.join(tmp, "A.txt"))
        save_matrix(np.array([[1.0], [0.0]]), os.path.join(tmp, "B.txt"))
        save_matrix(np.eye(2), os.path.join(tmp, "Q.txt"))
        save_matrix(np.eye(1), os.path.join(tmp, "R.txt"))
        save_matrix(np.array([[1.0, 0.0], [0.0, 1.0]]), os.path.join(tmp, "w.txt"))
        text = """
[system]
a = A.txt
b = B.txt

[cost]
q = Q.txt
r = R.txt

[perturbation]
kind = recorded
sequence = w.txt

[controller]
kind = zero

[run]
horizon = 2
seed = 0
out = artifacts
"""
        path = os.path.join(tmp, "inline.cfg")
        with open(path, "w") as fh:
            fh.write(text)
        config = load_config(path)
        A, B, _ = config.system.matrices(0)
        assert np.array_equal(A, [[0.5, 0.0], [0.0, 0.5]])
        assert np.array_equal(B, [[1.0], [0.0]])
        report = run_experiment(config)
        # x0 = 0: first cost 0, then x1 = w0 = e1 with unit quadratic cost.
        assert report.costs[0] == 0.0
        assert abs(report.costs[1] - 1.0) < 1e-12
        assert os.path.exists(os.path.join(tmp, "artifacts", "report.csv"))


def test_gpc_average_regret_improves_with_horizon():
    # Single-seed spot check of the regret trend; the multi-seed version
    # across presets and noise types lives in the acceptance suite.
    reports = {}
    for T in (400, 1600):
        config = config_from_preset(
            "scalar-0.9",
            controller={"kind": "gpc", "h": 8, "radius": 2.0, "step_size": 0.05},
            horizon=T,
            seed=1,
        )
        reports[T] = run_experiment(config)
    assert reports[1600].final_avg_regret < reports[400].final_avg_regret
