"""System identification by the method of moments, plus identify-then-control.

The identification routine drives an opaque stepper with i.i.d. Rademacher
controls and estimates the control-response moments ``G_j ~ A^j B`` as
empirical correlations between later states and earlier excitations:
spacing the correlation anchors ``k + 1`` steps apart keeps the moment
blocks independent, and averaging over ``T0`` anchors gives the usual
``1/sqrt(T0)`` concentration.  Stacking the moments into block matrices
``C0 = [G_0 .. G_{k-1}]`` and ``C1 = [G_1 .. G_k]`` turns recovery of the
dynamics matrix into one least-squares solve, ``A_hat = C1 C0^+``, exact
whenever ``C0`` has full row rank.

:func:`identify_then_control` spends an exploration budget of
``T0 (k+1) + 1`` state observations with ``T0 = ceil(T^(2/3))``, recovers
``(A_hat, B_hat)``, and runs a disturbance-action gradient controller
designed on the identified pair against the real system for the remaining
steps; model error is absorbed into the recovered perturbations.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, EvaluationError
from .harness import (
    RegretReport,
    best_dac_in_hindsight,
    component_seed,
    dac_rollout_costs,
)
from .lds_core import LinearSystem, PerturbationSource, QuadraticCost, spectral_radius
from .online_control import GPCController
from .optimal_control import dare_solve

__all__ = [
    "BlackBoxSystem",
    "ExcitationRecord",
    "MomentEstimates",
    "IdentifiedSystem",
    "excite_and_record",
    "estimate_moments",
    "recover_AB",
    "identification_summary",
    "control_with_model",
    "identify_then_control",
    "exploration_length",
]

#: Smallest-singular-value threshold below which the excitation block
#: matrix is treated as rank-deficient (weak controllability signal).
SIGMA_MIN_THRESHOLD = 1e-6


class BlackBoxSystem:
    """Opaque stepper around a linear system with its own noise stream.

    Identification code may use only :meth:`read_state`,
    :meth:`apply_control`, and the dimension properties.  The recorded
    histories and :meth:`reveal_system` exist for evaluation and reporting
    (hindsight comparators, error-to-truth diagnostics), never for the
    learner.

    Parameters
    ----------
    system : LinearSystem
        The hidden dynamics.
    perturbation : PerturbationSource, optional
        Disturbance process (default: none).
    seed : int
        Seeds the box's private disturbance stream.
    x0 : array_like, optional
        Initial state (default: origin).
    """

    def __init__(
        self,
        system: LinearSystem,
        perturbation: Optional[PerturbationSource] = None,
        seed: int = 0,
        x0: Optional[object] = None,
    ):
        self._system = system
        self._source = PerturbationSource.zero() if perturbation is None else perturbation
        self._rng = np.random.default_rng(component_seed(int(seed), "blackbox"))
        x = np.zeros(system.d_x) if x0 is None else np.asarray(x0, dtype=float).copy()
        if x.shape != (system.d_x,):
            raise ConfigurationError(
                f"x0 has shape {x.shape}, state dimension is {system.d_x}"
            )
        self._t = 0
        self._states = [x.copy()]
        self._controls: list = []
        self._ws: list = []

    @property
    def d_x(self) -> int:
        return self._system.d_x

    @property
    def d_u(self) -> int:
        return self._system.d_u

    @property
    def steps(self) -> int:
        """Number of controls applied so far."""
        return self._t

    def read_state(self) -> np.ndarray:
        """Current state (a copy)."""
        return self._states[-1].copy()

    def apply_control(self, u: object) -> None:
        """Advance one step under control ``u`` and the private noise."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.d_u,):
            raise ConfigurationError(
                f"control has shape {u.shape}, expected ({self.d_u},)"
            )
        A_t, B_t, _ = self._system.matrices(self._t)
        w = np.asarray(
            self._source.sample(self._t, self.d_x, self._rng), dtype=float
        )
        with np.errstate(over="ignore", invalid="ignore"):
            x_next = A_t @ self._states[-1] + B_t @ u + w
        if not np.all(np.isfinite(x_next)):
            raise EvaluationError(
                f"black box emitted a non-finite state at step {self._t}; aborting"
            )
        self._states.append(x_next)
        self._controls.append(u.copy())
        self._ws.append(w)
        self._t += 1

    # -- evaluation-side access (not for the learner) ----------------------

    def reveal_system(self) -> LinearSystem:
        """The hidden system, for reporting and comparators only."""
        return self._system

    @property
    def recorded_states(self) -> np.ndarray:
        """All visited states, shape ``(steps + 1, d_x)``."""
        return np.array(self._states)

    @property
    def recorded_controls(self) -> np.ndarray:
        """All applied controls, shape ``(steps, d_u)``."""
        if not self._controls:
            return np.zeros((0, self.d_u))
        return np.array(self._controls)

    @property
    def recorded_perturbations(self) -> np.ndarray:
        """All realized disturbances, shape ``(steps, d_x)``."""
        if not self._ws:
            return np.zeros((0, self.d_x))
        return np.array(self._ws)


@dataclass(frozen=True)
class ExcitationRecord:
    """States and Rademacher controls from one excitation run.

    ``states`` has one more row than ``controls``: the final row is the
    state observed after the last control.
    """

    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        controls = np.asarray(self.controls, dtype=float)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)
        if states.ndim != 2 or controls.ndim != 2:
            raise ConfigurationError("record arrays must be two-dimensional")
        if states.shape[0] != controls.shape[0] + 1:
            raise ConfigurationError(
                "a record needs exactly one more state than controls"
            )


@dataclass(frozen=True)
class MomentEstimates:
    """Estimated control-response moments ``G_j ~ A^j B`` for ``j = 0..k``."""

    k: int
    T0: int
    moments: np.ndarray  # (k + 1, d_x, d_u)

    def __post_init__(self):
        moments = np.asarray(self.moments, dtype=float)
        object.__setattr__(self, "moments", moments)
        if self.T0 < 1:
            raise ConfigurationError("T0 must be at least 1")
        if moments.ndim != 3 or moments.shape[0] != self.k + 1:
            raise ConfigurationError(
                f"moments must have shape (k + 1, d_x, d_u), got {moments.shape}"
            )
        if not np.all(np.isfinite(moments)):
            raise EvaluationError("moment estimates contain non-finite entries")


@dataclass(frozen=True)
class IdentifiedSystem:
    """Recovered dynamics pair with its recovery diagnostics.

    ``residual`` is the Frobenius norm of ``C1 - A_hat C0`` and
    ``sigma_min`` the smallest singular value of ``C0``.
    """

    A_hat: np.ndarray
    B_hat: np.ndarray
    residual: float
    sigma_min: float


def exploration_length(k: int, T0: int) -> int:
    """Number of control applications in an excitation run (one less than
    the number of recorded states)."""
    return int(T0) * (int(k) + 1)


def excite_and_record(
    box: BlackBoxSystem, k: int, T0: int, seed: int = 0
) -> ExcitationRecord:
    """Drive the box with i.i.d. Rademacher controls and record everything.

    Applies ``T0 (k+1)`` controls drawn uniformly from ``{-1, +1}^{d_u}``
    and records the ``T0 (k+1) + 1`` surrounding states.  Deterministic
    given ``seed`` and the box's own seed.

    Parameters
    ----------
    box : BlackBoxSystem
        Stepper exposing only state readout and control application.
    k : int
        Controllability index (number of lagged moments to support).
    T0 : int
        Number of correlation anchors, spaced ``k + 1`` steps apart.
    seed : int
        Seeds the excitation draw.

    Returns
    -------
    ExcitationRecord
    """
    k, T0 = int(k), int(T0)
    if k < 1:
        raise ConfigurationError("the controllability index k must be >= 1")
    if T0 < 1:
        raise ConfigurationError("T0 must be at least 1")
    rng = np.random.default_rng(seed)
    n = exploration_length(k, T0)
    states = np.zeros((n + 1, box.d_x))
    controls = np.zeros((n, box.d_u))
    states[0] = box.read_state()
    for t in range(n):
        eta = rng.integers(0, 2, size=box.d_u).astype(float) * 2.0 - 1.0
        controls[t] = eta
        box.apply_control(eta)
        states[t + 1] = box.read_state()
    return ExcitationRecord(states=states, controls=controls)


def estimate_moments(record: ExcitationRecord, k: int, T0: int) -> MomentEstimates:
    """Method-of-moments estimates of ``A^j B`` from an excitation record.

    ``G_j`` is the empirical correlation between the state ``j + 1`` steps
    after each anchor and the Rademacher control at the anchor::

        G_j = (1 / T0) * sum_t  x_{t (k+1) + j + 1}  eta_{t (k+1)}^T

    which is unbiased because controls at different steps are independent
    with identity second moment and independent of the disturbances.
    """
    k, T0 = int(k), int(T0)
    n = exploration_length(k, T0)
    if record.controls.shape[0] != n:
        raise ConfigurationError(
            f"record has {record.controls.shape[0]} controls; "
            f"k={k}, T0={T0} needs {n}"
        )
    d_x = record.states.shape[1]
    d_u = record.controls.shape[1]
    anchors = (k + 1) * np.arange(T0)
    eta = record.controls[anchors]
    moments = np.zeros((k + 1, d_x, d_u))
    for j in range(k + 1):
        moments[j] = record.states[anchors + j + 1].T @ eta / T0
    return MomentEstimates(k=k, T0=T0, moments=moments)


def recover_AB(
    estimates: MomentEstimates, sigma_threshold: float = SIGMA_MIN_THRESHOLD
) -> IdentifiedSystem:
    """Recover ``(A_hat, B_hat)`` from moment estimates by least squares.

    Stacks ``C0 = [G_0 .. G_{k-1}]`` and ``C1 = [G_1 .. G_k]`` and solves
    ``min_A ||C1 - A C0||_F`` through the normal equations with a
    pseudo-inverse, ``A_hat = C1 C0^T (C0 C0^T)^+``; ``B_hat = G_0``.
    Exact on noiseless moments whenever ``C0`` has full row rank.

    Warns when the smallest singular value of ``C0`` falls below
    ``sigma_threshold`` — the excitation barely reaches some state
    directions and the recovery is ill-posed.
    """
    k = int(estimates.k)
    if k < 1:
        raise ConfigurationError("recovery needs k >= 1 (two moment blocks)")
    G = estimates.moments
    C0 = np.concatenate(list(G[:k]), axis=1)
    C1 = np.concatenate(list(G[1 : k + 1]), axis=1)
    sigma_min = float(np.linalg.svd(C0, compute_uv=False)[-1])
    if sigma_min < sigma_threshold:
        warnings.warn(
            f"excitation block matrix is near rank-deficient "
            f"(smallest singular value {sigma_min:.3e} < {sigma_threshold:.1e}); "
            "recovered dynamics are unreliable",
            RuntimeWarning,
            stacklevel=2,
        )
    A_hat = C1 @ C0.T @ np.linalg.pinv(C0 @ C0.T)
    B_hat = G[0].copy()
    residual = float(np.linalg.norm(C1 - A_hat @ C0))
    return IdentifiedSystem(
        A_hat=A_hat, B_hat=B_hat, residual=residual, sigma_min=sigma_min
    )


def identification_summary(
    estimates: MomentEstimates,
    identified: IdentifiedSystem,
    true_system: Optional[LinearSystem] = None,
) -> dict:
    """Flat JSON-ready identification report.

    Always includes ``k``, ``T0``, the recovery residual, and the smallest
    singular value; with the true system available it adds per-moment
    errors ``||G_j - A^j B||_F`` and the dynamics/control matrix errors.
    """
    summary = {
        "k": int(estimates.k),
        "T0": int(estimates.T0),
        "residual": float(identified.residual),
        "sigma_min": float(identified.sigma_min),
    }
    if true_system is not None:
        A, B, _ = true_system.matrices(0)
        power = np.eye(true_system.d_x)
        for j in range(estimates.k + 1):
            truth = power @ B
            summary[f"moment_error_{j}"] = float(
                np.linalg.norm(estimates.moments[j] - truth)
            )
            power = A @ power
        summary["A_error"] = float(np.linalg.norm(identified.A_hat - A))
        summary["B_error"] = float(np.linalg.norm(identified.B_hat - B))
    return summary


def _ceil_two_thirds_power(T: int) -> int:
    """Exact integer ``ceil(T^(2/3))`` (smallest m with m^3 >= T^2)."""
    m = max(1, int(round((T * T) ** (1.0 / 3.0))))
    while m**3 < T * T:
        m += 1
    while m > 1 and (m - 1) ** 3 >= T * T:
        m -= 1
    return m


def _gain_for_identified(
    A_hat: np.ndarray, B_hat: np.ndarray, cost: object
) -> np.ndarray:
    """Stabilizing gain for the identified pair: the infinite-horizon
    quadratic gain when solvable, zero when the identified dynamics are
    already stable."""
    if isinstance(cost, QuadraticCost):
        try:
            return dare_solve(A_hat, B_hat, cost.Q, cost.R).K
        except (ConfigurationError, EvaluationError):
            pass
    if spectral_radius(A_hat) < 1.0 + 1e-12:
        return np.zeros((B_hat.shape[1], A_hat.shape[0]))
    raise EvaluationError(
        "identified dynamics are unstable and the quadratic gain is "
        "unsolvable; cannot run the exploitation phase"
    )


def control_with_model(
    box: BlackBoxSystem,
    A_model: object,
    B_model: object,
    n_steps: int,
    cost: object,
    K: Optional[object] = None,
    h: int = 5,
    radius: float = 10.0,
    step_size: Optional[float] = None,
    schedule: str = "sqrt",
    H_trunc: Optional[int] = None,
) -> np.ndarray:
    """Run a disturbance-action gradient controller designed on a model.

    The controller acts on the box's real states but recovers
    perturbations through ``(A_model, B_model)``, so any model error is
    treated as extra disturbance.  Returns the per-step costs actually
    incurred.  ``K`` defaults to the model's quadratic gain (zero for a
    stable model without one).
    """
    A_model = np.asarray(A_model, dtype=float)
    B_model = np.asarray(B_model, dtype=float)
    if K is None:
        K = _gain_for_identified(A_model, B_model, cost)
    controller = GPCController(
        d_x=box.d_x,
        d_u=box.d_u,
        K=K,
        h=int(h),
        radius=float(radius),
        step_size=step_size,
        schedule=schedule,
        horizon=int(n_steps),
        H_trunc=H_trunc,
    )
    out = np.zeros(int(n_steps))
    x = box.read_state()
    for s in range(int(n_steps)):
        u = controller.act(s, x)
        out[s] = cost.value(x, u)
        box.apply_control(u)
        x_next = box.read_state()
        controller.update(s, A_model, B_model, x_next, cost)
        x = x_next
    return out


def identify_then_control(
    box: BlackBoxSystem,
    T: int,
    cost: object,
    k: int = 1,
    h: int = 5,
    radius: float = 10.0,
    step_size: Optional[float] = None,
    schedule: str = "sqrt",
    H_trunc: Optional[int] = None,
    comparator_h: Optional[int] = None,
    seed: int = 0,
    sigma_threshold: float = SIGMA_MIN_THRESHOLD,
) -> RegretReport:
    """Explore with Rademacher controls, identify, then control.

    Splits a budget of ``T`` steps into an identification phase of
    ``T0 (k+1)`` steps with ``T0 = ceil(T^(2/3))`` and an exploitation
    phase running a disturbance-action gradient controller designed on the
    identified ``(A_hat, B_hat)``; the controller recovers perturbations
    through the identified model, so model error rides along as extra
    disturbance.  The report's comparator is the best fixed
    disturbance-action policy in hindsight on the *true* system, and its
    extras record the exploration/exploitation split and identification
    diagnostics.

    Raises
    ------
    ConfigurationError
        If the budget cannot fit the identification phase.
    EvaluationError
        If the excitation block matrix is numerically rank-deficient
        (below ``sigma_threshold``) — the pipeline aborts rather than
        control a bogus model.
    """
    start_time = time.perf_counter()
    T = int(T)
    T0 = _ceil_two_thirds_power(T)
    n_explore = exploration_length(k, T0)
    if n_explore >= T:
        raise ConfigurationError(
            f"budget T={T} cannot fit the identification phase "
            f"({n_explore} steps at T0={T0}, k={k})"
        )

    record = excite_and_record(box, k, T0, seed=component_seed(seed, "sysid"))
    estimates = estimate_moments(record, k, T0)
    identified = recover_AB(estimates, sigma_threshold=sigma_threshold)
    if identified.sigma_min < sigma_threshold:
        raise EvaluationError(
            "identification failed: smallest singular value "
            f"{identified.sigma_min:.3e} is below {sigma_threshold:.1e}; "
            "the system was not sufficiently excited"
        )
    A_hat, B_hat = identified.A_hat, identified.B_hat

    explore_costs = np.array(
        [
            cost.value(record.states[t], record.controls[t])
            for t in range(n_explore)
        ]
    )

    K_hat = _gain_for_identified(A_hat, B_hat, cost)
    n_exploit = T - n_explore
    exploit_costs = control_with_model(
        box,
        A_hat,
        B_hat,
        n_exploit,
        cost,
        K=K_hat,
        h=h,
        radius=radius,
        step_size=step_size,
        schedule=schedule,
        H_trunc=H_trunc,
    )

    truth = box.reveal_system()
    w_record = box.recorded_perturbations
    states = box.recorded_states
    Ms, _ = best_dac_in_hindsight(
        truth,
        cost,
        K_hat,
        w_record,
        h=int(h if comparator_h is None else comparator_h),
        x0=states[0],
    )
    comparator_costs = dac_rollout_costs(truth, cost, K_hat, Ms, w_record, states[0])

    costs = np.concatenate([explore_costs, exploit_costs])
    gamma = float(np.max(np.linalg.norm(w_record, axis=1))) if len(w_record) else 0.0
    extras = {
        "T0": int(T0),
        "k": int(k),
        "n_explore": int(n_explore),
        "exploration_cost": float(explore_costs.sum()),
        "exploitation_cost": float(exploit_costs.sum()),
    }
    extras.update(identification_summary(estimates, identified, truth))
    return RegretReport(
        controller="identify-then-control",
        comparator="best-dac",
        costs=costs,
        comparator_costs=comparator_costs,
        state_norms=np.linalg.norm(states[:T], axis=1),
        horizon=T,
        seed=int(seed),
        gamma=gamma,
        wall_clock=time.perf_counter() - start_time,
        extras=extras,
    )
