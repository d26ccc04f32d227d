"""Linear dynamical systems: representation, simulation, and diagnostics.

This module provides the dense-matrix building blocks used by the rest of
the package: the :class:`LinearSystem` container (time-invariant or
time-varying, optionally partially observed), perturbation sources, cost
functions, the simulation loop, and classical system diagnostics (spectral
radius, Lyapunov certificates, controllability, observability, and
numerical linearization of nonlinear dynamics).

Conventions
-----------
* Time is 0-based: a horizon-``T`` run visits steps ``t = 0, ..., T-1``.
* States evolve as ``x_{t+1} = A_t x_t + B_t u_t + w_t`` and observations
  are ``y_t = C_t x_t`` (identity when no ``C`` is given).
* The initial state defaults to the zero vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, EvaluationError

__all__ = [
    "LinearSystem",
    "PerturbationSource",
    "QuadraticCost",
    "CallableCost",
    "Trajectory",
    "step",
    "observe",
    "spectral_radius",
    "lyapunov_certificate",
    "controllability",
    "observability_rank",
    "linearize",
    "simulate",
]

#: Relative singular-value cutoff used for all numerical ranks.
RANK_TOL = 1e-9

#: Tolerance on the minimum eigenvalue when validating PSD cost matrices.
TOL_PSD = 1e-9

#: Default finite-difference step for Jacobian computation.
FD_STEP = 1e-5


def _as_matrix(M: object, name: str) -> np.ndarray:
    """Coerce to a 2-D float array, rejecting non-finite entries."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2:
        raise ConfigurationError(f"{name} must be a 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ConfigurationError(f"{name} contains non-finite entries")
    return A


def _as_vector(v: object, dim: int, name: str) -> np.ndarray:
    """Coerce to a 1-D float array of the given dimension."""
    x = np.atleast_1d(np.asarray(v, dtype=float))
    if x.ndim != 1 or x.shape[0] != dim:
        raise ConfigurationError(f"{name} must be a vector of dimension {dim}, got shape {x.shape}")
    return x


class LinearSystem:
    """A (possibly time-varying, possibly partially observed) linear system.

    The system evolves as ``x_{t+1} = A_t x_t + B_t u_t + w_t`` with
    observation ``y_t = C_t x_t``.  When no observation matrix is supplied
    the state itself is observed (``C = I``).

    Use :meth:`time_invariant` or :meth:`time_varying` to construct.

    Attributes
    ----------
    d_x, d_u, d_y : int
        State, control, and observation dimensions.
    """

    def __init__(
        self,
        d_x: int,
        d_u: int,
        d_y: int,
        A: Optional[np.ndarray] = None,
        B: Optional[np.ndarray] = None,
        C: Optional[np.ndarray] = None,
        provider: Optional[Callable[[int], tuple]] = None,
    ):
        self.d_x = int(d_x)
        self.d_u = int(d_u)
        self.d_y = int(d_y)
        self._A = A
        self._B = B
        self._C = C
        self._provider = provider
        if min(self.d_x, self.d_u, self.d_y) < 1:
            raise ConfigurationError("system dimensions must be positive")

    # -- constructors -------------------------------------------------

    @classmethod
    def time_invariant(
        cls,
        A: object,
        B: object,
        C: Optional[object] = None,
    ) -> "LinearSystem":
        """Build a fixed-matrix system from ``A`` (d_x×d_x), ``B`` (d_x×d_u),
        and optional ``C`` (d_y×d_x)."""
        A = _as_matrix(A, "A")
        B = _as_matrix(B, "B")
        d_x = A.shape[0]
        if A.shape != (d_x, d_x):
            raise ConfigurationError(f"A must be square, got {A.shape}")
        if B.shape[0] != d_x:
            raise ConfigurationError(f"B must have {d_x} rows, got {B.shape}")
        if C is None:
            return cls(d_x, B.shape[1], d_x, A=A, B=B, C=None)
        C = _as_matrix(C, "C")
        if C.shape[1] != d_x:
            raise ConfigurationError(f"C must have {d_x} columns, got {C.shape}")
        return cls(d_x, B.shape[1], C.shape[0], A=A, B=B, C=C)

    @classmethod
    def time_varying(
        cls,
        provider: Callable[[int], tuple],
        d_x: int,
        d_u: int,
        d_y: Optional[int] = None,
    ) -> "LinearSystem":
        """Build a time-varying system from ``provider(t)`` returning
        ``(A_t, B_t)`` or ``(A_t, B_t, C_t)``."""
        return cls(d_x, d_u, d_x if d_y is None else d_y, provider=provider)

    # -- accessors ----------------------------------------------------

    @property
    def partially_observed(self) -> bool:
        """True when an explicit observation matrix is in play."""
        if self._provider is not None:
            return self.d_y != self.d_x or len(self._provider(0)) > 2
        return self._C is not None

    def matrices(self, t: int) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        """Return ``(A_t, B_t, C_t)``; ``C_t`` is None for full observation."""
        if self._provider is None:
            return self._A, self._B, self._C
        out = self._provider(int(t))
        A = _as_matrix(out[0], f"A_{t}")
        B = _as_matrix(out[1], f"B_{t}")
        C = _as_matrix(out[2], f"C_{t}") if len(out) > 2 and out[2] is not None else None
        if A.shape != (self.d_x, self.d_x) or B.shape != (self.d_x, self.d_u):
            raise ConfigurationError(
                f"provider returned shapes A{A.shape}, B{B.shape} at t={t}; "
                f"expected A({self.d_x},{self.d_x}), B({self.d_x},{self.d_u})"
            )
        if C is not None and C.shape != (self.d_y, self.d_x):
            raise ConfigurationError(
                f"provider returned C{C.shape} at t={t}; expected ({self.d_y},{self.d_x})"
            )
        return A, B, C


def step(system: LinearSystem, x: object, u: object, w: object, t: int = 0) -> np.ndarray:
    """Advance one step: return ``A_t x + B_t u + w`` exactly.

    Parameters
    ----------
    system : LinearSystem
    x, u, w : array_like
        State (d_x), control (d_u), and perturbation (d_x) vectors.
    t : int
        Time index, used to query time-varying matrices.

    Returns
    -------
    numpy.ndarray
        The next state, shape (d_x,).
    """
    x = _as_vector(x, system.d_x, "x")
    u = _as_vector(u, system.d_u, "u")
    w = _as_vector(w, system.d_x, "w")
    A, B, _ = system.matrices(t)
    return A @ x + B @ u + w


def observe(system: LinearSystem, x: object, t: int = 0) -> np.ndarray:
    """Return the observation ``C_t x`` (the state itself when C is absent)."""
    x = _as_vector(x, system.d_x, "x")
    _, _, C = system.matrices(t)
    if C is None:
        return x.copy()
    return C @ x


# ---------------------------------------------------------------------------
# Perturbation sources
# ---------------------------------------------------------------------------


@dataclass
class PerturbationSource:
    """Generator of per-step perturbation vectors ``w_t``.

    Construct via the class methods :meth:`zero`, :meth:`gaussian`,
    :meth:`uniform_ball`, :meth:`sinusoidal`, :meth:`recorded`, or
    :meth:`constant`.  When ``clip_to_unit_ball`` is set, any emitted
    vector with norm exceeding 1 is rescaled to unit norm.
    """

    kind: str
    sigma: float = 1.0
    amplitude: float = 1.0
    omega: float = 1.0
    phase: Optional[np.ndarray] = None
    sequence: Optional[np.ndarray] = None
    vector: Optional[np.ndarray] = None
    clip_to_unit_ball: bool = False

    @classmethod
    def zero(cls) -> "PerturbationSource":
        """No perturbation: ``w_t = 0``."""
        return cls(kind="zero")

    @classmethod
    def gaussian(cls, sigma: float = 1.0, clip_to_unit_ball: bool = False) -> "PerturbationSource":
        """I.i.d. Gaussian coordinates with standard deviation ``sigma``."""
        return cls(kind="iid-gaussian", sigma=float(sigma), clip_to_unit_ball=clip_to_unit_ball)

    @classmethod
    def uniform_ball(cls) -> "PerturbationSource":
        """I.i.d. draws uniform over the unit Euclidean ball."""
        return cls(kind="iid-uniform-ball")

    @classmethod
    def sinusoidal(
        cls,
        amplitude: float = 1.0,
        omega: float = 1.0,
        phase: Optional[object] = None,
        clip_to_unit_ball: bool = False,
    ) -> "PerturbationSource":
        """Deterministic ``w_t[i] = amplitude * sin(omega * t + phase[i])``.

        ``phase`` defaults to zeros (all coordinates in phase)."""
        ph = None if phase is None else np.asarray(phase, dtype=float)
        return cls(
            kind="sinusoidal",
            amplitude=float(amplitude),
            omega=float(omega),
            phase=ph,
            clip_to_unit_ball=clip_to_unit_ball,
        )

    @classmethod
    def recorded(cls, sequence: object, clip_to_unit_ball: bool = False) -> "PerturbationSource":
        """Replay a stored (T, d_x) array of perturbations."""
        seq = np.asarray(sequence, dtype=float)
        if seq.ndim != 2:
            raise ConfigurationError("recorded sequence must be a (T, d_x) array")
        return cls(kind="recorded", sequence=seq, clip_to_unit_ball=clip_to_unit_ball)

    @classmethod
    def constant(cls, vector: object, clip_to_unit_ball: bool = False) -> "PerturbationSource":
        """The same vector at every step."""
        return cls(
            kind="constant",
            vector=np.asarray(vector, dtype=float),
            clip_to_unit_ball=clip_to_unit_ball,
        )

    def sample(self, t: int, dim: int, rng: np.random.Generator) -> np.ndarray:
        """Emit ``w_t`` of dimension ``dim`` (drawing from ``rng`` if random)."""
        if self.kind == "zero":
            w = np.zeros(dim)
        elif self.kind == "iid-gaussian":
            w = self.sigma * rng.standard_normal(dim)
        elif self.kind == "iid-uniform-ball":
            direction = rng.standard_normal(dim)
            direction /= max(np.linalg.norm(direction), 1e-300)
            w = direction * rng.random() ** (1.0 / dim)
        elif self.kind == "sinusoidal":
            phase = np.zeros(dim) if self.phase is None else _as_vector(self.phase, dim, "phase")
            w = self.amplitude * np.sin(self.omega * t + phase)
        elif self.kind == "recorded":
            if t >= self.sequence.shape[0]:
                raise ConfigurationError(
                    f"recorded perturbation sequence of length {self.sequence.shape[0]} "
                    f"exhausted at t={t}"
                )
            w = _as_vector(self.sequence[t], dim, f"recorded w_{t}")
        elif self.kind == "constant":
            w = _as_vector(self.vector, dim, "constant w")
        else:
            raise ConfigurationError(f"unknown perturbation kind {self.kind!r}")
        if self.clip_to_unit_ball:
            norm = np.linalg.norm(w)
            if norm > 1.0:
                w = w / norm
        return w


# ---------------------------------------------------------------------------
# Cost functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticCost:
    """Quadratic cost ``c(x, u) = (x - x*)' Q (x - x*) + u' R u``.

    ``Q`` and ``R`` must be symmetric with eigenvalues above ``-TOL_PSD``.
    ``target`` is the state target ``x*`` (defaults to the origin).
    """

    Q: np.ndarray
    R: np.ndarray
    target: Optional[np.ndarray] = None

    def __post_init__(self):
        Q = _as_matrix(self.Q, "Q")
        R = _as_matrix(self.R, "R")
        for name, M in (("Q", Q), ("R", R)):
            if M.shape[0] != M.shape[1]:
                raise ConfigurationError(f"{name} must be square")
            if np.max(np.abs(M - M.T)) > 1e-12 * max(1.0, np.max(np.abs(M))):
                raise ConfigurationError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() < -TOL_PSD:
                raise ConfigurationError(f"{name} must be positive semidefinite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if self.target is not None:
            object.__setattr__(self, "target", _as_vector(self.target, Q.shape[0], "target"))

    def _dx(self, x: np.ndarray) -> np.ndarray:
        return x if self.target is None else x - self.target

    def value(self, x: np.ndarray, u: np.ndarray) -> float:
        """Evaluate the cost at (x, u)."""
        dx = self._dx(np.asarray(x, dtype=float))
        u = np.asarray(u, dtype=float)
        return float(dx @ self.Q @ dx + u @ self.R @ u)

    def grad_x(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Gradient of the cost with respect to x."""
        return 2.0 * (self.Q @ self._dx(np.asarray(x, dtype=float)))

    def grad_u(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Gradient of the cost with respect to u."""
        return 2.0 * (self.R @ np.asarray(u, dtype=float))


@dataclass(frozen=True)
class CallableCost:
    """Pluggable convex cost: a value function with its two gradients."""

    fn: Callable[[np.ndarray, np.ndarray], float]
    gx: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gu: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def value(self, x: np.ndarray, u: np.ndarray) -> float:
        return float(self.fn(x, u))

    def grad_x(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.asarray(self.gx(x, u), dtype=float)

    def grad_u(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.asarray(self.gu(x, u), dtype=float)


# ---------------------------------------------------------------------------
# Trajectories and simulation
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Recorded run of a system: states, controls, perturbations,
    observations, and per-step costs.

    ``states`` has shape (T+1, d_x) — it includes the final state — while
    the other arrays have T rows.
    """

    states: np.ndarray
    controls: np.ndarray
    perturbations: np.ndarray
    observations: np.ndarray
    costs: np.ndarray

    @property
    def horizon(self) -> int:
        """Number of steps T."""
        return self.controls.shape[0]

    @property
    def total_cost(self) -> float:
        """Sum of per-step costs."""
        return float(self.costs.sum())

    @property
    def gamma(self) -> float:
        """Empirical state bound ``max_t ||x_t||`` over the whole run."""
        return float(np.linalg.norm(self.states, axis=1).max())

    def replay_residual(self, system: LinearSystem) -> float:
        """Max norm of ``x_{t+1} - (A_t x_t + B_t u_t + w_t)`` over the run.

        Zero (up to float equality) certifies that the stored data replays
        the dynamics exactly.
        """
        worst = 0.0
        for t in range(self.horizon):
            x_next = step(system, self.states[t], self.controls[t], self.perturbations[t], t)
            worst = max(worst, float(np.linalg.norm(self.states[t + 1] - x_next)))
        return worst


def simulate(
    system: LinearSystem,
    controller: Callable[[int, np.ndarray, np.ndarray], object],
    perturbations: PerturbationSource,
    cost: object,
    T: int,
    seed: int = 0,
    x0: Optional[object] = None,
) -> Trajectory:
    """Run the system for ``T`` steps under a controller callback.

    Parameters
    ----------
    system : LinearSystem
    controller : callable
        ``controller(t, x_t, y_t) -> u_t``.  Stateful controllers recover
        perturbations themselves from consecutive states.
    perturbations : PerturbationSource
    cost : cost object
        Anything exposing ``value(x, u)``.
    T : int
        Horizon (number of steps).
    seed : int
        Seeds the perturbation stream; runs are bit-reproducible.
    x0 : array_like, optional
        Initial state (defaults to zero).

    Returns
    -------
    Trajectory

    Raises
    ------
    EvaluationError
        If the controller emits a non-finite control.
    """
    if T < 0:
        raise ConfigurationError("horizon T must be nonnegative")
    rng = np.random.default_rng(seed)
    x = np.zeros(system.d_x) if x0 is None else _as_vector(x0, system.d_x, "x0")

    states = np.zeros((T + 1, system.d_x))
    controls = np.zeros((T, system.d_u))
    noises = np.zeros((T, system.d_x))
    observations = np.zeros((T, system.d_y))
    costs = np.zeros(T)

    states[0] = x
    for t in range(T):
        y = observe(system, x, t)
        u = _as_vector(controller(t, x.copy(), y.copy()), system.d_u, f"u_{t}")
        if not np.all(np.isfinite(u)):
            raise EvaluationError(f"controller emitted a non-finite control at t={t}: {u}")
        w = perturbations.sample(t, system.d_x, rng)
        c = cost.value(x, u)
        if not np.isfinite(c):
            raise EvaluationError(f"cost is non-finite at t={t}")
        x = step(system, x, u, w, t)
        states[t + 1] = x
        controls[t] = u
        noises[t] = w
        observations[t] = y
        costs[t] = c
    return Trajectory(states, controls, noises, observations, costs)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def spectral_radius(M: object, tol: float = 0.0) -> float:
    """Largest eigenvalue modulus of a square matrix.

    Complex eigenvalues are handled; ``tol`` is accepted for interface
    symmetry (the dense eigensolver is already accurate to machine
    precision).
    """
    A = _as_matrix(M, "M")
    if A.shape[0] != A.shape[1]:
        raise ConfigurationError(f"spectral_radius needs a square matrix, got {A.shape}")
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def lyapunov_certificate(
    A: object,
    tol: float = 1e-12,
    max_terms: int = 100_000,
) -> Optional[np.ndarray]:
    """Certificate of stability: ``P = sum_t (A^t)' A^t`` when ρ(A) < 1.

    Returns ``None`` when the spectral radius is at least 1 or the series
    fails to converge within ``max_terms``.  A returned ``P`` satisfies
    ``P ⪰ I`` and ``P − A'PA ≻ 0`` up to truncation error ~``tol``.
    """
    A = _as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise ConfigurationError("A must be square")
    if spectral_radius(A) >= 1.0:
        return None
    d = A.shape[0]
    P = np.eye(d)
    power = np.eye(d)
    for _ in range(max_terms):
        power = power @ A
        term = power.T @ power
        norm = np.linalg.norm(term)
        if norm < tol:
            return P
        P = P + term
    return None


def controllability(A: object, B: object, r: int) -> tuple[np.ndarray, int, float]:
    """Kalman controllability matrix, its rank, and the pseudoinverse norm.

    Returns ``(K_r, rank, kappa)`` where ``K_r = [B, AB, ..., A^{r-1}B]``,
    the rank counts singular values above ``RANK_TOL × σ_max``, and
    ``kappa = ||K_r^+||`` (infinite when K_r = 0) quantifies strong
    controllability.
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if r < 1:
        raise ConfigurationError("horizon r must be at least 1")
    blocks = []
    current = B
    for _ in range(r):
        blocks.append(current)
        current = A @ current
    K_r = np.hstack(blocks)
    sigma = np.linalg.svd(K_r, compute_uv=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        return K_r, 0, float("inf")
    cutoff = RANK_TOL * sigma[0]
    significant = sigma[sigma > cutoff]
    rank = int(significant.size)
    kappa = float(1.0 / significant[-1]) if rank > 0 else float("inf")
    return K_r, rank, kappa


def observability_rank(A: object, C: object) -> int:
    """Rank of the stacked observability matrix ``[C; CA; ...; CA^{d_x-1}]``."""
    A = _as_matrix(A, "A")
    C = _as_matrix(C, "C")
    d = A.shape[0]
    blocks = []
    current = C
    for _ in range(d):
        blocks.append(current)
        current = current @ A
    O = np.vstack(blocks)
    sigma = np.linalg.svd(O, compute_uv=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.sum(sigma > RANK_TOL * sigma[0]))


def linearize(
    f: Callable[[np.ndarray, np.ndarray], object],
    x_bar: object,
    u_bar: object,
    fd_step: float = FD_STEP,
) -> tuple[np.ndarray, np.ndarray]:
    """Central-finite-difference Jacobians of ``f(x, u)`` at ``(x̄, ū)``.

    Returns ``(A, B)`` with ``A[i, j] = ∂f_i/∂x_j`` and
    ``B[i, j] = ∂f_i/∂u_j``.

    Raises
    ------
    EvaluationError
        If ``f`` produces NaN or infinity at any probe point.
    """
    x_bar = np.atleast_1d(np.asarray(x_bar, dtype=float))
    u_bar = np.atleast_1d(np.asarray(u_bar, dtype=float))

    def evaluate(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        out = np.atleast_1d(np.asarray(f(x, u), dtype=float))
        if not np.all(np.isfinite(out)):
            raise EvaluationError("dynamics evaluator returned non-finite values")
        return out

    d_x = x_bar.shape[0]
    d_u = u_bar.shape[0]
    f0 = evaluate(x_bar, u_bar)
    A = np.zeros((f0.shape[0], d_x))
    B = np.zeros((f0.shape[0], d_u))
    for j in range(d_x):
        e = np.zeros(d_x)
        e[j] = fd_step
        A[:, j] = (evaluate(x_bar + e, u_bar) - evaluate(x_bar - e, u_bar)) / (2.0 * fd_step)
    for j in range(d_u):
        e = np.zeros(d_u)
        e[j] = fd_step
        B[:, j] = (evaluate(x_bar, u_bar + e) - evaluate(x_bar, u_bar - e)) / (2.0 * fd_step)
    return A, B
