"""Online controllers with regret guarantees: projected online gradient
descent (OGD) and the two controllers built on it.

* :class:`GPCController` — gradient perturbation controller for fully
  observed systems with known (possibly time-varying) dynamics and a
  stabilizing gain: ``u_t = K_t x_t + sum_i M_i^t w_{t-i}``, with the
  ``M_i`` learned by OGD on counterfactual losses.
* :class:`GRCController` — gradient response controller for partially
  observed *stable* systems: ``u_t = sum_i M_i^t ynat_{t-i}`` over
  nature's-y signals, no stabilizing gain needed.

Both construct the per-step loss ``l_t(M) = c_t(state-or-observation(M),
u_t(M))`` where the counterfactual signals are the ones that would have
occurred had the current parameters been played from the beginning of
time; both compute gradients analytically (the counterfactuals are linear
in ``M``, so the loss is convex) and keep incremental caches of the
transition products so a step costs ``O(h * H * d^2)`` instead of
re-rolling history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError, EvaluationError
from .lds_core import _as_matrix, spectral_radius
from .policies import NaturesYTracker

__all__ = [
    "OGDState",
    "ogd_update",
    "counterfactual_state",
    "GPCController",
    "GRCController",
    "gpc_step",
    "grc_step",
    "gpc_runner",
    "grc_runner",
]

#: Truncation tolerance entering the default cache-depth formula.
EPS_TRUNC = 1e-6

#: Floor on the measured decay rate (guards the depth formula's ceiling).
DELTA_MIN = 1e-3


# ---------------------------------------------------------------------------
# Online gradient descent
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OGDState:
    """Iterate of projected online gradient descent.

    ``point`` is the flat parameter vector; the feasible set is the
    Euclidean ball of the given ``radius`` (None = unconstrained).  With
    ``schedule="sqrt"`` the step is ``step_scale / sqrt(t)``; with
    ``"constant"`` it is ``step_scale`` every round.
    """

    point: np.ndarray
    radius: Optional[float] = None
    step_scale: float = 0.1
    schedule: str = "sqrt"
    t: int = 0

    def __post_init__(self):
        if self.schedule not in ("sqrt", "constant"):
            raise ConfigurationError(f"unknown OGD schedule {self.schedule!r}")
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float).ravel())

    def step_size(self, t: int) -> float:
        """Step size used at (1-based) iteration t."""
        if self.schedule == "sqrt":
            return self.step_scale / math.sqrt(t)
        return self.step_scale


def ogd_update(state: OGDState, gradient: object) -> OGDState:
    """One projected-gradient step: move against the gradient, project
    back onto the ball, and advance the iteration counter.

    Raises
    ------
    EvaluationError
        If the gradient contains NaN or infinity (update rejected).
    ConfigurationError
        On dimension mismatch.
    """
    g = np.asarray(gradient, dtype=float).ravel()
    if g.shape != state.point.shape:
        raise ConfigurationError(
            f"gradient dimension {g.shape[0]} does not match point dimension "
            f"{state.point.shape[0]}"
        )
    if not np.all(np.isfinite(g)):
        raise EvaluationError("OGD update rejected: non-finite gradient")
    t_next = state.t + 1
    eta = state.step_size(t_next)
    y = state.point - eta * g
    if state.radius is not None:
        norm = float(np.linalg.norm(y))
        if norm > state.radius:
            y = y * (state.radius / norm)
    return replace(state, point=y, t=t_next)


# ---------------------------------------------------------------------------
# Counterfactual state (reference implementation)
# ---------------------------------------------------------------------------


def counterfactual_state(
    Ms: Sequence[object],
    w_history: Sequence[object],
    A_closed_history: Sequence[object],
    B_history: Sequence[object],
    H_trunc: int,
) -> np.ndarray:
    """State that playing the fixed parameters ``M_{1:h}`` from the
    beginning of time would have produced, truncated to the last
    ``H_trunc`` steps.

    All histories are ordered most recent first: ``w_history[0]`` is
    ``w_{t-1}``, ``A_closed_history[0]`` is the closed-loop matrix
    ``A_{t-1} + B_{t-1} K_{t-1}``, and ``B_history[0]`` is ``B_{t-1}``.
    Perturbations older than the supplied history are zero.  The result is
    exact (equal to the untruncated sum) when ``H_trunc`` is at least the
    current time index.

    This is the plain recursion-from-zero reference; the controllers keep
    incrementally cached product stacks that must agree with it.
    """
    Ms = [_as_matrix(M, f"M_{j + 1}") for j, M in enumerate(Ms)]
    if A_closed_history:
        d_x = _as_matrix(A_closed_history[0], "A~").shape[0]
    elif w_history:
        d_x = np.asarray(w_history[0]).shape[0]
    else:
        raise ConfigurationError("counterfactual_state needs at least one history entry")
    depth = min(int(H_trunc), len(A_closed_history))
    if depth <= 0:
        return np.zeros(d_x)

    def w_at(m: int) -> np.ndarray:
        if 0 <= m < len(w_history):
            return np.asarray(w_history[m], dtype=float)
        return np.zeros(d_x)

    z = np.zeros(d_x)
    # March forward from t-depth to t-1; m is the most-recent-first index.
    for m in range(depth - 1, -1, -1):
        A_m = _as_matrix(A_closed_history[m], "A~")
        B_m = _as_matrix(B_history[m], "B")
        drive = np.zeros(B_m.shape[1])
        for j, M in enumerate(Ms, start=1):
            drive = drive + M @ w_at(m + j)
        z = A_m @ z + B_m @ drive + w_at(m)
    return z


def _measure_decay(closed: np.ndarray, n: int = 50) -> float:
    """Decay rate of ``||closed^n||`` used to size the truncation depth."""
    norm = float(np.linalg.norm(np.linalg.matrix_power(closed, n), 2))
    if norm <= 0.0:
        return 0.999
    rate = 1.0 - norm ** (1.0 / n)
    return float(min(max(rate, DELTA_MIN), 0.999))


def _default_depth(h: int, delta_hat: float, eps_trunc: float = EPS_TRUNC) -> int:
    return 2 * h + int(math.ceil(math.log(1.0 / eps_trunc) / delta_hat))


def _resolve_cost(cost: object, t: int) -> object:
    """Costs may be a fixed object or a provider ``t -> cost object``."""
    if hasattr(cost, "value"):
        return cost
    if callable(cost):
        return cost(t)
    raise ConfigurationError("cost must expose value/grad_x/grad_u or be a provider")


# ---------------------------------------------------------------------------
# GPC
# ---------------------------------------------------------------------------


class GPCController:
    """Gradient perturbation controller.

    Per step ``t``: play ``u_t = K_t x_t + sum_{i=1}^{h} M_i^t w_{t-i}``,
    observe ``x_{t+1}``, recover ``w_t = x_{t+1} - A_t x_t - B_t u_t``,
    build the counterfactual loss ``l_t(M) = c_t(x_t(M), u_t(M))``, and
    take one projected OGD step on it.

    Parameters
    ----------
    d_x, d_u : int
        State and control dimensions.
    K : array_like or callable
        Stabilizing gain (``u = Kx`` convention) or provider ``t -> K_t``.
    h : int
        Number of learned disturbance-action matrices.
    radius : float
        Frobenius-ball projection radius on the stacked parameters.
    step_size : float, optional
        Scale ``c`` of the step schedule (``c/sqrt(t)`` or, with the
        constant schedule, ``c/sqrt(T)``).  Defaults to ``radius``.
    schedule : {"sqrt", "constant"}
    horizon : int, optional
        Required for the constant schedule (sets ``eta = c/sqrt(T)``).
    H_trunc : int, optional
        Cache depth for the counterfactual sums; by default
        ``2h + ceil(log(1/eps_trunc)/delta_hat)`` with the decay rate
        measured from powers of the first closed-loop matrix.
    telemetry_sink : callable, optional
        Receives one dict per update (also kept in ``self.telemetry``).
    """

    def __init__(
        self,
        d_x: int,
        d_u: int,
        K: Union[object, Callable[[int], object]],
        h: int = 5,
        radius: float = 10.0,
        step_size: Optional[float] = None,
        schedule: str = "sqrt",
        horizon: Optional[int] = None,
        H_trunc: Optional[int] = None,
        eps_trunc: float = EPS_TRUNC,
        telemetry_sink: Optional[Callable[[dict], None]] = None,
    ):
        self.d_x, self.d_u, self.h = int(d_x), int(d_u), int(h)
        if self.h < 1:
            raise ConfigurationError("GPC needs a window h >= 1")
        self._K_provider = K if callable(K) else None
        self._K_fixed = None if callable(K) else _as_matrix(K, "K")
        self.Ms = np.zeros((self.h, self.d_u, self.d_x))
        scale = float(step_size) if step_size is not None else float(radius)
        if schedule == "constant":
            if horizon is None:
                raise ConfigurationError("constant schedule needs the horizon T")
            scale = scale / math.sqrt(horizon)
        self.ogd = OGDState(
            point=self.Ms.ravel(), radius=float(radius), step_scale=scale, schedule=schedule
        )
        self._H_override = None if H_trunc is None else int(H_trunc)
        self._eps_trunc = float(eps_trunc)
        self.H_trunc: Optional[int] = self._H_override
        self.delta_hat: Optional[float] = None
        self.telemetry: list = []
        self._sink = telemetry_sink
        # Rolling caches, all ordered most recent first.
        self._W: Optional[np.ndarray] = None  # (H+h, d_x): w_{t-1}, w_{t-2}, ...
        self._PB: Optional[np.ndarray] = None  # (H, d_x, d_u): prod(A~) B_{t-k}
        self._Pw: Optional[np.ndarray] = None  # (H, d_x):      prod(A~) w_{t-k}
        self._last: Optional[tuple] = None  # (t, x_t, u_t, K_t)

    def gain(self, t: int) -> np.ndarray:
        return (
            self._K_fixed
            if self._K_fixed is not None
            else _as_matrix(self._K_provider(t), f"K_{t}")
        )

    def _ensure_caches(self, closed: np.ndarray) -> None:
        if self._W is not None:
            return
        self.delta_hat = _measure_decay(closed)
        if self.H_trunc is None:
            self.H_trunc = _default_depth(self.h, self.delta_hat, self._eps_trunc)
        self._W = np.zeros((self.H_trunc + self.h, self.d_x))
        self._PB = np.zeros((self.H_trunc, self.d_x, self.d_u))
        self._Pw = np.zeros((self.H_trunc, self.d_x))

    def act(self, t: int, x: object) -> np.ndarray:
        """Emit ``u_t`` from the current parameters and perturbation window."""
        x = np.asarray(x, dtype=float)
        K_t = self.gain(t)
        u = K_t @ x
        if self._W is not None:
            u = u + np.einsum("juy,jy->u", self.Ms, self._W[: self.h])
        self._last = (t, x.copy(), u.copy(), K_t)
        return u

    def counterfactuals(self) -> tuple[np.ndarray, np.ndarray]:
        """Current-step counterfactual pair ``(x_t(M), u_t(M))`` for the
        parameters now held (cache-based fast path)."""
        if self._last is None:
            raise ConfigurationError("call act() before querying counterfactuals")
        _, _, _, K_t = self._last
        W, PB, Pw = self._W, self._PB, self._Pw
        if W is None:
            x_cf = np.zeros(self.d_x)
            return x_cf, K_t @ x_cf
        H = PB.shape[0]
        U = np.zeros((H, self.d_u))
        for j in range(1, self.h + 1):
            U += W[j : j + H] @ self.Ms[j - 1].T
        x_cf = np.einsum("kxu,ku->x", PB, U) + Pw.sum(axis=0)
        u_cf = K_t @ x_cf + np.einsum("juy,jy->u", self.Ms, W[: self.h])
        return x_cf, u_cf

    def loss_and_gradient(self, cost: object) -> tuple[float, np.ndarray]:
        """Counterfactual loss ``l_t(M)`` at the held parameters and its
        analytic gradient with respect to the parameter stack.  Valid
        between act() and update()."""
        if self._last is None:
            raise ConfigurationError("call act() before querying the loss")
        t, _, _, K_t = self._last
        cost_t = _resolve_cost(cost, t)
        x_cf, u_cf = self.counterfactuals()
        loss = float(cost_t.value(x_cf, u_cf))
        if self._W is None:
            return loss, np.zeros_like(self.Ms)
        gx = np.asarray(cost_t.grad_x(x_cf, u_cf), dtype=float)
        gu = np.asarray(cost_t.grad_u(x_cf, u_cf), dtype=float)
        v = gx + K_t.T @ gu
        H = self._PB.shape[0]
        S = np.einsum("kxu,x->ku", self._PB, v)
        grad = np.zeros_like(self.Ms)
        for j in range(1, self.h + 1):
            grad[j - 1] = S.T @ self._W[j : j + H] + np.outer(gu, self._W[j - 1])
        return loss, grad

    def update(self, t: int, A_t: object, B_t: object, x_next: object, cost: object) -> np.ndarray:
        """Recover ``w_t``, take the OGD step on ``l_t``, advance caches.

        Returns the recovered perturbation ``w_t``.
        """
        if self._last is None or self._last[0] != t:
            raise ConfigurationError("update(t) must follow act(t)")
        A_t = _as_matrix(A_t, "A_t")
        B_t = _as_matrix(B_t, "B_t")
        x_next = np.asarray(x_next, dtype=float)
        _, x, u, K_t = self._last
        w_t = x_next - A_t @ x - B_t @ u
        if not np.all(np.isfinite(w_t)):
            raise EvaluationError(f"recovered perturbation is non-finite at t={t}; aborting run")
        closed = A_t + B_t @ K_t
        self._ensure_caches(closed)

        cost_t = _resolve_cost(cost, t)
        loss, grad = self.loss_and_gradient(cost_t)

        previous = self.ogd.point.copy()
        self.ogd = ogd_update(self.ogd, grad.ravel())
        eta = self.ogd.step_size(self.ogd.t)
        moved = float(np.linalg.norm(self.ogd.point - previous))
        assert moved <= eta * float(np.linalg.norm(grad)) + 1e-12, "OGD iterate moved too far"
        if self.ogd.radius is not None:
            assert np.linalg.norm(self.ogd.point) <= self.ogd.radius + 1e-9
        self.Ms = self.ogd.point.reshape(self.Ms.shape)

        row = {
            "t": t,
            "cost": float(cost_t.value(x, u)),
            "loss": loss,
            "M_norm": float(np.linalg.norm(self.Ms)),
            "w_norm": float(np.linalg.norm(w_t)),
            "grad_norm": float(np.linalg.norm(grad)),
        }
        self.telemetry.append(row)
        if self._sink is not None:
            self._sink(row)

        # Advance caches to represent time t+1.
        self._PB = np.concatenate(
            [B_t[None], np.einsum("xy,kyu->kxu", closed, self._PB[:-1])], axis=0
        )
        self._Pw = np.concatenate([w_t[None], self._Pw[:-1] @ closed.T], axis=0)
        self._W = np.concatenate([w_t[None], self._W[:-1]], axis=0)
        self._last = None
        return w_t


def gpc_step(
    controller: GPCController,
    A_t: object,
    B_t: object,
    x_next: object,
    cost: object,
    t: Optional[int] = None,
) -> np.ndarray:
    """Spec-level GPC step: recover the perturbation from the observed next
    state, construct the counterfactual loss, and update the parameters.
    ``act`` must have been called for this step.  Returns the updated
    parameter stack."""
    if t is None:
        t = controller._last[0] if controller._last else 0
    controller.update(t, A_t, B_t, x_next, cost)
    return controller.Ms


def gpc_runner(
    controller: GPCController, system: object, cost: object
) -> Callable[[int, np.ndarray, np.ndarray], np.ndarray]:
    """Adapter: run a GPC controller inside :func:`nscontrol.lds_core.simulate`.

    The update for step ``t-1`` happens at the start of the call for step
    ``t`` (when ``x_t`` has become observable).
    """

    def callback(t: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if t > 0 and controller._last is not None:
            A_prev, B_prev, _ = system.matrices(t - 1)
            controller.update(t - 1, A_prev, B_prev, x, cost)
        return controller.act(t, x)

    return callback


# ---------------------------------------------------------------------------
# GRC
# ---------------------------------------------------------------------------


class GRCController:
    """Gradient response controller for stable, partially observed systems.

    Per step ``t``: compute nature's y ``ynat_t = y_t - C_t z_t``, play
    ``u_t = sum_{i=0}^{h} M_i^t ynat_{t-i}``, reconstruct the
    counterfactual observation ``y_t(M) = ynat_t + C_t sum_i F_i u_{t-i}(M)``
    through the cached Markov operators ``F_i``, and take one projected
    OGD step on ``l_t(M) = c_t(y_t(M), u_t(M))``.

    The cost is evaluated on (observation, control) pairs.
    """

    def __init__(
        self,
        d_x: int,
        d_u: int,
        d_y: int,
        h: int = 5,
        radius: float = 10.0,
        step_size: Optional[float] = None,
        schedule: str = "sqrt",
        horizon: Optional[int] = None,
        H_trunc: Optional[int] = None,
        eps_trunc: float = EPS_TRUNC,
        telemetry_sink: Optional[Callable[[dict], None]] = None,
    ):
        self.d_x, self.d_u, self.d_y, self.h = int(d_x), int(d_u), int(d_y), int(h)
        self.Ms = np.zeros((self.h + 1, self.d_u, self.d_y))
        scale = float(step_size) if step_size is not None else float(radius)
        if schedule == "constant":
            if horizon is None:
                raise ConfigurationError("constant schedule needs the horizon T")
            scale = scale / math.sqrt(horizon)
        self.ogd = OGDState(
            point=self.Ms.ravel(), radius=float(radius), step_scale=scale, schedule=schedule
        )
        self._H_override = None if H_trunc is None else int(H_trunc)
        self._eps_trunc = float(eps_trunc)
        self.H_trunc: Optional[int] = self._H_override
        self.delta_hat: Optional[float] = None
        self.tracker = NaturesYTracker(self.d_x)
        self.telemetry: list = []
        self._sink = telemetry_sink
        self._Y: Optional[np.ndarray] = None  # (H+h+1, d_y): ynat_t, ynat_{t-1}, ...
        self._F: Optional[np.ndarray] = None  # (H, d_x, d_u): prod(A) B_{t-i}
        self._last: Optional[tuple] = None  # (t, ynat_t, u_t)

    def _ensure_caches(self, A: np.ndarray) -> None:
        if self._Y is not None:
            return
        self.delta_hat = _measure_decay(A)
        if self.H_trunc is None:
            self.H_trunc = _default_depth(self.h, self.delta_hat, self._eps_trunc)
        self._Y = np.zeros((self.H_trunc + self.h + 1, self.d_y))
        self._F = np.zeros((self.H_trunc, self.d_x, self.d_u))

    def act(self, t: int, y: object, C_t: Optional[object] = None) -> np.ndarray:
        """Compute ``ynat_t`` from the observation and emit ``u_t``."""
        ynat = self.tracker.observe(np.asarray(y, dtype=float), C_t)
        if self._Y is not None:
            self._Y = np.concatenate([ynat[None], self._Y[:-1]], axis=0)
            u = np.einsum("juy,jy->u", self.Ms, self._Y[: self.h + 1])
        else:
            # First step: the window is [ynat_t, 0, 0, ...].
            u = self.Ms[0] @ ynat
        self._last = (t, ynat, u.copy())
        return u

    def counterfactuals(self, C_t: Optional[object] = None) -> tuple[np.ndarray, np.ndarray]:
        """Counterfactual pair ``(y_t(M), u_t(M))`` for the held parameters,
        valid between act() and update()."""
        if self._last is None:
            raise ConfigurationError("call act() before querying counterfactuals")
        _, ynat, _ = self._last
        if self._Y is None:
            return ynat.copy(), self.Ms[0] @ ynat
        C = np.eye(self.d_x) if C_t is None else _as_matrix(C_t, "C_t")
        H = self._F.shape[0]
        U = np.zeros((H, self.d_u))
        for j in range(self.h + 1):
            U += self._Y[j + 1 : j + 1 + H] @ self.Ms[j].T
        y_cf = ynat + np.einsum("yx,kxu,ku->y", C, self._F, U)
        u_cf = np.einsum("juy,jy->u", self.Ms, self._Y[: self.h + 1])
        return y_cf, u_cf

    def loss_and_gradient(
        self, cost: object, C_t: Optional[object] = None
    ) -> tuple[float, np.ndarray]:
        """Counterfactual loss ``l_t(M)`` at the held parameters and its
        analytic gradient.  Valid between act() and update()."""
        if self._last is None:
            raise ConfigurationError("call act() before querying the loss")
        t = self._last[0]
        cost_t = _resolve_cost(cost, t)
        y_cf, u_cf = self.counterfactuals(C_t)
        loss = float(cost_t.value(y_cf, u_cf))
        if self._Y is None:
            gu = np.asarray(cost_t.grad_u(y_cf, u_cf), dtype=float)
            grad = np.zeros_like(self.Ms)
            grad[0] = np.outer(gu, self._last[1])
            return loss, grad
        C = np.eye(self.d_x) if C_t is None else _as_matrix(C_t, "C_t")
        gy = np.asarray(cost_t.grad_x(y_cf, u_cf), dtype=float)
        gu = np.asarray(cost_t.grad_u(y_cf, u_cf), dtype=float)
        H = self._F.shape[0]
        G = np.einsum("yx,kxu->kyu", C, self._F)
        S = np.einsum("kyu,y->ku", G, gy)
        grad = np.zeros_like(self.Ms)
        for j in range(self.h + 1):
            grad[j] = S.T @ self._Y[j + 1 : j + 1 + H] + np.outer(gu, self._Y[j])
        return loss, grad

    def update(self, t: int, A_t: object, B_t: object, C_t: Optional[object], cost: object) -> None:
        """Advance nature's-y, take the OGD step on ``l_t``, refresh caches."""
        if self._last is None or self._last[0] != t:
            raise ConfigurationError("update(t) must follow act(t)")
        A_t = _as_matrix(A_t, "A_t")
        B_t = _as_matrix(B_t, "B_t")
        C = np.eye(self.d_x) if C_t is None else _as_matrix(C_t, "C_t")
        if spectral_radius(A_t) >= 1.0:
            raise ConfigurationError(
                "GRC requires a stable system: spectral radius of A_t is >= 1"
            )
        first = self._Y is None
        self._ensure_caches(A_t)
        _, ynat, u_played = self._last
        if first:
            self._Y = np.concatenate([ynat[None], self._Y[:-1]], axis=0)

        cost_t = _resolve_cost(cost, t)
        loss, grad = self.loss_and_gradient(cost_t, C)

        previous = self.ogd.point.copy()
        self.ogd = ogd_update(self.ogd, grad.ravel())
        eta = self.ogd.step_size(self.ogd.t)
        assert (
            float(np.linalg.norm(self.ogd.point - previous))
            <= eta * float(np.linalg.norm(grad)) + 1e-12
        )
        if self.ogd.radius is not None:
            assert np.linalg.norm(self.ogd.point) <= self.ogd.radius + 1e-9
        self.Ms = self.ogd.point.reshape(self.Ms.shape)

        row = {
            "t": t,
            "loss": loss,
            "M_norm": float(np.linalg.norm(self.Ms)),
            "ynat_norm": float(np.linalg.norm(ynat)),
            "grad_norm": float(np.linalg.norm(grad)),
        }
        self.telemetry.append(row)
        if self._sink is not None:
            self._sink(row)

        self.tracker.advance(A_t, B_t, u_played)
        self._F = np.concatenate(
            [B_t[None], np.einsum("xy,kyu->kxu", A_t, self._F[:-1])], axis=0
        )
        self._last = None


def grc_step(
    controller: GRCController,
    A_t: object,
    B_t: object,
    C_t: Optional[object],
    y_t: object,
    cost: object,
    t: Optional[int] = None,
) -> np.ndarray:
    """Spec-level GRC step: given the step-t matrices and the observation
    already passed to act(), run the loss construction and the OGD update.
    Returns the updated parameter stack."""
    if t is None:
        t = controller._last[0] if controller._last else 0
    controller.update(t, A_t, B_t, C_t, cost)
    return controller.Ms


def grc_runner(
    controller: GRCController, system: object, cost: object
) -> Callable[[int, np.ndarray, np.ndarray], np.ndarray]:
    """Adapter: run a GRC controller inside :func:`nscontrol.lds_core.simulate`.

    ``cost`` here is evaluated on (observation, control) pairs; act and
    update both happen inside the same callback since no future state is
    needed.
    """

    def callback(t: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        A_t, B_t, C_t = system.matrices(t)
        u = controller.act(t, y, C_t)
        controller.update(t, A_t, B_t, C_t, cost)
        return u

    return callback
