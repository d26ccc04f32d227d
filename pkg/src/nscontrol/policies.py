"""The policy-class zoo for controlling linear dynamical systems.

Classes
-------
* :class:`LinearPolicy` — ``u = K x``.
* :class:`PIDPolicy` — proportional + integral + derivative terms.
* :class:`BangBangPolicy` — extreme controls outside a state band.
* :class:`LDCPolicy` — linear dynamic controller with internal state.
* :class:`GLCPolicy` — generalized linear controller over a state window.
* :class:`DACPolicy` — disturbance-action controller: stabilizing gain
  plus learned terms acting on past perturbations.
* :class:`DRCPolicy` — disturbance-response controller over nature's-y
  signals, for partially observed stable systems.

Plus the constructive conversion maps between classes
(:func:`dac_from_linear`, :func:`glc_from_ldc`, :func:`lift_glc`), the
nature's-y recursion, an ε-approximation gap meter, and an adapter that
turns any policy into a simulation callback.

Conventions: histories before the first step are zero vectors; budget
checks on coefficient sums use the spectral norm (the linear policy's
bound is Frobenius).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError
from .lds_core import (
    LinearSystem,
    PerturbationSource,
    _as_matrix,
    simulate,
    spectral_radius,
)

__all__ = [
    "LinearPolicy",
    "PIDPolicy",
    "BangBangPolicy",
    "LDCPolicy",
    "GLCPolicy",
    "DACPolicy",
    "DRCPolicy",
    "NaturesYTracker",
    "natures_y_step",
    "act",
    "policy_runner",
    "LiftedGLC",
    "lift_glc",
    "dac_from_linear",
    "glc_from_ldc",
    "approximation_gap",
]


def _spectral_norm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, 2))


def _coerce_gain(G: object, name: str) -> np.ndarray:
    """Accept scalars or matrices as policy gains."""
    arr = np.asarray(G, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    return _as_matrix(arr, name)


# ---------------------------------------------------------------------------
# Policy classes
# ---------------------------------------------------------------------------


class LinearPolicy:
    """Fixed linear feedback ``u = K x``.

    Parameters
    ----------
    K : array_like, shape (d_u, d_x)
    kappa : float, optional
        Frobenius-norm budget; construction fails when ``||K||_F > kappa``.
    """

    kind = "linear"

    def __init__(self, K: object, kappa: Optional[float] = None):
        self.K = _coerce_gain(K, "K")
        if kappa is not None and np.linalg.norm(self.K) > kappa + 1e-12:
            raise ConfigurationError(
                f"||K||_F = {np.linalg.norm(self.K):.6g} exceeds the budget kappa = {kappa}"
            )
        self.kappa = kappa

    def act_state(self, x: np.ndarray) -> np.ndarray:
        return self.K @ x

    def reset(self) -> None:
        pass

    def clone(self) -> "LinearPolicy":
        return LinearPolicy(self.K.copy(), self.kappa)


class PIDPolicy:
    """Proportional-integral-derivative feedback.

    ``u_t = alpha x_t + beta * sum_{tau<=t} x_tau + gamma_d (x_t - x_{t-1})``

    Gains may be scalars (acting coordinatewise) or (d_u, d_x) matrices.
    The integral is an unwindowed running sum that includes the current
    state; the previous state is zero before the first step.
    """

    kind = "pid"

    def __init__(self, alpha: object, beta: object, gamma_d: object):
        self.alpha = _coerce_gain(alpha, "alpha")
        self.beta = _coerce_gain(beta, "beta")
        self.gamma_d = _coerce_gain(gamma_d, "gamma_d")
        self._integral: Optional[np.ndarray] = None
        self._prev: Optional[np.ndarray] = None

    def _apply(self, G: np.ndarray, v: np.ndarray) -> np.ndarray:
        if G.shape == (1, 1):
            return G[0, 0] * v
        return G @ v

    def act_state(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._integral is None:
            self._integral = np.zeros_like(x)
            self._prev = np.zeros_like(x)
        self._integral = self._integral + x
        u = (
            self._apply(self.alpha, x)
            + self._apply(self.beta, self._integral)
            + self._apply(self.gamma_d, x - self._prev)
        )
        self._prev = x.copy()
        return u

    def reset(self) -> None:
        self._integral = None
        self._prev = None

    def clone(self) -> "PIDPolicy":
        return PIDPolicy(self.alpha.copy(), self.beta.copy(), self.gamma_d.copy())


class BangBangPolicy:
    """Extreme control outside a scalar state band.

    Emits ``u_max`` when the state is below ``x_min``, ``u_min`` when it is
    above ``x_max``, and zero inside the band.  Defined for scalar states.
    """

    kind = "bang-bang"

    def __init__(self, x_min: float, x_max: float, u_min: float, u_max: float):
        if x_min > x_max:
            raise ConfigurationError("bang-bang requires x_min <= x_max")
        if u_min > u_max:
            raise ConfigurationError("bang-bang requires u_min <= u_max")
        self.x_min = float(x_min)
        self.x_max = float(x_max)
        self.u_min = float(u_min)
        self.u_max = float(u_max)

    def act_state(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape[0] != 1:
            raise ConfigurationError("bang-bang policy is defined for scalar states")
        if x[0] < self.x_min:
            return np.array([self.u_max])
        if x[0] > self.x_max:
            return np.array([self.u_min])
        return np.array([0.0])

    def reset(self) -> None:
        pass

    def clone(self) -> "BangBangPolicy":
        return BangBangPolicy(self.x_min, self.x_max, self.u_min, self.u_max)


class LDCPolicy:
    """Linear dynamic controller: an internal linear system driving control.

    At each step ``u = C_pi s + D_pi x`` is emitted first, then the internal
    state advances via ``s <- A_pi s + B_pi x``.  The internal state starts
    at zero.  The internal dynamics must be stable (spectral radius below
    1) unless ``allow_unstable`` is set.
    """

    kind = "ldc"

    def __init__(
        self,
        A_pi: object,
        B_pi: object,
        C_pi: object,
        D_pi: Optional[object] = None,
        allow_unstable: bool = False,
    ):
        self.A_pi = _as_matrix(A_pi, "A_pi")
        self.B_pi = _as_matrix(B_pi, "B_pi")
        self.C_pi = _as_matrix(C_pi, "C_pi")
        d_s = self.A_pi.shape[0]
        if self.A_pi.shape != (d_s, d_s):
            raise ConfigurationError("A_pi must be square")
        if self.B_pi.shape[0] != d_s:
            raise ConfigurationError("B_pi must have as many rows as A_pi")
        if self.C_pi.shape[1] != d_s:
            raise ConfigurationError("C_pi must have as many columns as A_pi has rows")
        d_u, d_x = self.C_pi.shape[0], self.B_pi.shape[1]
        if D_pi is None:
            self.D_pi = np.zeros((d_u, d_x))
        else:
            self.D_pi = _as_matrix(D_pi, "D_pi")
            if self.D_pi.shape != (d_u, d_x):
                raise ConfigurationError(f"D_pi must have shape ({d_u}, {d_x})")
        if not allow_unstable and spectral_radius(self.A_pi) >= 1.0:
            raise ConfigurationError(
                "LDC internal dynamics are unstable (spectral radius >= 1); "
                "pass allow_unstable=True to override"
            )
        self._s = np.zeros(d_s)

    def internal_decay(self, n: int = 50) -> np.ndarray:
        """Spectral norms of ``A_pi^i`` for i = 0..n (stability diagnostic)."""
        norms = np.zeros(n + 1)
        power = np.eye(self.A_pi.shape[0])
        for i in range(n + 1):
            norms[i] = _spectral_norm(power)
            power = power @ self.A_pi
        return norms

    def act_state(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = self.C_pi @ self._s + self.D_pi @ x
        self._s = self.A_pi @ self._s + self.B_pi @ x
        return u

    def reset(self) -> None:
        self._s = np.zeros(self.A_pi.shape[0])

    def clone(self) -> "LDCPolicy":
        return LDCPolicy(
            self.A_pi.copy(), self.B_pi.copy(), self.C_pi.copy(), self.D_pi.copy(),
            allow_unstable=True,
        )


class GLCPolicy:
    """Generalized linear controller ``u_t = sum_{i=0}^{h} M_i x_{t-i}``.

    ``Ms`` lists ``[M_0, ..., M_h]``; states before the first step are
    zero.  An optional ``gamma`` bounds the sum of spectral norms.
    """

    kind = "glc"

    def __init__(self, Ms: Sequence[object], gamma: Optional[float] = None):
        self.Ms = [_as_matrix(M, f"M_{i}") for i, M in enumerate(Ms)]
        if not self.Ms:
            raise ConfigurationError("GLC needs at least M_0")
        shape = self.Ms[0].shape
        if any(M.shape != shape for M in self.Ms):
            raise ConfigurationError("all GLC coefficient matrices must share one shape")
        total = sum(_spectral_norm(M) for M in self.Ms)
        if gamma is not None and total > gamma + 1e-12:
            raise ConfigurationError(
                f"sum of spectral norms {total:.6g} exceeds the budget gamma = {gamma}"
            )
        self.gamma = gamma
        self.h = len(self.Ms) - 1
        self._history: deque = deque(maxlen=self.h + 1)  # most recent first

    def act_state(self, x: np.ndarray) -> np.ndarray:
        self._history.appendleft(np.asarray(x, dtype=float))
        u = np.zeros(self.Ms[0].shape[0])
        for i, past in enumerate(self._history):
            u += self.Ms[i] @ past
        return u

    def reset(self) -> None:
        self._history.clear()

    def clone(self) -> "GLCPolicy":
        return GLCPolicy([M.copy() for M in self.Ms], self.gamma)


class DACPolicy:
    """Disturbance-action controller.

    ``u_t = K_t x_t + sum_{i=1}^{h} M_i w_{t-i} (+ offset)``

    Parameters
    ----------
    K : array_like or callable
        Stabilizing gain; a callable ``t -> K_t`` gives the time-varying
        form.
    Ms : sequence of (d_u, d_x) matrices
        ``[M_1, ..., M_h]`` acting on the most recent ``h`` perturbations
        (zero-padded before the first step).
    offset : array_like, optional
        Constant control offset (disabled when None).
    gamma : float, optional
        Budget on the sum of spectral norms of the ``M_i``.
    """

    kind = "dac"

    def __init__(
        self,
        K: Union[object, Callable[[int], object]],
        Ms: Sequence[object],
        offset: Optional[object] = None,
        gamma: Optional[float] = None,
    ):
        self._K_provider: Optional[Callable[[int], object]] = K if callable(K) else None
        self._K_fixed: Optional[np.ndarray] = None if callable(K) else _coerce_gain(K, "K")
        self.Ms = [_as_matrix(M, f"M_{i + 1}") for i, M in enumerate(Ms)]
        self.h = len(self.Ms)
        total = sum(_spectral_norm(M) for M in self.Ms)
        if gamma is not None and total > gamma + 1e-12:
            raise ConfigurationError(
                f"sum of spectral norms {total:.6g} exceeds the budget gamma = {gamma}"
            )
        self.gamma = gamma
        self.offset = None if offset is None else np.asarray(offset, dtype=float)
        self._buffer: deque = deque(maxlen=max(self.h, 1))  # w_{t-1} first

    def gain(self, t: int) -> np.ndarray:
        return (
            self._K_fixed
            if self._K_fixed is not None
            else _coerce_gain(self._K_provider(t), f"K_{t}")
        )

    def push_perturbation(self, w: np.ndarray) -> None:
        """Record a newly recovered perturbation (most recent first)."""
        self._buffer.appendleft(np.asarray(w, dtype=float))

    def act(
        self,
        x: np.ndarray,
        t: int = 0,
        history: Optional[Iterable[np.ndarray]] = None,
    ) -> np.ndarray:
        """Control at time t; ``history`` overrides the internal buffer
        (ordered most recent first: ``[w_{t-1}, w_{t-2}, ...]``)."""
        x = np.asarray(x, dtype=float)
        u = self.gain(t) @ x
        past = list(self._buffer if history is None else history)[: self.h]
        for i, w in enumerate(past):
            u = u + self.Ms[i] @ np.asarray(w, dtype=float)
        if self.offset is not None:
            u = u + self.offset
        return u

    def reset(self) -> None:
        self._buffer.clear()

    def clone(self) -> "DACPolicy":
        K = self._K_provider if self._K_provider is not None else self._K_fixed.copy()
        return DACPolicy(
            K,
            [M.copy() for M in self.Ms],
            None if self.offset is None else self.offset.copy(),
            self.gamma,
        )


class NaturesYTracker:
    """Running computation of nature's y: the observation the system would
    have produced with all controls forced to zero.

    Maintains ``z_t`` with ``z_0 = 0``; per step,
    ``ynat_t = y_t - C_t z_t`` and then ``z_{t+1} = A_t z_t + B_t u_t``.
    """

    def __init__(self, d_x: int):
        self.z = np.zeros(int(d_x))

    def observe(self, y: np.ndarray, C: Optional[np.ndarray]) -> np.ndarray:
        """ynat at the current step (does not advance the recursion)."""
        y = np.asarray(y, dtype=float)
        contribution = self.z if C is None else np.asarray(C, dtype=float) @ self.z
        return y - contribution

    def advance(self, A: np.ndarray, B: np.ndarray, u: np.ndarray) -> None:
        """Advance ``z`` with the control actually played."""
        self.z = np.asarray(A, dtype=float) @ self.z + np.asarray(B, dtype=float) @ np.asarray(
            u, dtype=float
        )

    def reset(self) -> None:
        self.z = np.zeros_like(self.z)


def natures_y_step(
    tracker: NaturesYTracker,
    A_t: np.ndarray,
    B_t: np.ndarray,
    C_t: Optional[np.ndarray],
    u_t: np.ndarray,
    y_t: np.ndarray,
) -> np.ndarray:
    """One atomic nature's-y update: returns ``ynat_t = y_t - C_t z_t`` and
    advances ``z_{t+1} = A_t z_t + B_t u_t``."""
    ynat = tracker.observe(y_t, C_t)
    tracker.advance(A_t, B_t, u_t)
    return ynat


class DRCPolicy:
    """Disturbance-response controller for stable, partially observed
    systems: ``u_t = sum_{i=0}^{h} M_i ynat_{t-i}``.

    ``Ms`` lists ``[M_0, ..., M_h]`` of shape (d_u, d_y); nature's-y
    values before the first step are zero.  The policy owns the nature's-y
    recursion state (``z_0 = 0``).
    """

    kind = "drc"

    def __init__(self, Ms: Sequence[object], d_x: int, gamma: Optional[float] = None):
        self.Ms = [_as_matrix(M, f"M_{i}") for i, M in enumerate(Ms)]
        if not self.Ms:
            raise ConfigurationError("DRC needs at least M_0")
        shape = self.Ms[0].shape
        if any(M.shape != shape for M in self.Ms):
            raise ConfigurationError("all DRC coefficient matrices must share one shape")
        total = sum(_spectral_norm(M) for M in self.Ms)
        if gamma is not None and total > gamma + 1e-12:
            raise ConfigurationError(
                f"sum of spectral norms {total:.6g} exceeds the budget gamma = {gamma}"
            )
        self.gamma = gamma
        self.h = len(self.Ms) - 1
        self.tracker = NaturesYTracker(d_x)
        self._history: deque = deque(maxlen=self.h + 1)  # ynat_t first

    def act_ynat(self, ynat: np.ndarray) -> np.ndarray:
        """Control from a freshly computed ynat_t (pushes it into the window)."""
        self._history.appendleft(np.asarray(ynat, dtype=float))
        u = np.zeros(self.Ms[0].shape[0])
        for i, past in enumerate(self._history):
            u += self.Ms[i] @ past
        return u

    def step(
        self,
        y_t: np.ndarray,
        A_t: np.ndarray,
        B_t: np.ndarray,
        C_t: Optional[np.ndarray],
    ) -> np.ndarray:
        """Full per-step pipeline: ynat from y_t, control, recursion update."""
        ynat = self.tracker.observe(y_t, C_t)
        u = self.act_ynat(ynat)
        self.tracker.advance(A_t, B_t, u)
        return u

    def reset(self) -> None:
        self.tracker.reset()
        self._history.clear()

    def clone(self) -> "DRCPolicy":
        return DRCPolicy([M.copy() for M in self.Ms], self.tracker.z.shape[0], self.gamma)


Policy = Union[
    LinearPolicy, PIDPolicy, BangBangPolicy, LDCPolicy, GLCPolicy, DACPolicy, DRCPolicy
]


# ---------------------------------------------------------------------------
# Acting and rollouts
# ---------------------------------------------------------------------------


def act(policy: Policy, signals: dict, t: int = 0) -> np.ndarray:
    """Compute the control of any policy from a signals mapping.

    Required keys by kind: ``state`` for linear/pid/bang-bang/ldc/glc/dac;
    DAC additionally accepts ``perturbations`` (history, most recent
    first) which overrides its internal buffer; DRC requires ``ynat``
    (current nature's y) or ``natures_y`` history.

    Raises
    ------
    ConfigurationError
        When a signal the policy kind needs is missing.
    """
    kind = getattr(policy, "kind", None)
    if kind in ("linear", "pid", "bang-bang", "ldc", "glc"):
        if "state" not in signals:
            raise ConfigurationError(f"{kind} policy needs a 'state' signal")
        return policy.act_state(np.asarray(signals["state"], dtype=float))
    if kind == "dac":
        if "state" not in signals:
            raise ConfigurationError("DAC policy needs a 'state' signal")
        history = signals.get("perturbations")
        return policy.act(np.asarray(signals["state"], dtype=float), t, history=history)
    if kind == "drc":
        if "ynat" in signals:
            return policy.act_ynat(np.asarray(signals["ynat"], dtype=float))
        if "natures_y" in signals:
            window = list(signals["natures_y"])[: policy.h + 1]
            u = np.zeros(policy.Ms[0].shape[0])
            for i, past in enumerate(window):
                u += policy.Ms[i] @ np.asarray(past, dtype=float)
            return u
        raise ConfigurationError("DRC policy needs an 'ynat' or 'natures_y' signal")
    raise ConfigurationError(f"unknown policy kind {kind!r}")


def policy_runner(
    policy: Policy,
    system: LinearSystem,
) -> Callable[[int, np.ndarray, np.ndarray], np.ndarray]:
    """Wrap a policy as a ``controller(t, x, y)`` callback for simulate().

    The adapter supplies what each kind needs: for DAC it recovers
    perturbations from consecutive states using the known dynamics; for
    DRC it runs the nature's-y recursion on observations.  The policy is
    reset at the start of the rollout.
    """
    policy.reset()

    if policy.kind == "dac":
        last: dict = {"x": None, "u": None}

        def dac_callback(t: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
            if last["x"] is not None:
                A_prev, B_prev, _ = system.matrices(t - 1)
                w_prev = x - A_prev @ last["x"] - B_prev @ last["u"]
                policy.push_perturbation(w_prev)
            u = policy.act(x, t)
            last["x"], last["u"] = x.copy(), u.copy()
            return u

        return dac_callback

    if policy.kind == "drc":

        def drc_callback(t: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
            A_t, B_t, C_t = system.matrices(t)
            return policy.step(y, A_t, B_t, C_t)

        return drc_callback

    def state_callback(t: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return policy.act_state(x)

    return state_callback


# ---------------------------------------------------------------------------
# Conversions between classes
# ---------------------------------------------------------------------------


@dataclass
class LiftedGLC:
    """A GLC rewritten as a linear policy on an augmented system.

    ``system`` carries the block-companion dynamics over stacked states
    ``z_t = [x_t; x_{t-1}; ...; x_{t-h}]``; ``noise_embedding`` maps an
    original perturbation into the lifted space; ``K_tilde`` is the linear
    gain ``[M_0 ... M_h]`` reproducing the GLC on the lifted system.
    """

    system: LinearSystem
    noise_embedding: np.ndarray
    K_tilde: np.ndarray


def lift_glc(system: LinearSystem, glc: GLCPolicy) -> LiftedGLC:
    """Rewrite a GLC on a time-invariant system as a linear policy on a
    lifted system whose first block reproduces the original state exactly."""
    A, B, _ = system.matrices(0)
    if system._provider is not None:
        raise ConfigurationError("lift_glc requires a time-invariant system")
    d_x, d_u = system.d_x, system.d_u
    h = glc.h
    n = (h + 1) * d_x

    A_tilde = np.zeros((n, n))
    A_tilde[:d_x, :d_x] = A
    for block in range(h):
        A_tilde[(block + 1) * d_x : (block + 2) * d_x, block * d_x : (block + 1) * d_x] = np.eye(
            d_x
        )
    B_tilde = np.zeros((n, d_u))
    B_tilde[:d_x, :] = B
    embed = np.zeros((n, d_x))
    embed[:d_x, :] = np.eye(d_x)
    K_tilde = np.hstack(glc.Ms)
    return LiftedGLC(
        system=LinearSystem.time_invariant(A_tilde, B_tilde),
        noise_embedding=embed,
        K_tilde=K_tilde,
    )


def dac_from_linear(A: object, B: object, K: object, h: int) -> DACPolicy:
    """Disturbance-action policy replicating the linear policy ``u = Kx``.

    Places ``K (A + BK)^i`` against ``w_{t-1-i}`` for ``i = 0..h`` with a
    zero stabilizing part; the control gap versus the linear policy decays
    geometrically in ``h``.

    Raises
    ------
    ConfigurationError
        When ``A + BK`` is not stable (the construction presupposes it).
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    K = _coerce_gain(K, "K")
    closed = A + B @ K
    if spectral_radius(closed) >= 1.0:
        raise ConfigurationError(
            "dac_from_linear requires a stable closed loop: spectral radius of "
            f"A + BK is {spectral_radius(closed):.4f} >= 1"
        )
    Ms = []
    power = np.eye(A.shape[0])
    for _ in range(h + 1):
        Ms.append(K @ power)
        power = power @ closed
    zero_gain = np.zeros_like(K)
    return DACPolicy(zero_gain, Ms)


def glc_from_ldc(ldc: LDCPolicy, h: int) -> GLCPolicy:
    """Unroll an LDC into a GLC window: ``M_0 = D_pi``,
    ``M_i = C_pi A_pi^{i-1} B_pi`` for ``i >= 1``.

    Raises
    ------
    ConfigurationError
        When the LDC's internal dynamics are unstable.
    """
    if spectral_radius(ldc.A_pi) >= 1.0:
        raise ConfigurationError("glc_from_ldc requires stable internal dynamics")
    Ms = [ldc.D_pi.copy()]
    power = np.eye(ldc.A_pi.shape[0])
    for _ in range(1, h + 1):
        Ms.append(ldc.C_pi @ power @ ldc.B_pi)
        power = power @ ldc.A_pi
    return GLCPolicy(Ms)


# ---------------------------------------------------------------------------
# Approximation gap
# ---------------------------------------------------------------------------


def approximation_gap(
    policy_a: Policy,
    policy_b: Policy,
    system: LinearSystem,
    perturbations: PerturbationSource,
    costs: object,
    T: int,
    seed: int = 0,
) -> float:
    """Average per-step absolute cost gap between two policies rolled out
    on the *same* perturbation sequence.

    The perturbation source is sampled once, recorded, and replayed for
    both policies; the result is ``(1/T) * sum_t |c_t(a) - c_t(b)|``.
    """
    rng = np.random.default_rng(seed)
    recorded = np.array([perturbations.sample(t, system.d_x, rng) for t in range(T)])
    replay = PerturbationSource.recorded(recorded)
    traj_a = simulate(system, policy_runner(policy_a, system), replay, costs, T, seed=seed)
    traj_b = simulate(system, policy_runner(policy_b, system), replay, costs, T, seed=seed)
    return float(np.mean(np.abs(traj_a.costs - traj_b.costs)))
