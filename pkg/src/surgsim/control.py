"""Lyapunov-based tracking control with a disturbance observer.

Sign conventions: ``qtilde = q - q_d``; the reference filter uses a constant
gain ``Lambda`` so that ``sigma = qtilde_dot + Lambda qtilde``. The observer
integrates ``d_hat_dot = K_I sigma`` which, for a constant disturbance, gives
``d_tilde_dot = -K_I sigma`` and cancels the cross term in the Lyapunov
derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import JointState, ManipulatorModel, spd_solve
from .errors import ConfigError, ContractError, LogSchemaError
from .kinematics import (
    DEFAULT_DAMPING,
    DEFAULT_DAMPING_THRESHOLD,
    guarded_pseudoinverse,
    smallest_singular_value,
)
from .signals import ReferenceSample

__all__ = [
    "ControllerGains",
    "FilteredError",
    "ObserverState",
    "LyapunovSample",
    "ReferenceSample",
    "reference_filter",
    "lyapunov_control",
    "observer_update",
    "workspace_filter",
    "workspace_control",
    "inverse_dynamics_integral_control",
    "lyapunov_diagnostics",
    "passivity_audit",
    "is_spd",
]


def is_spd(A: np.ndarray, tol: float = 1e-12) -> bool:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.all(np.isfinite(A)):
        return False
    if np.max(np.abs(A - A.T)) > tol * max(1.0, np.max(np.abs(A))):
        return False
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return False
    return True


def as_gain(value, n: int) -> np.ndarray:
    """Scalar -> ``value * I``, vector -> diagonal, matrix -> itself."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(n)
    if arr.ndim == 1:
        if arr.size == 1:
            return float(arr[0]) * np.eye(n)
        if arr.size != n:
            raise ContractError(f"gain vector needs {n} entries, got {arr.size}")
        return np.diag(arr)
    if arr.shape != (n, n):
        raise ContractError(f"gain matrix must be {n}x{n}, got {arr.shape}")
    return arr.copy()


@dataclass(frozen=True)
class ControllerGains:
    """Symmetric positive-definite gain matrices.

    ``K_D`` damps the filtered error, ``K_I`` is the observer (integral) gain,
    ``Lambda`` the error-filter bandwidth in 1/s. For the workspace law ``K_D``
    and ``Lambda`` are task-space matrices while ``K_I`` stays joint-space.
    """

    K_D: np.ndarray
    K_I: np.ndarray
    Lambda: np.ndarray

    def __post_init__(self):
        for name in ("K_D", "K_I", "Lambda"):
            A = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, A)
            if not is_spd(A):
                raise ConfigError(f"{name} must be symmetric positive definite", key=name)
        if self.K_D.shape != self.Lambda.shape:
            raise ConfigError("K_D and Lambda must have the same dimension", key="Lambda")

    @classmethod
    def from_values(cls, n: int, K_D=1.0, K_I=1.0, Lambda=1.0) -> "ControllerGains":
        return cls(as_gain(K_D, n), as_gain(K_I, n), as_gain(Lambda, n))

    @property
    def n(self) -> int:
        return self.K_D.shape[0]

    @property
    def K_P(self) -> np.ndarray:
        """Proportional gain of the inverse-dynamics baseline, ``Lambda^2 + K_D Lambda``."""
        return self.Lambda @ self.Lambda + self.K_D @ self.Lambda


@dataclass
class FilteredError:
    qtilde: np.ndarray
    qtilde_dot: np.ndarray
    sigma: np.ndarray
    xi_dot: np.ndarray
    xi_ddot: np.ndarray


@dataclass(frozen=True)
class ObserverState:
    d_hat: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "ObserverState":
        return cls(np.zeros(n))


@dataclass(frozen=True)
class LyapunovSample:
    V: float
    Vdot_model: float
    sigma_norm: float


def model_terms(model: ManipulatorModel, q, qdot):
    """``(M(q), C(q, qdot), G(q))`` in one call."""
    return model.dynamics_terms(q, qdot)


def reference_filter(state: JointState, ref: ReferenceSample, Lambda) -> FilteredError:
    """Filtered tracking error for a joint-space reference."""
    q_d = np.asarray(ref.pos, dtype=float)
    if q_d.shape != state.q.shape:
        raise ContractError(f"reference has {q_d.size} entries, state has {state.n}")
    Lambda = np.asarray(Lambda, dtype=float)
    qt = state.q - q_d
    qtd = state.qdot - ref.vel
    xi_dot = ref.vel - Lambda @ qt
    xi_ddot = ref.acc - Lambda @ qtd
    return FilteredError(qt, qtd, state.qdot - xi_dot, xi_dot, xi_ddot)


def lyapunov_control(
    model: ManipulatorModel,
    state: JointState,
    fe: FilteredError,
    gains: ControllerGains,
    obs: ObserverState | None = None,
    terms=None,
) -> np.ndarray:
    """``u = M xi_ddot + C xi_dot + G - K_D sigma - d_hat``.

    ``terms`` may carry precomputed ``(M, C, G)`` at the current state.
    """
    M, C, G = terms if terms is not None else model_terms(model, state.q, state.qdot)
    u = M @ fe.xi_ddot + C @ fe.xi_dot + G - gains.K_D @ fe.sigma
    if obs is not None:
        u = u - obs.d_hat
    return u


def observer_update(obs: ObserverState, sigma, K_I, dt: float) -> ObserverState:
    """One explicit Euler step of ``d_hat_dot = K_I sigma``.

    The simulator integrates the same law inside its RK4 stages instead; this
    is the discrete form for callers running their own loop.
    """
    if not dt > 0:
        raise ContractError("dt must be > 0")
    return ObserverState(obs.d_hat + dt * (np.asarray(K_I) @ np.asarray(sigma, dtype=float)))


@dataclass
class WorkspaceError:
    """Joint-space filtered error derived from a task-space reference."""

    fe: FilteredError
    J: np.ndarray
    sigma_min: float
    x: np.ndarray
    xtilde: np.ndarray


def workspace_filter(
    model: ManipulatorModel,
    state: JointState,
    task_ref: ReferenceSample,
    Lambda,
    xi_ddot: np.ndarray | None = None,
    damping: float = DEFAULT_DAMPING,
    threshold: float = DEFAULT_DAMPING_THRESHOLD,
) -> WorkspaceError:
    """``xi_dot_x = xdot_d + Lambda (x_d - x)`` mapped to joints by ``J^+``.

    ``xi_ddot`` defaults to the analytic derivative
    ``J^+ (xi_ddot_x - Jdot xi_dot)``, exact for square nonsingular ``J``.
    Pass a precomputed value (e.g. a backward difference) to override it.
    """
    q, qdot = state.q, state.qdot
    Lambda = np.asarray(Lambda, dtype=float)
    x, J, Jdot = model.task_terms(q, qdot)
    smin = smallest_singular_value(J)
    Jp = guarded_pseudoinverse(J, smin, damping, threshold)
    xt = x - task_ref.pos
    xtd = J @ qdot - task_ref.vel
    xi_dot = Jp @ (task_ref.vel - Lambda @ xt)
    if xi_ddot is None:
        xi_ddot = Jp @ (task_ref.acc - Lambda @ xtd - Jdot @ xi_dot)
    # joint-space errors are the task errors pulled back through J^+
    fe = FilteredError(Jp @ xt, Jp @ xtd, qdot - xi_dot, xi_dot, xi_ddot)
    return WorkspaceError(fe, J, smin, x, xt)


def workspace_control(
    model: ManipulatorModel,
    state: JointState,
    task_ref: ReferenceSample,
    gains: ControllerGains,
    obs: ObserverState | None = None,
    we: WorkspaceError | None = None,
    terms=None,
    **filter_kwargs,
) -> np.ndarray:
    """Workspace law ``u = M xi_ddot + C xi_dot + G + J^T K_D J (xi_dot - qdot) [- d_hat]``.

    ``gains.K_D`` and ``gains.Lambda`` act in task space (m x m); ``K_I`` stays
    in joint space.
    """
    if we is None:
        we = workspace_filter(model, state, task_ref, gains.Lambda, **filter_kwargs)
    M, C, G = terms if terms is not None else model_terms(model, state.q, state.qdot)
    fe, J = we.fe, we.J
    u = M @ fe.xi_ddot + C @ fe.xi_dot + G + J.T @ (gains.K_D @ (J @ (fe.xi_dot - state.qdot)))
    if obs is not None:
        u = u - obs.d_hat
    return u


def inverse_dynamics_integral_control(
    model: ManipulatorModel,
    state: JointState,
    ref: ReferenceSample,
    gains: ControllerGains,
    integral_state,
    dt: float | None = None,
    terms=None,
):
    """Computed torque with integral action.

    ``u = M (qddot_d - K_D qtilde_dot - K_P qtilde - K_I int(qtilde)) + C qdot + G``
    with ``K_P = Lambda^2 + K_D Lambda``. Returns ``(u, integral_state)``; the
    integral is advanced by one Euler step when ``dt`` is given.
    """
    q, qdot = state.q, state.qdot
    integral_state = np.asarray(integral_state, dtype=float)
    qt = q - ref.pos
    qtd = qdot - ref.vel
    v = ref.acc - gains.K_D @ qtd - gains.K_P @ qt - gains.K_I @ integral_state
    M, C, G = terms if terms is not None else model_terms(model, q, qdot)
    u = M @ v + C @ qdot + G
    if dt is not None:
        integral_state = integral_state + dt * qt
    return u, integral_state


def lyapunov_diagnostics(
    model: ManipulatorModel,
    state: JointState,
    fe: FilteredError,
    obs: ObserverState,
    true_d,
    gains: ControllerGains,
    damping: np.ndarray | None = None,
) -> LyapunovSample:
    """``V = 0.5 sigma^T M sigma + 0.5 d_tilde^T K_I^-1 d_tilde`` and ``-sigma^T K_D sigma``.

    ``damping`` overrides ``gains.K_D`` as the joint-space damping matrix (the
    workspace law damps with ``J^T K_D J``).
    """
    sigma = fe.sigma
    dt_ = np.asarray(true_d, dtype=float) - obs.d_hat
    M = model.mass_matrix(state.q)
    V = 0.5 * float(sigma @ M @ sigma) + 0.5 * float(dt_ @ spd_solve(gains.K_I, dt_))
    K = gains.K_D if damping is None else damping
    Vdot = -float(sigma @ K @ sigma)
    return LyapunovSample(V, min(Vdot, 0.0), float(np.linalg.norm(sigma)))


def passivity_audit(log, K_I) -> float:
    """Residual of the storage identity for the map ``-sigma -> d_tilde``.

    Returns ``|int_0^t -sigma^T d_tilde ds - (V1(t) - V1(0))|`` evaluated with
    trapezoidal quadrature over the logged samples, where
    ``V1 = 0.5 d_tilde^T K_I^-1 d_tilde``.
    """
    try:
        t = np.asarray(log["t"])
        sigma = log.vector("sigma")
        d_tilde = log.vector("d") - log.vector("d_hat")
    except KeyError as exc:
        raise LogSchemaError(f"log lacks column needed for the passivity audit: {exc}") from None
    if t.size == 0:
        raise LogSchemaError("empty log")
    K_I = np.asarray(K_I, dtype=float)
    power = -np.einsum("ij,ij->i", sigma, d_tilde)
    supplied = np.trapezoid(power, t) if t.size > 1 else 0.0
    Kinv = np.linalg.inv(K_I)
    v1 = 0.5 * np.einsum("ij,jk,ik->i", d_tilde, Kinv, d_tilde)
    return float(abs(supplied - (v1[-1] - v1[0])))


def storage_v1(log, K_I) -> np.ndarray:
    """``V1 = 0.5 d_tilde^T K_I^-1 d_tilde`` for every logged sample."""
    d_tilde = log.vector("d") - log.vector("d_hat")
    Kinv = np.linalg.inv(np.asarray(K_I, dtype=float))
    return 0.5 * np.einsum("ij,jk,ik->i", d_tilde, Kinv, d_tilde)
