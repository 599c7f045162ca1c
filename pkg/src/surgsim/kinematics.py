"""Forward kinematics, Jacobians, damped pseudoinverse and singularity metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import ManipulatorModel
from .errors import ReachabilityError, SingularJacobianError

#: damping used when the smallest singular value drops below the threshold
DEFAULT_DAMPING = 1e-3
DEFAULT_DAMPING_THRESHOLD = 1e-2


@dataclass(frozen=True)
class TaskPoint:
    x: np.ndarray
    xdot: np.ndarray | None = None


@dataclass(frozen=True)
class JacobianBundle:
    """Jacobian with its singularity metrics.

    ``manipulability`` is ``sqrt(det(J J^T))``, zero exactly when J loses row rank.
    """

    J: np.ndarray
    sigma_min: float
    manipulability: float


def forward_kinematics(model: ManipulatorModel, q, qdot=None) -> TaskPoint:
    x = model.forward_kinematics(q)
    xdot = None if qdot is None else model.jacobian(q) @ np.asarray(qdot, dtype=float)
    return TaskPoint(x, xdot)


def singular_values(J: np.ndarray) -> np.ndarray:
    return np.linalg.svd(J, compute_uv=False)


def jacobian(model: ManipulatorModel, q) -> JacobianBundle:
    J = model.jacobian(q)
    sv = singular_values(J)
    rows = J.shape[0]
    # missing singular values (more rows than columns) count as zero
    sigma_min = float(sv[-1]) if sv.size >= rows else 0.0
    manip = float(np.prod(sv[:rows])) if sv.size >= rows else 0.0
    return JacobianBundle(J, sigma_min, manip)


def smallest_singular_value(J: np.ndarray) -> float:
    """Cheap sigma_min for wide/square Jacobians via eigenvalues of J J^T."""
    if J.shape == (2, 2):
        a, b, c, d = J[0, 0], J[0, 1], J[1, 0], J[1, 1]
        fro2 = a * a + b * b + c * c + d * d
        det = abs(a * d - b * c)
        disc = math.sqrt(max(fro2 * fro2 - 4 * det * det, 0.0))
        # sigma_min^2 = (fro2 - disc)/2 rewritten to avoid cancellation
        return 0.0 if det == 0 else math.sqrt(2 * det * det / (fro2 + disc))
    return float(np.sqrt(max(np.linalg.eigvalsh(J @ J.T)[0], 0.0)))


def damped_pseudoinverse(J: np.ndarray, damping: float = 0.0) -> np.ndarray:
    """Damped least-squares inverse ``J^T (J J^T + damping^2 I)^-1``.

    With ``damping == 0`` and full row rank this is the Moore-Penrose
    pseudoinverse. Raises :class:`SingularJacobianError` when ``damping == 0``
    and ``J`` is row-rank deficient.
    """
    if damping < 0:
        raise ValueError("damping must be >= 0")
    J = np.asarray(J, dtype=float)
    m = J.shape[0]
    A = J @ J.T
    if damping == 0.0:
        sv = singular_values(J)
        if sv.size < m or sv[-1] <= sv[0] * 1e-13 or sv[0] == 0.0:
            raise SingularJacobianError(
                "Jacobian is rank deficient; use a damping factor > 0 for a damped least-squares inverse"
            )
    else:
        A = A + damping**2 * np.eye(m)
    return np.linalg.solve(A, J).T


def guarded_pseudoinverse(
    J: np.ndarray,
    sigma_min: float | None = None,
    damping: float = DEFAULT_DAMPING,
    threshold: float = DEFAULT_DAMPING_THRESHOLD,
) -> np.ndarray:
    """Bare pseudoinverse away from singularities, damped within ``threshold``."""
    if sigma_min is None:
        sigma_min = smallest_singular_value(J)
    if sigma_min < threshold:
        return damped_pseudoinverse(J, damping)
    if J.shape == (2, 2):
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        return np.array([[J[1, 1], -J[0, 1]], [-J[1, 0], J[0, 0]]]) / det
    if J.shape[0] == J.shape[1]:
        return np.linalg.inv(J)
    return damped_pseudoinverse(J, 0.0)


def singularity_clearance(
    model: ManipulatorModel,
    trajectory: Callable[[float], np.ndarray],
    horizon: float,
    dt: float,
    elbow: str = "down",
) -> float:
    """Minimum sigma_min of the IK configurations along a task-space path.

    ``trajectory`` maps time to a task-space target. The model must provide a
    closed-form ``inverse_kinematics``; unreachable targets raise
    :class:`ReachabilityError`.
    """
    if not hasattr(model, "inverse_kinematics"):
        raise ReachabilityError(f"model {model.name!r} has no inverse kinematics")
    steps = int(round(horizon / dt))
    worst = math.inf
    for k in range(steps + 1):
        q = model.inverse_kinematics(np.asarray(trajectory(k * dt), dtype=float), elbow)
        worst = min(worst, jacobian(model, q).sigma_min)
    return worst


def log_clearance(log) -> float:
    """Minimum logged ``sigma_min`` of a simulation log."""
    return float(np.min(log["sigma_min"]))
