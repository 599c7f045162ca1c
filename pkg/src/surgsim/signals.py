"""Reference trajectories and additive disturbance (tremor) generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

TRAJECTORY_KINDS = ("workspace_eq24", "joint_sinusoid", "setpoint", "workspace_circle")
DISTURBANCE_KINDS = ("zero", "constant", "sinusoid", "sum")


@dataclass(frozen=True)
class ReferenceSample:
    """Desired position, velocity and acceleration at one instant.

    ``space`` is ``"joint"`` for q_d-type references and ``"task"`` for
    Cartesian x_d-type references.
    """

    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    space: str = "joint"


def eq24_reference(t: float) -> tuple[float, float, float, float]:
    """Singularity-free workspace reference: ``(x_d, y_d, xdot_d, ydot_d)``.

    Evaluated exactly in the closed form it was published in.
    """
    st, ct = math.sin(t), math.cos(t)
    s = st / 2 + 1
    x = ct / 2 + math.sin(s) / s
    y = -(math.cos(s) - 1) / s
    dx = (math.cos(s) * ct) / (2 * s) - st / 2 - (math.sin(s) * ct) / (2 * s**2)
    dy = (math.sin(s) * ct) / (2 * s) + (ct * (math.cos(s) - 1)) / (2 * s**2)
    return x, y, dx, dy


def eq24_acceleration(t: float) -> tuple[float, float]:
    """Second derivative of :func:`eq24_reference`, differentiated by hand.

    With ``s = sin(t)/2 + 1`` the path is ``x = cos(t)/2 + f(s)``,
    ``y = g(s)`` where ``f = sin(s)/s`` and ``g = (1 - cos(s))/s``.
    """
    st, ct = math.sin(t), math.cos(t)
    s = st / 2 + 1
    sd, sdd = ct / 2, -st / 2
    sn, cs = math.sin(s), math.cos(s)
    f1 = cs / s - sn / s**2
    f2 = -sn / s - 2 * cs / s**2 + 2 * sn / s**3
    g1 = sn / s - (1 - cs) / s**2
    g2 = cs / s - 2 * sn / s**2 + 2 * (1 - cs) / s**3
    return -ct / 2 + f2 * sd**2 + f1 * sdd, g2 * sd**2 + g1 * sdd


def _vec(value, name):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} must be a finite vector")
    return arr


@dataclass(frozen=True)
class TrajectorySpec:
    """Declarative reference trajectory.

    Per-kind parameters (unused ones are ignored):

    ``joint_sinusoid``
        ``q_d = amplitude * sin(omega * t + phase) + offset`` (elementwise).
    ``setpoint``
        constant ``target`` in ``space`` ("joint" or "task").
    ``workspace_circle``
        ``center + radius * (cos(omega t + phase), sin(omega t + phase))``.
    ``workspace_eq24``
        the fixed singularity-free planar path, no parameters.
    """

    kind: str = "workspace_eq24"
    amplitude: np.ndarray = field(default_factory=lambda: np.zeros(1))
    omega: np.ndarray = field(default_factory=lambda: np.ones(1))
    phase: np.ndarray = field(default_factory=lambda: np.zeros(1))
    offset: np.ndarray = field(default_factory=lambda: np.zeros(1))
    target: np.ndarray = field(default_factory=lambda: np.zeros(1))
    space: str = "joint"
    center: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.5]))
    radius: float = 0.3

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ContractError(f"unknown trajectory kind {self.kind!r}; choose from {TRAJECTORY_KINDS}")
        for name in ("amplitude", "omega", "phase", "offset", "target", "center"):
            object.__setattr__(self, name, _vec(getattr(self, name), name))
        if np.any(self.omega < 0):
            raise ContractError("frequencies must be >= 0")
        if self.space not in ("joint", "task"):
            raise ContractError("space must be 'joint' or 'task'")
        if self.kind in ("workspace_eq24", "workspace_circle"):
            object.__setattr__(self, "space", "task")
        elif self.kind == "joint_sinusoid":
            object.__setattr__(self, "space", "joint")

    def dimension(self, n: int) -> int:
        """Length of the reference vector for an n-DOF model (broadcast scalars)."""
        if self.kind in ("workspace_eq24", "workspace_circle"):
            return 2
        if self.kind == "setpoint":
            return self.target.size if self.target.size > 1 else n
        return n


def _broadcast(arr, n):
    if arr.size == 1:
        return np.full(n, arr[0])
    if arr.size != n:
        raise ContractError(f"expected {n} entries, got {arr.size}")
    return arr


def joint_sinusoid_reference(spec: TrajectorySpec, t: float, n: int | None = None) -> ReferenceSample:
    if n is None:
        n = max(a.size for a in (spec.amplitude, spec.omega, spec.phase, spec.offset))
    a = _broadcast(spec.amplitude, n)
    w = _broadcast(spec.omega, n)
    ph = _broadcast(spec.phase, n)
    off = _broadcast(spec.offset, n)
    arg = w * t + ph
    s, c = np.sin(arg), np.cos(arg)
    return ReferenceSample(a * s + off, a * w * c, -a * w * w * s, "joint")


def reference_sample(spec: TrajectorySpec, t: float, n: int) -> ReferenceSample:
    """Evaluate any trajectory kind at time ``t`` for an n-DOF model."""
    if spec.kind == "workspace_eq24":
        x, y, dx, dy = eq24_reference(t)
        ddx, ddy = eq24_acceleration(t)
        return ReferenceSample(np.array([x, y]), np.array([dx, dy]), np.array([ddx, ddy]), "task")
    if spec.kind == "joint_sinusoid":
        return joint_sinusoid_reference(spec, t, n)
    if spec.kind == "setpoint":
        target = _broadcast(spec.target, spec.dimension(n))
        z = np.zeros_like(target)
        return ReferenceSample(target.copy(), z, z.copy(), spec.space)
    # workspace_circle
    w = float(spec.omega[0])
    arg = w * t + float(spec.phase[0])
    r = spec.radius
    c, s = math.cos(arg), math.sin(arg)
    center = _broadcast(spec.center, 2)
    return ReferenceSample(
        center + r * np.array([c, s]),
        r * w * np.array([-s, c]),
        -r * w * w * np.array([c, s]),
        "task",
    )


@dataclass(frozen=True)
class DisturbanceSpec:
    """Additive joint disturbance ``d(t)``.

    ``constant`` returns ``d0``; ``sinusoid`` returns
    ``amplitude * sin(2 pi frequency t + phase)`` (frequency in Hz); ``sum``
    adds its ``children``.
    """

    kind: str = "zero"
    d0: np.ndarray = field(default_factory=lambda: np.zeros(1))
    amplitude: np.ndarray = field(default_factory=lambda: np.zeros(1))
    frequency: float = 10.0
    phase: float = 0.0
    children: tuple = ()

    def __post_init__(self):
        if self.kind not in DISTURBANCE_KINDS:
            raise ContractError(f"unknown disturbance kind {self.kind!r}; choose from {DISTURBANCE_KINDS}")
        object.__setattr__(self, "d0", _vec(self.d0, "d0"))
        object.__setattr__(self, "amplitude", _vec(self.amplitude, "amplitude"))
        if self.frequency < 0:
            raise ContractError("frequency must be >= 0")
        object.__setattr__(self, "children", tuple(self.children))
        if self.kind == "sum" and not self.children:
            raise ContractError("a 'sum' disturbance needs at least one child")

    def bound(self, n: int) -> float:
        """Declared sup-norm bound on ``|d_i(t)|`` over all t."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return float(np.max(np.abs(_broadcast(self.d0, n))))
        if self.kind == "sinusoid":
            return float(np.max(np.abs(_broadcast(self.amplitude, n))))
        return sum(child.bound(n) for child in self.children)


def disturbance_sample(spec: DisturbanceSpec, t: float, n: int) -> np.ndarray:
    if spec.kind == "zero":
        return np.zeros(n)
    if spec.kind == "constant":
        return _broadcast(spec.d0, n).copy()
    if spec.kind == "sinusoid":
        return _broadcast(spec.amplitude, n) * math.sin(2 * math.pi * spec.frequency * t + spec.phase)
    return sum((disturbance_sample(child, t, n) for child in spec.children), np.zeros(n))
