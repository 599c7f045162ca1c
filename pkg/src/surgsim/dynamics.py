"""Lagrangian manipulator models and disturbance-augmented forward dynamics.

Two concrete models are provided:

* :class:`SurgicalArm` -- the 4-DOF spherical-coordinate surgical arm with
  coordinates ``q = [theta, phi, alpha, rho]`` (azimuth, elevation, roll,
  insertion). Energies are built from the rod / insertion unit / azimuth base /
  instrument decomposition; parameters default to the prototype values.
* :class:`PlanarArm` -- the textbook two-link revolute arm moving in a
  vertical plane, used for the workspace tracking scenarios.

All quantities are SI. The equation of motion is::

    M(q) qddot + C(q, qdot) qdot + G(q) + R qdot = u + d
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.linalg

from .errors import ContractError, ModelInvariantError

KG_MM2 = 1e-6  # kg*mm^2 -> kg*m^2
MM = 1e-3


@dataclass(frozen=True)
class SurgicalArmParams:
    """Mass, inertia and length parameters of the surgical arm (SI units).

    The defaults are the prototype values converted from kg*mm^2 and mm.
    Note ``I4a`` belongs to the instrument *with* its accessories whereas
    ``m4`` and ``I4t`` are for the bare instrument; the values are kept as
    measured.
    """

    m1: float = 1.541
    m2: float = 1.613
    m3: float = 0.915
    m4: float = 0.089
    I1a: float = 32045.478 * KG_MM2
    I1t: float = 31429.513 * KG_MM2
    I2a: float = 6317.537 * KG_MM2
    I2t: float = 2401.198 * KG_MM2
    I3a: float = 4249.517 * KG_MM2
    I4a: float = 2681.116 * KG_MM2
    I4t: float = 1358.560 * KG_MM2
    l1: float = 520.0 * MM
    l2: float = 300.0 * MM
    g: float = 9.81

    def __post_init__(self):
        for name in ("m1", "m2", "m3", "m4"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be > 0")
        for name in ("I1a", "I1t", "I2a", "I2t", "I3a", "I4a", "I4t"):
            if not getattr(self, name) >= 0:
                raise ContractError(f"{name} must be >= 0")
        for name in ("l1", "l2", "g"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be > 0")


@dataclass(frozen=True)
class PlanarArmParams:
    """Two-link planar arm. Defaults: unit point masses at the link tips."""

    m1: float = 1.0
    m2: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    lc1: float = 1.0
    lc2: float = 1.0
    Izz1: float = 0.0
    Izz2: float = 0.0
    g: float = 9.81

    def __post_init__(self):
        for name in ("m1", "m2", "l1", "l2"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be > 0")
        if not (0 <= self.lc1 <= self.l1 and 0 <= self.lc2 <= self.l2):
            raise ContractError("centre of mass offsets must satisfy 0 <= lc_i <= l_i")
        if self.Izz1 < 0 or self.Izz2 < 0:
            raise ContractError("link inertias must be >= 0")
        if self.g < 0:
            raise ContractError("g must be >= 0")


def param_names(params_type) -> list[str]:
    return [f.name for f in fields(params_type)]


@dataclass(frozen=True)
class JointState:
    """Generalized coordinates and velocities of an n-DOF arm."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        qdot = np.asarray(self.qdot, dtype=float).reshape(-1)
        if q.shape != qdot.shape:
            raise ContractError(f"q has {q.size} entries but qdot has {qdot.size}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qdot))):
            raise ContractError("joint state contains non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)

    @property
    def n(self) -> int:
        return self.q.size


@dataclass(frozen=True)
class FrictionModel:
    """Viscous joint friction ``R qdot`` with a diagonal coefficient vector."""

    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ContractError("friction coefficients must be finite and >= 0")
        object.__setattr__(self, "coefficients", c)

    def force(self, qdot: np.ndarray) -> np.ndarray:
        if self.coefficients.size == 0:
            return np.zeros_like(qdot)
        if self.coefficients.size != qdot.size:
            raise ContractError("friction coefficient count does not match DOF")
        return self.coefficients * qdot


def christoffel_coriolis(dM: np.ndarray, qdot: np.ndarray) -> np.ndarray:
    """Coriolis matrix from mass-matrix partials via Christoffel symbols.

    ``dM[k, j, i]`` is ``dM_kj / dq_i``. Returns ``C`` with
    ``C_kj = sum_i 0.5 (dM_kj/dq_i + dM_ki/dq_j - dM_ij/dq_k) qdot_i`` so that
    ``Mdot - 2C`` is skew-symmetric.
    """
    a = dM @ qdot  # sum_i dM_kj/dq_i qdot_i
    b = np.einsum("kij,i->kj", dM, qdot)  # sum_i dM_ki/dq_j qdot_i
    c = np.einsum("ijk,i->kj", dM, qdot)  # sum_i dM_ij/dq_k qdot_i
    return 0.5 * (a + b - c)


class ManipulatorModel:
    """Base class for rigid manipulators in joint space.

    Subclasses provide ``mass_matrix``, ``mass_matrix_partials``, ``gravity``,
    ``potential_energy``, ``forward_kinematics`` and ``jacobian``. Instances are
    immutable after construction.
    """

    name = "abstract"
    n = 0
    task_dim = 0

    def __init__(self, params, friction: FrictionModel | None = None):
        self.params = params
        if friction is None:
            friction = FrictionModel(np.zeros(self.n))
        if friction.coefficients.size not in (0, self.n):
            raise ContractError(f"friction needs {self.n} coefficients")
        self.friction = friction

    def __repr__(self):
        return f"{type(self).__name__}({self.params!r})"

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise ContractError(f"{self.name} expects {self.n} coordinates, got shape {q.shape}")
        return q

    # -- to be supplied by subclasses -------------------------------------
    def mass_matrix(self, q) -> np.ndarray:
        raise NotImplementedError

    def mass_matrix_partials(self, q) -> np.ndarray:
        raise NotImplementedError

    def gravity(self, q) -> np.ndarray:
        raise NotImplementedError

    def potential_energy(self, q) -> float:
        raise NotImplementedError

    def forward_kinematics(self, q) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, q) -> np.ndarray:
        raise NotImplementedError

    # -- generic ----------------------------------------------------------
    def coriolis_matrix(self, q, qdot) -> np.ndarray:
        return christoffel_coriolis(self.mass_matrix_partials(q), np.asarray(qdot, dtype=float))

    def kinetic_energy(self, q, qdot) -> float:
        qdot = np.asarray(qdot, dtype=float)
        return 0.5 * float(qdot @ self.mass_matrix(q) @ qdot)

    def friction_force(self, qdot) -> np.ndarray:
        return self.friction.force(np.asarray(qdot, dtype=float))

    def jacobian_dot(self, q, qdot) -> np.ndarray:
        """Time derivative of the Jacobian along ``qdot`` (central difference)."""
        q = np.asarray(q, dtype=float)
        qdot = np.asarray(qdot, dtype=float)
        h = 1e-6
        return (self.jacobian(q + h * qdot) - self.jacobian(q - h * qdot)) / (2 * h)

    def dynamics_terms(self, q, qdot):
        """``(M, C, G)`` at one state; subclasses may fuse the evaluation."""
        return self.mass_matrix(q), self.coriolis_matrix(q, qdot), self.gravity(q)

    def task_terms(self, q, qdot):
        """``(x, J, Jdot)`` at one state; subclasses may fuse the evaluation."""
        return self.forward_kinematics(q), self.jacobian(q), self.jacobian_dot(q, qdot)

    def sample_coordinates(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError


class SurgicalArm(ManipulatorModel):
    """4-DOF surgical arm: azimuth theta, elevation phi, roll alpha, insertion rho.

    Elevation is measured from the vertical, so the potential energy scales
    with ``cos(phi)``. The tool tip sits at radius ``l2 - rho`` along the rod.
    """

    name = "surgical"
    n = 4
    task_dim = 3
    #: sampling box for invariant checks (theta, phi, alpha, rho)
    coordinate_box = ((-math.pi, math.pi), (-math.pi / 2, math.pi / 2), (-math.pi, math.pi), (0.0, 0.25))

    def __init__(self, params: SurgicalArmParams | None = None, friction: FrictionModel | None = None):
        super().__init__(params or SurgicalArmParams(), friction)
        p = self.params
        self._ia = p.I1a + p.I2a + p.I4a
        self._jt0 = p.I1t + p.m1 * (p.l1 / 2) ** 2 + p.I2t + p.I4t

    def _transverse(self, rho):
        """Transverse inertia about the elevation axis and its rho-derivative."""
        p = self.params
        jt = self._jt0 + p.m2 * (p.l2 - rho) ** 2 + p.m4 * (p.l2 / 2 - rho) ** 2
        djt = -2.0 * p.m2 * (p.l2 - rho) - 2.0 * p.m4 * (p.l2 / 2 - rho)
        return jt, djt

    def kinetic_energy_components(self, q, qdot) -> tuple[float, float, float, float]:
        """Kinetic energies of rod, insertion unit, azimuth base and instrument."""
        p = self.params
        q = self.check_q(q)
        qdot = self.check_q(qdot)
        _, phi, _, rho = q
        thd, phd, ald, rhd = qdot
        c, s = math.cos(phi), math.sin(phi)
        swing = phd**2 + (-thd * s) ** 2
        t1 = 0.5 * p.I1a * (thd * c) ** 2 + 0.5 * (p.I1t + p.m1 * (p.l1 / 2) ** 2) * swing
        t2 = (
            0.5 * p.I2a * (thd * c) ** 2
            + 0.5 * (p.I2t + p.m2 * (p.l2 - rho) ** 2) * swing
            + 0.5 * p.m2 * rhd**2
        )
        t3 = 0.5 * p.I3a * thd**2
        t4 = (
            0.5 * p.I4a * (thd * c + ald) ** 2
            + 0.5 * (p.I4t + p.m4 * (p.l2 / 2 - rho) ** 2) * swing
            + 0.5 * p.m4 * rhd**2
        )
        return t1, t2, t3, t4

    def total_kinetic_energy(self, q, qdot) -> float:
        return sum(self.kinetic_energy_components(q, qdot))

    def potential_energy(self, q) -> float:
        p = self.params
        _, phi, _, rho = self.check_q(q)
        arm = p.m1 * p.l1 / 2 + p.m2 * (p.l2 - rho) + p.m4 * (p.l2 / 2 - rho)
        return p.g * arm * math.cos(phi)

    def mass_matrix(self, q) -> np.ndarray:
        p = self.params
        _, phi, _, rho = self.check_q(q)
        c, s = math.cos(phi), math.sin(phi)
        jt, _ = self._transverse(rho)
        m_tt = self._ia * c * c + jt * s * s + p.I3a
        m_ta = p.I4a * c
        return np.array(
            [
                [m_tt, 0.0, m_ta, 0.0],
                [0.0, jt, 0.0, 0.0],
                [m_ta, 0.0, p.I4a, 0.0],
                [0.0, 0.0, 0.0, p.m2 + p.m4],
            ]
        )

    def mass_matrix_partials(self, q) -> np.ndarray:
        p = self.params
        _, phi, _, rho = self.check_q(q)
        c, s = math.cos(phi), math.sin(phi)
        jt, djt = self._transverse(rho)
        dM = np.zeros((4, 4, 4))
        # d/dphi
        dM[0, 0, 1] = 2.0 * s * c * (jt - self._ia)
        dM[0, 2, 1] = dM[2, 0, 1] = -p.I4a * s
        # d/drho
        dM[0, 0, 3] = djt * s * s
        dM[1, 1, 3] = djt
        return dM

    def gravity(self, q) -> np.ndarray:
        p = self.params
        _, phi, _, rho = self.check_q(q)
        arm = p.m1 * p.l1 / 2 + p.m2 * (p.l2 - rho) + p.m4 * (p.l2 / 2 - rho)
        return np.array(
            [0.0, -p.g * arm * math.sin(phi), 0.0, -p.g * (p.m2 + p.m4) * math.cos(phi)]
        )

    def forward_kinematics(self, q) -> np.ndarray:
        th, phi, _, rho = self.check_q(q)
        r = self.params.l2 - rho
        return r * np.array([math.sin(phi) * math.cos(th), math.sin(phi) * math.sin(th), math.cos(phi)])

    def jacobian(self, q) -> np.ndarray:
        th, phi, _, rho = self.check_q(q)
        r = self.params.l2 - rho
        ct, st, cp, sp = math.cos(th), math.sin(th), math.cos(phi), math.sin(phi)
        return np.array(
            [
                [-r * sp * st, r * cp * ct, 0.0, -sp * ct],
                [r * sp * ct, r * cp * st, 0.0, -sp * st],
                [0.0, -r * sp, 0.0, -cp],
            ]
        )

    def jacobian_dot(self, q, qdot) -> np.ndarray:
        th, phi, _, rho = self.check_q(q)
        thd, phd, _, rhd = self.check_q(qdot)
        r = self.params.l2 - rho
        rd = -rhd
        ct, st, cp, sp = math.cos(th), math.sin(th), math.cos(phi), math.sin(phi)
        u_th = np.array([-sp * st, sp * ct, 0.0])
        u_ph = np.array([cp * ct, cp * st, -sp])
        du_th = np.array([-sp * ct, -sp * st, 0.0]) * thd + np.array([-cp * st, cp * ct, 0.0]) * phd
        du_ph = np.array([-cp * st, cp * ct, 0.0]) * thd + np.array([-sp * ct, -sp * st, -cp]) * phd
        du = u_th * thd + u_ph * phd
        return np.column_stack([rd * u_th + r * du_th, rd * u_ph + r * du_ph, np.zeros(3), -du])

    def sample_coordinates(self, rng, size):
        lo, hi = np.array(self.coordinate_box).T
        return rng.uniform(lo, hi, size=(size, self.n))


class PlanarArm(ManipulatorModel):
    """Two-link revolute arm in a vertical plane (y up)."""

    name = "planar"
    n = 2
    task_dim = 2
    coordinate_box = ((-math.pi, math.pi), (-math.pi, math.pi))

    def __init__(self, params: PlanarArmParams | None = None, friction: FrictionModel | None = None):
        super().__init__(params or PlanarArmParams(), friction)
        p = self.params
        self._a = p.m1 * p.lc1**2 + p.Izz1 + p.m2 * (p.l1**2 + p.lc2**2) + p.Izz2
        self._b = p.m2 * p.l1 * p.lc2
        self._d = p.m2 * p.lc2**2 + p.Izz2

    def mass_matrix(self, q) -> np.ndarray:
        q = self.check_q(q)
        c2 = math.cos(q[1])
        m12 = self._d + self._b * c2
        return np.array([[self._a + 2.0 * self._b * c2, m12], [m12, self._d]])

    def mass_matrix_partials(self, q) -> np.ndarray:
        q = self.check_q(q)
        s2 = math.sin(q[1])
        dM = np.zeros((2, 2, 2))
        dM[0, 0, 1] = -2.0 * self._b * s2
        dM[0, 1, 1] = dM[1, 0, 1] = -self._b * s2
        return dM

    def coriolis_matrix(self, q, qdot) -> np.ndarray:
        # closed form of the Christoffel construction
        q = self.check_q(q)
        h = -self._b * math.sin(q[1])
        qd1, qd2 = qdot
        return np.array([[h * qd2, h * (qd1 + qd2)], [-h * qd1, 0.0]])

    def potential_energy(self, q) -> float:
        p = self.params
        q1, q2 = self.check_q(q)
        return p.g * (p.m1 * p.lc1 * math.sin(q1) + p.m2 * (p.l1 * math.sin(q1) + p.lc2 * math.sin(q1 + q2)))

    def gravity(self, q) -> np.ndarray:
        p = self.params
        q1, q2 = self.check_q(q)
        c12 = math.cos(q1 + q2)
        g2 = p.g * p.m2 * p.lc2 * c12
        return np.array([p.g * (p.m1 * p.lc1 + p.m2 * p.l1) * math.cos(q1) + g2, g2])

    def forward_kinematics(self, q) -> np.ndarray:
        p = self.params
        q1, q2 = self.check_q(q)
        return np.array(
            [p.l1 * math.cos(q1) + p.l2 * math.cos(q1 + q2), p.l1 * math.sin(q1) + p.l2 * math.sin(q1 + q2)]
        )

    def jacobian(self, q) -> np.ndarray:
        p = self.params
        q1, q2 = self.check_q(q)
        s1, c1 = math.sin(q1), math.cos(q1)
        s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
        return np.array(
            [[-p.l1 * s1 - p.l2 * s12, -p.l2 * s12], [p.l1 * c1 + p.l2 * c12, p.l2 * c12]]
        )

    def jacobian_dot(self, q, qdot) -> np.ndarray:
        p = self.params
        q1, q2 = self.check_q(q)
        qd1, qd2 = qdot
        w = qd1 + qd2
        s1, c1 = math.sin(q1), math.cos(q1)
        s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
        return np.array(
            [
                [-p.l1 * c1 * qd1 - p.l2 * c12 * w, -p.l2 * c12 * w],
                [-p.l1 * s1 * qd1 - p.l2 * s12 * w, -p.l2 * s12 * w],
            ]
        )

    def dynamics_terms(self, q, qdot):
        p = self.params
        q1, q2 = q
        qd1, qd2 = qdot
        c2, s2 = math.cos(q2), math.sin(q2)
        c12 = math.cos(q1 + q2)
        m12 = self._d + self._b * c2
        h = -self._b * s2
        g2 = p.g * p.m2 * p.lc2 * c12
        return (
            np.array([[self._a + 2.0 * self._b * c2, m12], [m12, self._d]]),
            np.array([[h * qd2, h * (qd1 + qd2)], [-h * qd1, 0.0]]),
            np.array([p.g * (p.m1 * p.lc1 + p.m2 * p.l1) * math.cos(q1) + g2, g2]),
        )

    def task_terms(self, q, qdot):
        p = self.params
        q1, q2 = q
        qd1, qd2 = qdot
        w = qd1 + qd2
        s1, c1 = math.sin(q1), math.cos(q1)
        s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
        a1, a2, b1, b2 = p.l1 * c1, p.l2 * c12, p.l1 * s1, p.l2 * s12
        return (
            np.array([a1 + a2, b1 + b2]),
            np.array([[-b1 - b2, -b2], [a1 + a2, a2]]),
            np.array([[-a1 * qd1 - a2 * w, -a2 * w], [-b1 * qd1 - b2 * w, -b2 * w]]),
        )

    def inverse_kinematics(self, x, elbow: str = "down") -> np.ndarray:
        """Closed-form IK. ``elbow='down'`` takes the ``q2 >= 0`` branch."""
        from .errors import ReachabilityError

        p = self.params
        x = np.asarray(x, dtype=float)
        r2 = float(x @ x)
        c2 = (r2 - p.l1**2 - p.l2**2) / (2 * p.l1 * p.l2)
        if not -1.0 - 1e-12 <= c2 <= 1.0 + 1e-12:
            raise ReachabilityError(f"target {x.tolist()} is outside the annulus reachable by the arm")
        c2 = min(1.0, max(-1.0, c2))
        s2 = math.sqrt(1.0 - c2 * c2)
        if elbow != "down":
            s2 = -s2
        q2 = math.atan2(s2, c2)
        q1 = math.atan2(x[1], x[0]) - math.atan2(p.l2 * s2, p.l1 + p.l2 * c2)
        return np.array([q1, q2])

    def sample_coordinates(self, rng, size):
        lo, hi = np.array(self.coordinate_box).T
        return rng.uniform(lo, hi, size=(size, self.n))


MODELS = {"surgical": (SurgicalArm, SurgicalArmParams), "planar": (PlanarArm, PlanarArmParams)}


def make_model(name: str, params: dict | None = None, friction=None) -> ManipulatorModel:
    """Build a registered model from its name and a (partial) parameter dict."""
    try:
        cls, ptype = MODELS[name]
    except KeyError:
        raise ContractError(f"unknown model {name!r}; choose one of {sorted(MODELS)}") from None
    fr = None if friction is None else FrictionModel(friction)
    return cls(ptype(**(params or {})), fr)


# -- module-level operations ---------------------------------------------------


def kinetic_energy_components(params: SurgicalArmParams, state: JointState):
    if state.n != 4:
        raise ContractError(f"surgical arm needs 4 coordinates, got {state.n}")
    return SurgicalArm(params).kinetic_energy_components(state.q, state.qdot)


def total_kinetic_energy(params: SurgicalArmParams, state: JointState) -> float:
    return sum(kinetic_energy_components(params, state))


def potential_energy(params: SurgicalArmParams, q) -> float:
    return SurgicalArm(params).potential_energy(q)


def mass_matrix(model: ManipulatorModel, q) -> np.ndarray:
    return model.mass_matrix(q)


def coriolis_matrix(model: ManipulatorModel, q, qdot) -> np.ndarray:
    return model.coriolis_matrix(q, qdot)


def gravity_vector(model: ManipulatorModel, q) -> np.ndarray:
    return model.gravity(q)


def friction_force(model: ManipulatorModel, qdot) -> np.ndarray:
    return model.friction_force(qdot)


def spd_solve(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``M x = b`` for symmetric positive-definite ``M`` by Cholesky."""
    if M.shape == (2, 2):
        # unrolled factorization; LAPACK call overhead dominates at this size
        a, c, e = float(M[0, 0]), float(M[1, 0]), float(M[1, 1])
        if not a > 0.0:
            raise ModelInvariantError("mass matrix is not positive definite")
        l11 = math.sqrt(a)
        l21 = c / l11
        p = e - l21 * l21
        if not p > 0.0:
            raise ModelInvariantError("mass matrix is not positive definite")
        l22 = math.sqrt(p)
        y0 = b[0] / l11
        y1 = (b[1] - l21 * y0) / l22
        x1 = y1 / l22
        return np.array([(y0 - l21 * x1) / l11, x1])
    try:
        factor = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ModelInvariantError(f"mass matrix is not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def forward_dynamics(model: ManipulatorModel, state: JointState, u, d) -> np.ndarray:
    """Joint accelerations of ``M qddot + C qdot + G + R qdot = u + d``."""
    q, qdot = state.q, state.qdot
    u = np.asarray(u, dtype=float)
    d = np.asarray(d, dtype=float)
    if u.shape != (model.n,) or d.shape != (model.n,):
        raise ContractError(f"u and d must have {model.n} entries")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(d))):
        raise ContractError("non-finite input or disturbance")
    return accelerations(model, q, qdot, u + d)


def accelerations(model: ManipulatorModel, q, qdot, tau) -> np.ndarray:
    """Unchecked hot path of :func:`forward_dynamics` for the integrator."""
    rhs = tau - model.coriolis_matrix(q, qdot) @ qdot - model.gravity(q) - model.friction_force(qdot)
    return spd_solve(model.mass_matrix(q), rhs)
