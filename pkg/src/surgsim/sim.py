"""Fixed-step closed-loop simulation, logging and metrics."""

from __future__ import annotations

import csv
import io
import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .control import (
    ControllerGains,
    FilteredError,
    ObserverState,
    inverse_dynamics_integral_control,
    lyapunov_control,
    lyapunov_diagnostics,
    reference_filter,
    workspace_control,
    workspace_filter,
)
from .dynamics import ManipulatorModel, make_model, spd_solve
from .errors import ConfigError, ContractError, DivergenceError, LogSchemaError
from .kinematics import DEFAULT_DAMPING, DEFAULT_DAMPING_THRESHOLD, smallest_singular_value
from .signals import (
    DisturbanceSpec,
    ReferenceSample,
    TrajectorySpec,
    disturbance_sample,
    reference_sample,
)

CONTROLLERS = ("lyapunov_observer", "workspace_lyapunov", "inverse_dynamics_integral")

# duck-typed stand-in for JointState in the hot loop (skips validation)
_State = namedtuple("_State", "q qdot")


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce one closed-loop run.

    ``q0`` set to ``None`` starts on the reference: at ``q_d(0)`` for joint
    references and at the elbow-down inverse-kinematics solution for task
    references. ``control_period`` > 0 switches to zero-order-hold control.
    ``kernel="auto"`` lets the planar arm use the scalar kernel in
    :mod:`surgsim.fastpath`; ``"generic"`` forces the numpy path.
    """

    model: str = "planar"
    model_params: dict = field(default_factory=dict)
    friction: list | None = None
    controller: str = "lyapunov_observer"
    K_D: object = 2.0
    K_I: object = 1.0
    Lambda: object = 2.0
    observer: bool = True
    d_hat0: object = 0.0
    xi_ddot: str = "analytic"
    damping: float = DEFAULT_DAMPING
    damping_threshold: float = DEFAULT_DAMPING_THRESHOLD
    control_period: float = 0.0
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    q0: object = None
    qdot0: object = 0.0
    elbow: str = "down"
    dt: float = 1e-3
    duration: float = 20.0
    decimation: int = 1
    blowup: float = 1e6
    settling_band: float = 1e-3
    kernel: str = "auto"
    name: str = "scenario"

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"unknown controller {self.controller!r}; choose from {CONTROLLERS}", "controller.kind")
        if not self.dt > 0:
            raise ConfigError("dt must be > 0", "sim.dt")
        if not self.duration >= self.dt:
            raise ConfigError("duration must be >= dt", "sim.duration")
        if int(self.decimation) != self.decimation or self.decimation < 1:
            raise ConfigError("decimation must be an integer >= 1", "sim.decimation")
        if self.xi_ddot not in ("analytic", "backward"):
            raise ConfigError("xi_ddot must be 'analytic' or 'backward'", "controller.xi_ddot")
        if self.control_period < 0:
            raise ConfigError("control_period must be >= 0", "controller.control_period")
        if self.elbow not in ("up", "down"):
            raise ConfigError("elbow must be 'up' or 'down'", "initial.elbow")
        if self.kernel not in ("auto", "generic"):
            raise ConfigError("kernel must be 'auto' or 'generic'", "sim.kernel")

    def build_model(self) -> ManipulatorModel:
        try:
            return make_model(self.model, self.model_params, self.friction)
        except TypeError as exc:
            raise ConfigError(f"bad model parameter: {exc}", "model") from None
        except ContractError as exc:
            raise ConfigError(str(exc), "model") from None

    def build_gains(self, n: int, task_dim: int | None = None) -> ControllerGains:
        from .control import as_gain

        # workspace law: K_D and Lambda act in task space
        m = task_dim if self.controller == "workspace_lyapunov" else n
        mats = {}
        for key, dim in (("K_D", m), ("Lambda", m), ("K_I", n)):
            try:
                mats[key] = as_gain(getattr(self, key), dim)
            except ContractError as exc:
                raise ConfigError(f"controller.{key}: {exc}", f"controller.{key}") from None
        return ControllerGains(mats["K_D"], mats["K_I"], mats["Lambda"])


# -- integration -----------------------------------------------------------------


def rk4_step(f, y: np.ndarray, t: float, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``y' = f(t, y)``."""
    if not dt > 0:
        raise ContractError("dt must be > 0")
    k1 = f(t, y)
    k2 = f(t + dt / 2, y + dt / 2 * k1)
    k3 = f(t + dt / 2, y + dt / 2 * k2)
    k4 = f(t + dt, y + dt * k3)
    out = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise DivergenceError(f"non-finite derivative at t={t}", t=t, state=y.copy())
    return out


def _solve2(A, b):
    a, c, e, f = A[0, 0], A[0, 1], A[1, 0], A[1, 1]
    det = a * f - c * e
    if det == 0.0:
        raise np.linalg.LinAlgError("singular matrix")
    return np.array([(f * b[0] - c * b[1]) / det, (a * b[1] - e * b[0]) / det])


def task_to_joint_reference(model: ManipulatorModel, ref: ReferenceSample, elbow: str = "down") -> ReferenceSample:
    """Map a task-space reference to joints through closed-form IK and ``J^-1``."""
    if not hasattr(model, "inverse_kinematics"):
        raise ConfigError(
            f"model {model.name!r} has no inverse kinematics; use a joint trajectory", "trajectory.kind"
        )
    q_d = model.inverse_kinematics(ref.pos, elbow)
    J = model.jacobian(q_d)
    solve = _solve2 if J.shape == (2, 2) else np.linalg.solve
    qdot_d = solve(J, ref.vel)
    qddot_d = solve(J, ref.acc - model.jacobian_dot(q_d, qdot_d) @ qdot_d)
    return ReferenceSample(q_d, qdot_d, qddot_d, "joint")


# -- log ---------------------------------------------------------------------------


class SimLog:
    """Column store of uniformly sampled signals.

    Vector signals are flattened into scalar columns ``name0, name1, ...``;
    :meth:`vector` stacks them back.
    """

    def __init__(self, columns: dict[str, np.ndarray] | None = None, meta: dict | None = None):
        self.columns = {k: np.asarray(v, dtype=float) for k, v in (columns or {}).items()}
        self.meta = dict(meta or {})

    def __getitem__(self, key) -> np.ndarray:
        try:
            return self.columns[key]
        except KeyError:
            raise LogSchemaError(f"missing column {key!r}") from None

    def __contains__(self, key):
        return key in self.columns

    def __len__(self):
        return len(self.columns["t"]) if "t" in self.columns else 0

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def vector(self, prefix: str) -> np.ndarray:
        cols = []
        i = 0
        while f"{prefix}{i}" in self.columns:
            cols.append(self.columns[f"{prefix}{i}"])
            i += 1
        if not cols:
            raise LogSchemaError(f"missing vector column {prefix!r}")
        return np.column_stack(cols)

    def has_vector(self, prefix: str) -> bool:
        return f"{prefix}0" in self.columns

    def to_csv(self, path=None) -> str:
        """Serialize with a header row and 17 significant digits."""
        buf = io.StringIO()
        names = self.names
        buf.write(",".join(names) + "\n")
        data = np.column_stack([self.columns[k] for k in names]) if names else np.zeros((0, 0))
        for row in data:
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "SimLog":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise LogSchemaError(f"{path} is empty")
        header, body = rows[0], rows[1:]
        data = np.array(body, dtype=float).reshape(len(body), len(header))
        return cls({name: data[:, i] for i, name in enumerate(header)})


# -- closed loop -----------------------------------------------------------------


class ClosedLoop:
    """Plant + controller + signals as a single ODE in ``y = [q, qdot, z]``.

    ``z`` is the observer estimate ``d_hat`` for the Lyapunov controllers and the
    error integral for the inverse-dynamics baseline.
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.model = config.build_model()
        n = self.n = self.model.n
        self.gains = config.build_gains(n, self.model.task_dim)
        self.traj = config.trajectory
        self.dist = config.disturbance
        if self.traj.space == "task" and self.traj.dimension(n) != self.model.task_dim:
            raise ConfigError(
                f"task trajectory has dimension {self.traj.dimension(n)} but model "
                f"{self.model.name!r} has a {self.model.task_dim}-D task space",
                "trajectory.kind",
            )
        if self.traj.space == "joint" and self.traj.dimension(n) != n:
            raise ConfigError(f"joint trajectory must have {n} entries", "trajectory")
        self.workspace = config.controller == "workspace_lyapunov"
        if self.workspace and self.traj.space != "task":
            raise ConfigError("workspace_lyapunov needs a task-space trajectory", "trajectory.kind")
        self.use_observer = config.controller != "inverse_dynamics_integral" and config.observer
        self._friction = bool(np.any(self.model.friction.coefficients))
        self._zero = np.zeros(n)
        self._ref_cache: dict = {}
        self._xi_prev = None
        self._xi_next = None
        self._xi_ddot_hold = None
        self._u_hold = None
        self._hold_due = True

    # references are pure in t; RK4 revisits t + dt/2 and t + dt
    def reference(self, t: float) -> tuple[ReferenceSample | None, ReferenceSample | None]:
        """``(task_ref, joint_ref)`` at time t; either may be None."""
        hit = self._ref_cache.get(t)
        if hit is not None:
            return hit
        raw = reference_sample(self.traj, t, self.n)
        if raw.space == "task":
            joint = None if self.workspace else task_to_joint_reference(self.model, raw, self.config.elbow)
            out = (raw, joint)
        else:
            out = (None, raw)
        if len(self._ref_cache) > 8:
            self._ref_cache.clear()
        self._ref_cache[t] = out
        return out

    def initial_state(self) -> np.ndarray:
        cfg, n = self.config, self.n
        if cfg.q0 is None or (isinstance(cfg.q0, str) and cfg.q0 in ("ik", "reference")):
            task, joint = self.reference(0.0)
            if joint is not None:
                q0 = joint.pos.copy()
            else:
                q0 = task_to_joint_reference(self.model, task, cfg.elbow).pos
        else:
            q0 = _broadcast(cfg.q0, n, "initial.q")
        qdot0 = _broadcast(cfg.qdot0, n, "initial.qdot")
        z0 = _broadcast(cfg.d_hat0, n, "controller.d_hat0") if self.use_observer else np.zeros(n)
        return np.concatenate([q0, qdot0, z0])

    def disturbance(self, t: float) -> np.ndarray:
        return self._zero if self.dist.kind == "zero" else disturbance_sample(self.dist, t, self.n)

    def evaluate(self, t: float, y: np.ndarray, step_start: bool = False):
        """Return ``(dy, u, sigma, d)`` for the stacked state ``y`` at time ``t``."""
        n = self.n
        q, qdot, z = y[:n], y[n : 2 * n], y[2 * n :]
        state = _State(q, qdot)
        model, gains, cfg = self.model, self.gains, self.config
        task_ref, joint_ref = self.reference(t)
        terms = model.dynamics_terms(q, qdot)
        d = self.disturbance(t)
        obs = ObserverState(z) if self.use_observer else None
        if self.workspace:
            xi_ddot = None
            if cfg.xi_ddot == "backward":
                if step_start:
                    we0 = workspace_filter(
                        model, state, task_ref, gains.Lambda, self._zero, cfg.damping, cfg.damping_threshold
                    )
                    xi_dot = we0.fe.xi_dot
                    prev = self._xi_prev
                    self._xi_ddot_hold = self._zero if prev is None else (xi_dot - prev) / self.control_dt()
                    self._xi_next = xi_dot
                xi_ddot = self._xi_ddot_hold
            we = workspace_filter(model, state, task_ref, gains.Lambda, xi_ddot, cfg.damping, cfg.damping_threshold)
            sigma = we.fe.sigma
            u = workspace_control(model, state, task_ref, gains, obs, we=we, terms=terms)
            zdot = gains.K_I @ sigma if self.use_observer else self._zero
        elif cfg.controller == "lyapunov_observer":
            fe = reference_filter(state, joint_ref, gains.Lambda)
            sigma = fe.sigma
            u = lyapunov_control(model, state, fe, gains, obs, terms=terms)
            zdot = gains.K_I @ sigma if self.use_observer else self._zero
        else:
            fe = reference_filter(state, joint_ref, gains.Lambda)
            sigma = fe.sigma
            u, _ = inverse_dynamics_integral_control(model, state, joint_ref, gains, z, terms=terms)
            zdot = fe.qtilde
        if cfg.control_period > 0:
            if step_start and self._hold_due:
                self._u_hold = u
            u = self._u_hold
        M, C, G = terms
        rhs = u + d - C @ qdot - G
        if self._friction:
            rhs = rhs - model.friction_force(qdot)
        qddot = spd_solve(M, rhs)
        return np.concatenate([qdot, qddot, zdot]), u, sigma, d

    def derivative(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.evaluate(t, y)[0]

    def control_dt(self) -> float:
        return self.config.control_period if self.config.control_period > 0 else self.config.dt

    def run(self) -> SimLog:
        from . import fastpath

        if self.config.kernel == "auto" and fastpath.supports(self):
            return fastpath.PlanarKernel(self).run()
        return self.run_generic()

    def run_generic(self) -> SimLog:
        cfg = self.config
        dt = cfg.dt
        steps = int(round(cfg.duration / dt))
        hold_every = max(1, int(round(cfg.control_period / dt))) if cfg.control_period > 0 else 1
        y = self.initial_state()
        samples = []
        self._xi_prev = None
        f = self.derivative
        blowup = cfg.blowup

        for k in range(steps + 1):
            t = k * dt
            self._hold_due = k % hold_every == 0
            k1, u, sigma, d = self.evaluate(t, y, step_start=True)
            if k % cfg.decimation == 0 or k == steps:
                samples.append((t, y, u, sigma, d))
            if k == steps:
                break
            h2 = 0.5 * dt
            # stage times written as multiples of dt so reference lookups hit the cache
            t_mid, t_end = (k + 0.5) * dt, (k + 1) * dt
            k2 = f(t_mid, y + h2 * k1)
            k3 = f(t_mid, y + h2 * k2)
            k4 = f(t_end, y + dt * k3)
            y_next = y + (dt / 6) * (k1 + 2 * (k2 + k3) + k4)
            if self._xi_next is not None:
                self._xi_prev = self._xi_next
            peak = np.max(np.abs(y_next))
            if not peak <= blowup:  # also catches NaN
                raise DivergenceError(
                    f"state left the blow-up bound {blowup:g} at t={t + dt:.6g}",
                    t=t,
                    state=y.copy(),
                    log=self.build_log(samples),
                )
            y = y_next
        return self.build_log(samples)

    def build_log(self, samples) -> SimLog:
        """Assemble logged columns, deriving V, energy and metrics inputs per sample."""
        cfg, n, model, gains = self.config, self.n, self.model, self.gains
        meta = {"name": cfg.name, "controller": cfg.controller, "model": cfg.model, "dt": cfg.dt}
        if not samples:
            return SimLog({}, meta)
        t = np.array([s[0] for s in samples])
        Y = np.array([s[1] for s in samples])
        U = np.array([s[2] for s in samples])
        S = np.array([s[3] for s in samples])
        D = np.array([s[4] for s in samples])
        Q, QD, Z = Y[:, :n], Y[:, n : 2 * n], Y[:, 2 * n :]
        d_hat = Z if self.use_observer else np.zeros_like(Z)
        K_I_inv = np.linalg.inv(gains.K_I)

        cols: dict[str, np.ndarray] = {"t": t}

        def put(name, arr):
            for i in range(arr.shape[1]):
                cols[f"{name}{i}"] = arr[:, i]

        put("q", Q)
        put("qdot", QD)
        refs = [self.reference(ti) for ti in t]
        task = [r[0] for r in refs]
        joint = [r[1] for r in refs]
        has_task = task[0] is not None
        if joint[0] is not None:
            put("qd", np.array([r.pos for r in joint]))
            put("qdotd", np.array([r.vel for r in joint]))
        X = np.array([model.forward_kinematics(q) for q in Q])
        Js = [model.jacobian(q) for q in Q]
        if has_task:
            Xd = np.array([r.pos for r in task])
            Xdd = np.array([r.vel for r in task])
            put("x", X)
            put("xd", Xd)
            err = np.linalg.norm(X - Xd, axis=1)
            Xdot = np.array([J @ qd for J, qd in zip(Js, QD)])
            errdot = np.linalg.norm(Xdot - Xdd, axis=1)
        else:
            Qd = np.array([r.pos for r in joint])
            Qdd = np.array([r.vel for r in joint])
            err = np.linalg.norm(Q - Qd, axis=1)
            errdot = np.linalg.norm(QD - Qdd, axis=1)
        put("sigma", S)
        put("u", U)
        put("d", D)
        put("d_hat", d_hat)
        if cfg.controller == "inverse_dynamics_integral":
            put("int_qtilde", Z)
        Ms = [model.mass_matrix(q) for q in Q]
        dtil = D - d_hat
        V = np.array([0.5 * s @ M @ s for s, M in zip(S, Ms)]) + 0.5 * np.einsum("ij,jk,ik->i", dtil, K_I_inv, dtil)
        if self.workspace:
            Vdot = np.array([-(J @ s) @ gains.K_D @ (J @ s) for J, s in zip(Js, S)])
        else:
            Vdot = -np.einsum("ij,jk,ik->i", S, gains.K_D, S)
        cols["V"] = V
        cols["Vdot_model"] = np.minimum(Vdot, 0.0)
        cols["energy"] = np.array(
            [0.5 * qd @ M @ qd + model.potential_energy(q) for q, qd, M in zip(Q, QD, Ms)]
        )
        cols["sigma_min"] = np.array([smallest_singular_value(J) for J in Js])
        cols["err"] = err
        cols["errdot"] = errdot
        return SimLog(cols, meta)


def _broadcast(value, n, key):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(n, arr[0])
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{key} must be a finite scalar or {n}-vector", key)
    return arr


# -- metrics -----------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    """Scalar summary of a run. Error metrics use the ``err`` column."""

    rms_error: float
    terminal_error: float
    final_error: float
    peak_error: float
    peak_control: float
    settling_time: float
    settled: bool
    observer_error: float
    min_sigma_min: float

    def as_dict(self) -> dict:
        return {
            "rms_error": self.rms_error,
            "terminal_error": self.terminal_error,
            "final_error": self.final_error,
            "peak_error": self.peak_error,
            "peak_control": self.peak_control,
            "settling_time": self.settling_time,
            "settled": int(self.settled),
            "observer_error": self.observer_error,
            "min_sigma_min": self.min_sigma_min,
        }


#: documented meaning of every metrics key written by the CLI
METRIC_DOCS = {
    "rms_error": "root-mean-square tracking error norm over the whole horizon",
    "terminal_error": "mean tracking error norm over the last 10% of samples",
    "final_error": "tracking error norm at the last sample",
    "peak_error": "maximum tracking error norm",
    "peak_control": "maximum Euclidean norm of the control input u",
    "settling_time": "first time after which the error stays inside the settling band (duration if never)",
    "settled": "1 if the error ends inside the settling band, else 0",
    "observer_error": "norm of d - d_hat at the last sample",
    "min_sigma_min": "smallest logged singular value of the task Jacobian",
}


def compute_metrics(log: SimLog, band: float = 1e-3) -> Metrics:
    if len(log) == 0:
        raise LogSchemaError("cannot compute metrics of an empty log")
    t = log["t"]
    err = log["err"]
    ntail = max(1, int(math.ceil(0.1 * err.size)))
    inside = err <= band
    if inside[-1]:
        outside = np.flatnonzero(~inside)
        settle = float(t[0]) if outside.size == 0 else float(t[outside[-1] + 1])
        settled = True
    else:
        settle, settled = float(t[-1]), False
    u = log.vector("u")
    d_err = log.vector("d")[-1] - log.vector("d_hat")[-1]
    return Metrics(
        rms_error=float(np.sqrt(np.mean(err**2))),
        terminal_error=float(np.mean(err[-ntail:])),
        final_error=float(err[-1]),
        peak_error=float(np.max(err)),
        peak_control=float(np.max(np.linalg.norm(u, axis=1))),
        settling_time=settle,
        settled=settled,
        observer_error=float(np.linalg.norm(d_err)),
        min_sigma_min=float(np.min(log["sigma_min"])) if "sigma_min" in log else 0.0,
    )


def run_scenario(config: ScenarioConfig) -> tuple[SimLog, Metrics]:
    """Integrate the closed loop and summarize it. Deterministic."""
    log = ClosedLoop(config).run()
    return log, compute_metrics(log, config.settling_band)
