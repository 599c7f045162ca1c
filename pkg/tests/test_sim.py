import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import cumulative_trapezoid

from surgsim.config import load_config
from surgsim.dynamics import JointState, SurgicalArm, forward_dynamics
from surgsim.errors import ConfigError, ContractError, DivergenceError, LogSchemaError
from surgsim.signals import DisturbanceSpec, TrajectorySpec
from surgsim.sim import ScenarioConfig, SimLog, compute_metrics, rk4_step, run_scenario

# -- integrator ---------------------------------------------------------------------


def oscillator(t, y):
    return np.array([y[1], -y[0]])


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(1e-3, 0.5), st.integers(1, 50))
def test_rk4_exact_for_constant_velocity(q0, v, dt, steps):
    f = lambda t, y: np.array([y[1], 0.0])  # noqa: E731
    y = np.array([q0, v])
    for k in range(steps):
        y = rk4_step(f, y, k * dt, dt)
    assert y[0] == pytest.approx(q0 + v * steps * dt, abs=1e-12 * (1 + abs(q0) + abs(v) * steps * dt))
    assert y[1] == v


def _oscillator_error(n_steps):
    dt = 2 * math.pi / n_steps
    y = np.array([1.0, 0.0])
    for k in range(n_steps):
        y = rk4_step(oscillator, y, k * dt, dt)
    return np.linalg.norm(y - [1.0, 0.0])


def test_rk4_oscillator_one_period_accuracy():
    # dt close to 1e-3 while landing exactly on one period
    assert _oscillator_error(6283) <= 1e-10


def test_rk4_fourth_order_convergence():
    ratio = _oscillator_error(50) / _oscillator_error(100)
    assert abs(ratio - 16) <= 2


def test_rk4_rejects_bad_step_and_nonfinite():
    with pytest.raises(ContractError):
        rk4_step(oscillator, np.zeros(2), 0.0, 0.0)
    with pytest.raises(DivergenceError) as info, np.errstate(divide="ignore"):
        rk4_step(lambda t, y: y / 0.0, np.ones(2), 1.5, 0.1)
    assert info.value.t == 1.5


def test_energy_audit_surgical_free_fall():
    arm = SurgicalArm()
    zero = np.zeros(4)

    def f(t, y):
        return np.concatenate([y[4:], forward_dynamics(arm, JointState(y[:4], y[4:]), zero, zero)])

    y = np.array([0.0, 0.3, 0.0, 0.0, 0, 0, 0, 0])
    E = lambda y: arm.kinetic_energy(y[:4], y[4:]) + arm.potential_energy(y[:4])  # noqa: E731
    E0 = E(y)
    for k in range(10000):
        y = rk4_step(f, y, k * 1e-4, 1e-4)
    assert abs(E(y) - E0) / E0 <= 1e-6
    assert y[1] > 0.3  # it actually fell


# -- scenarios ----------------------------------------------------------------------


def on_trajectory_config(**kw):
    amp, w, ph = np.array([0.3, 0.2]), np.array([1.0, 2.0]), np.array([0.0, 0.5])
    return ScenarioConfig(
        trajectory=TrajectorySpec("joint_sinusoid", amplitude=amp, omega=w, phase=ph, offset=[0.2, 1.0]),
        qdot0=amp * w * np.cos(ph),
        duration=3.0,
        **kw,
    )


def test_feedforward_exact_when_starting_on_reference():
    log, m = run_scenario(on_trajectory_config(observer=False))
    assert m.rms_error <= 1e-6


def test_observer_scenario_meets_targets(observer_run):
    _, _, m = observer_run
    assert m.terminal_error <= 1e-3
    assert m.observer_error <= 0.2


def test_observer_disabled_is_worse(observer_run):
    cfg, _, m = observer_run
    _, m_off = run_scenario(replace(cfg, observer=False))
    assert m_off.terminal_error > m.terminal_error


def test_log_schema_and_uniform_time(observer_run):
    cfg, log, _ = observer_run
    lengths = {len(v) for v in log.columns.values()}
    assert lengths == {len(log)}
    assert len(log) == int(round(cfg.duration / cfg.dt)) + 1
    assert np.allclose(np.diff(log["t"]), cfg.dt, rtol=0, atol=1e-12)
    for name in ("q0", "qdot1", "qd0", "x0", "xd1", "sigma0", "u1", "d0", "d_hat1", "V", "Vdot_model", "energy",
                 "sigma_min", "err"):
        assert name in log
    assert all(np.all(np.isfinite(v)) for v in log.columns.values())


def test_decimation_keeps_constant_step():
    log, _ = run_scenario(replace(load_config("workspace_tracking"), duration=1.0, decimation=7))
    dt = np.diff(log["t"])
    # the final sample is always kept
    assert np.allclose(dt[:-1], 0.007)
    assert log["t"][-1] == pytest.approx(1.0)


def test_observer_integral_identity(observer_run):
    cfg, log, _ = observer_run
    integral = cumulative_trapezoid(log.vector("sigma"), log["t"], axis=0, initial=0.0)
    K_I = np.asarray(cfg.K_I) * np.eye(2)
    assert np.max(np.abs(log.vector("d_hat") - integral @ K_I.T)) <= 1e-6


def test_step_size_robustness(observer_run):
    cfg, _, m = observer_run
    _, m_half = run_scenario(replace(cfg, dt=5e-4))
    assert abs(m_half.terminal_error - m.terminal_error) < 0.05 * m.terminal_error


def test_deterministic_logs():
    cfg = replace(load_config("observer_tracking"), duration=2.0)
    a, _ = run_scenario(cfg)
    b, _ = run_scenario(cfg)
    assert a.to_csv() == b.to_csv()


def test_divergence_reports_prefix():
    cfg = replace(load_config("observer_tracking"), dt=0.2, K_D=500.0, duration=20.0)
    with pytest.raises(DivergenceError) as info:
        run_scenario(cfg)
    err = info.value
    assert err.log is not None and len(err.log) >= 1
    assert err.t < 20.0
    assert np.all(np.isfinite(err.state))


def test_zero_order_hold_runs_and_differs():
    cfg = replace(load_config("observer_tracking"), duration=2.0)
    a, ma = run_scenario(cfg)
    b, mb = run_scenario(replace(cfg, control_period=0.01))
    assert ma.rms_error != mb.rms_error
    # u is held piecewise constant over each 10-step window
    u = b.vector("u")
    assert np.all(u[1:10] == u[0])


def test_surgical_scenario_runs_on_generic_path():
    cfg = replace(load_config("surgical_tracking"), duration=0.5)
    log, m = run_scenario(cfg)
    assert log.vector("q").shape[1] == 4
    assert "x0" not in log and np.all(np.isfinite(log["V"]))


@pytest.mark.parametrize(
    "kw,key",
    [
        (dict(controller="pid"), "controller.kind"),
        (dict(dt=0.0), "sim.dt"),
        (dict(duration=1e-5), "sim.duration"),
        (dict(decimation=0), "sim.decimation"),
        (dict(xi_ddot="central"), "controller.xi_ddot"),
        (dict(elbow="left"), "initial.elbow"),
        (dict(kernel="numba"), "sim.kernel"),
    ],
)
def test_config_validation_names_key(kw, key):
    with pytest.raises(ConfigError) as info:
        ScenarioConfig(**kw)
    assert info.value.key == key


def test_workspace_law_needs_task_reference():
    cfg = ScenarioConfig(controller="workspace_lyapunov", trajectory=TrajectorySpec("setpoint", target=0.3))
    with pytest.raises(ConfigError):
        run_scenario(cfg)


def test_surgical_model_rejects_planar_path():
    with pytest.raises(ConfigError):
        run_scenario(ScenarioConfig(model="surgical"))


# -- metrics ------------------------------------------------------------------------


def metric_log(t, err):
    n = t.size
    z = np.zeros(n)
    return SimLog({"t": t, "err": err, "u0": z, "d0": z, "d_hat0": z})


def test_constant_error_metrics():
    t = np.linspace(0, 10, 1001)
    m = compute_metrics(metric_log(t, np.full(t.size, 0.25)))
    assert m.rms_error == pytest.approx(0.25) and m.terminal_error == pytest.approx(0.25)
    assert not m.settled and m.settling_time == 10.0


def test_zero_error_metrics():
    t = np.linspace(0, 10, 1001)
    m = compute_metrics(metric_log(t, np.zeros(t.size)))
    assert m.rms_error == m.terminal_error == m.peak_error == 0.0
    assert m.settled and m.settling_time == 0.0


def test_exponential_settling_time():
    dt = 1e-3
    t = np.arange(0, 20 + dt / 2, dt)
    e0 = 0.5
    m = compute_metrics(metric_log(t, e0 * np.exp(-2 * t)), band=1e-3)
    assert abs(m.settling_time - math.log(e0 / 1e-3) / 2) <= dt


def test_metrics_need_samples():
    with pytest.raises(LogSchemaError):
        compute_metrics(SimLog({}))


# -- log I/O ------------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    log, _ = run_scenario(replace(load_config("observer_tracking"), duration=0.05))
    path = tmp_path / "log.csv"
    log.to_csv(path)
    back = SimLog.from_csv(path)
    assert back.names == log.names
    for k in log.names:
        np.testing.assert_array_equal(back[k], log[k])
    assert path.read_text().splitlines()[0].startswith("t,q0,q1,qdot0")


def test_missing_column_raises():
    log = SimLog({"t": np.zeros(2)})
    with pytest.raises(LogSchemaError):
        log["sigma0"]
    with pytest.raises(LogSchemaError):
        log.vector("sigma")
    assert not log.has_vector("sigma")
