import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import fd_gradient, fd_hessian, mdot_along_flow, planar_energies, rk4_free
from surgsim.dynamics import (
    FrictionModel,
    JointState,
    PlanarArm,
    PlanarArmParams,
    SurgicalArm,
    SurgicalArmParams,
    coriolis_matrix,
    forward_dynamics,
    friction_force,
    gravity_vector,
    kinetic_energy_components,
    make_model,
    mass_matrix,
    potential_energy,
    spd_solve,
    total_kinetic_energy,
)
from surgsim.errors import ContractError, ModelInvariantError

P = SurgicalArmParams()
ARM = SurgicalArm()
PLANAR = PlanarArm()

angle = st.floats(-math.pi, math.pi)
elev = st.floats(-math.pi / 2, math.pi / 2)
rho = st.floats(0.0, 0.25)
rate = st.floats(-5.0, 5.0)
surgical_q = st.tuples(angle, elev, angle, rho).map(np.array)
planar_q = st.tuples(angle, angle).map(np.array)
vec4 = st.tuples(rate, rate, rate, rate).map(np.array)
vec2 = st.tuples(rate, rate).map(np.array)


# -- parameters ---------------------------------------------------------------------


def test_default_values_converted_to_si():
    assert P.I1a == pytest.approx(32045.478e-6, rel=1e-15)
    assert P.l1 == pytest.approx(0.520)
    assert P.l2 == pytest.approx(0.300)
    assert (P.m1, P.m2, P.m3, P.m4) == (1.541, 1.613, 0.915, 0.089)


@pytest.mark.parametrize("field,value", [("m2", 0.0), ("I3a", -1e-6), ("l1", -0.1), ("g", 0.0)])
def test_surgical_params_reject_invalid(field, value):
    with pytest.raises(ContractError):
        SurgicalArmParams(**{field: value})


def test_planar_params_reject_com_outside_link():
    with pytest.raises(ContractError):
        PlanarArmParams(lc1=1.5)


def test_joint_state_checks():
    with pytest.raises(ContractError):
        JointState([0, 0], [0, 0, 0])
    with pytest.raises(ContractError):
        JointState([0, np.nan], [0, 0])
    assert JointState([1, 2, 3], [0, 0, 0]).n == 3


# -- energies -----------------------------------------------------------------------


def test_kinetic_energy_zero_at_rest():
    s = JointState([0.3, -0.2, 1.0, 0.1], np.zeros(4))
    assert kinetic_energy_components(P, s) == (0.0, 0.0, 0.0, 0.0)
    assert total_kinetic_energy(P, s) == 0.0


def test_azimuth_base_energy_matches_table_inertia():
    # T3 = I3a/2 with I3a = 4249.517 kg mm^2
    comps = kinetic_energy_components(P, JointState(np.zeros(4), [1.0, 0, 0, 0]))
    assert comps[2] == pytest.approx(2.1247585e-3, rel=1e-12)


def test_insertion_energy_is_translational_only():
    comps = kinetic_energy_components(P, JointState(np.zeros(4), [0, 0, 0, 1.0]))
    assert comps[0] == comps[2] == 0.0
    assert comps[1] + comps[3] == pytest.approx(0.5 * (1.613 + 0.089), rel=1e-14)
    assert comps[1] + comps[3] == pytest.approx(0.851)


def test_kinetic_energy_additive():
    a = JointState(np.zeros(4), [1.0, 0, 0, 0])
    b = JointState(np.zeros(4), [0, 0, 0, 1.0])
    # the two velocity directions do not couple at q = 0
    ab = JointState(np.zeros(4), [1.0, 0, 0, 1.0])
    assert total_kinetic_energy(P, ab) == pytest.approx(total_kinetic_energy(P, a) + total_kinetic_energy(P, b))


def test_kinetic_energy_dimension_checked():
    with pytest.raises(ContractError):
        kinetic_energy_components(P, JointState([0, 0], [0, 0]))


def test_potential_energy_hand_value():
    # 1.541*9.81*0.26 + 1.613*9.81*0.3 + 0.089*9.81*0.15
    expected = 9.81 * (1.541 * 0.26 + 1.613 * 0.3 + 0.089 * 0.15)
    assert potential_energy(P, np.zeros(4)) == pytest.approx(expected, rel=1e-14)
    assert potential_energy(P, np.zeros(4)) == pytest.approx(8.8085, abs=5e-5)


@given(rho)
def test_potential_vanishes_horizontal(r):
    assert abs(potential_energy(P, [0.0, math.pi / 2, 0.0, r])) < 1e-14


@given(surgical_q)
def test_potential_even_in_elevation(q):
    q2 = q.copy()
    q2[1] = -q2[1]
    assert potential_energy(P, q) == pytest.approx(potential_energy(P, q2), abs=1e-14)


def test_potential_dimension_checked():
    with pytest.raises(ContractError):
        potential_energy(P, [0.0, 0.0])


# -- mass matrix --------------------------------------------------------------------


def test_mass_matrix_roll_entry_at_origin():
    assert mass_matrix(ARM, np.zeros(4))[2, 2] == pytest.approx(2.681116e-3, rel=1e-14)


@given(surgical_q, vec4)
def test_kinetic_energy_is_quadratic_form_surgical(q, qd):
    T = ARM.total_kinetic_energy(q, qd)
    quad = 0.5 * qd @ ARM.mass_matrix(q) @ qd
    assert quad == pytest.approx(T, rel=1e-10, abs=1e-14)


@given(planar_q, vec2)
def test_kinetic_energy_is_quadratic_form_planar(q, qd):
    T, _ = planar_energies(PLANAR.params, q, qd)
    assert 0.5 * qd @ PLANAR.mass_matrix(q) @ qd == pytest.approx(T, rel=1e-10, abs=1e-14)


@given(surgical_q)
def test_mass_matrix_symmetric_positive_definite(q):
    M = ARM.mass_matrix(q)
    assert np.array_equal(M, M.T)
    np.linalg.cholesky(M)


def test_mass_matrix_matches_hessian_of_kinetic_energy(rng):
    for q in ARM.sample_coordinates(rng, 20):
        qd = rng.normal(size=4)
        H = fd_hessian(lambda v: ARM.total_kinetic_energy(q, v), qd)
        M = ARM.mass_matrix(q)
        assert np.linalg.norm(H - M) <= 1e-6 * np.linalg.norm(M)


def test_mass_partials_match_finite_differences(rng):
    for model in (ARM, PLANAR):
        for q in model.sample_coordinates(rng, 10):
            dM = model.mass_matrix_partials(q)
            for i in range(model.n):
                e = np.zeros(model.n)
                e[i] = 1e-6
                fd = (model.mass_matrix(q + e) - model.mass_matrix(q - e)) / 2e-6
                np.testing.assert_allclose(dM[:, :, i], fd, atol=1e-8)


# -- Coriolis -----------------------------------------------------------------------


@given(surgical_q)
def test_coriolis_zero_at_rest(q):
    assert np.all(coriolis_matrix(ARM, q, np.zeros(4)) == 0.0)


def test_skew_symmetry_with_finite_difference_mdot(rng):
    for model in (ARM, PLANAR):
        for _ in range(100):
            q = model.sample_coordinates(rng, 1)[0]
            qd = rng.normal(size=model.n)
            x = rng.normal(size=model.n)
            N = mdot_along_flow(model, q, qd) - 2 * model.coriolis_matrix(q, qd)
            assert abs(x @ N @ x) <= 1e-9


def test_mdot_equals_c_plus_ct(rng):
    for model in (ARM, PLANAR):
        for q in model.sample_coordinates(rng, 20):
            qd = rng.normal(size=model.n)
            C = model.coriolis_matrix(q, qd)
            np.testing.assert_allclose(mdot_along_flow(model, q, qd), C + C.T, atol=1e-6)


def test_planar_coriolis_matches_textbook_form():
    p = PLANAR.params
    q, qd = np.array([0.4, 1.1]), np.array([0.7, -1.3])
    h = -p.m2 * p.l1 * p.lc2 * math.sin(q[1])
    expected = np.array([[h * qd[1], h * (qd[0] + qd[1])], [-h * qd[0], 0.0]])
    np.testing.assert_allclose(PLANAR.coriolis_matrix(q, qd), expected, atol=1e-15)


def test_lagrange_equations_reproduced(rng):
    # d/dt dL/dqdot - dL/dq evaluated by finite differences of the geometric energies
    p = PLANAR.params
    for _ in range(10):
        q, qd, qdd = rng.normal(size=2), rng.normal(size=2), rng.normal(size=2)

        def dL_dqdot(s):
            qs, qds = q + s * qd + 0.5 * s * s * qdd, qd + s * qdd
            return fd_gradient(lambda v: planar_energies(p, qs, v)[0], qds, 1e-5)

        lhs = (dL_dqdot(1e-4) - dL_dqdot(-1e-4)) / 2e-4
        lhs -= fd_gradient(lambda v: planar_energies(p, v, qd)[0] - planar_energies(p, v, qd)[1], q, 1e-6)
        M, C, G = PLANAR.dynamics_terms(q, qd)
        np.testing.assert_allclose(lhs, M @ qdd + C @ qd + G, atol=1e-5)


# -- gravity ------------------------------------------------------------------------


@given(surgical_q)
def test_gravity_only_on_elevation_and_insertion(q):
    G = gravity_vector(ARM, q)
    assert G[0] == 0.0 and G[2] == 0.0


@given(rho)
def test_gravity_elevation_zero_when_upright(r):
    assert gravity_vector(ARM, [0.3, 0.0, -0.4, r])[1] == 0.0


def test_gravity_is_gradient_of_potential(rng):
    for q in ARM.sample_coordinates(rng, 20):
        np.testing.assert_allclose(ARM.gravity(q), fd_gradient(ARM.potential_energy, q), atol=1e-7)
    p = PLANAR.params
    for q in PLANAR.sample_coordinates(rng, 20):
        fd = fd_gradient(lambda v: planar_energies(p, v, np.zeros(2))[1], q)
        np.testing.assert_allclose(PLANAR.gravity(q), fd, atol=1e-7)


# -- friction -----------------------------------------------------------------------


def test_friction_default_zero():
    np.testing.assert_array_equal(friction_force(ARM, np.array([1.0, -2.0, 3.0, 0.5])), np.zeros(4))


def test_friction_diagonal_product():
    arm = SurgicalArm(friction=FrictionModel([0.1, 0.1, 0.1, 0.1]))
    np.testing.assert_allclose(friction_force(arm, np.array([1.0, 0, 0, 0])), [0.1, 0, 0, 0])


@given(vec4, st.lists(st.floats(0.01, 10.0), min_size=4, max_size=4))
def test_friction_dissipative(qd, coeffs):
    f = FrictionModel(coeffs).force(qd)
    assert np.all(np.sign(f) == np.sign(qd))
    assert f @ qd >= 0


def test_friction_rejects_negative():
    with pytest.raises(ContractError):
        FrictionModel([0.1, -0.1])


# -- forward dynamics ---------------------------------------------------------------


@given(surgical_q)
def test_gravity_compensation_holds_still(q):
    s = JointState(q, np.zeros(4))
    G = ARM.gravity(q)
    np.testing.assert_allclose(forward_dynamics(ARM, s, G, np.zeros(4)), 0.0, atol=1e-9)
    np.testing.assert_allclose(forward_dynamics(ARM, s, np.zeros(4), G), 0.0, atol=1e-9)


@given(planar_q, vec2, vec2)
def test_forward_dynamics_inverts_equation_of_motion(q, qd, tau):
    qdd = forward_dynamics(PLANAR, JointState(q, qd), tau, np.zeros(2))
    M, C, G = PLANAR.dynamics_terms(q, qd)
    np.testing.assert_allclose(M @ qdd + C @ qd + G, tau, atol=1e-9)


def test_forward_dynamics_rejects_nonfinite_input():
    s = JointState(np.zeros(2), np.zeros(2))
    with pytest.raises(ContractError):
        forward_dynamics(PLANAR, s, [np.inf, 0.0], np.zeros(2))
    with pytest.raises(ContractError):
        forward_dynamics(PLANAR, s, np.zeros(3), np.zeros(2))


def test_spd_solve_rejects_indefinite():
    with pytest.raises(ModelInvariantError):
        spd_solve(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones(2))
    with pytest.raises(ModelInvariantError):
        spd_solve(-np.eye(3), np.ones(3))


def test_spd_solve_matches_dense_solve(rng):
    for n in (2, 4):
        A = rng.normal(size=(n, n))
        M = A @ A.T + n * np.eye(n)
        b = rng.normal(size=n)
        np.testing.assert_allclose(spd_solve(M, b), np.linalg.solve(M, b), rtol=1e-12)


def _flow(model):
    n = model.n
    zero = np.zeros(n)
    return lambda y: np.concatenate([y[n:], forward_dynamics(model, JointState(y[:n], y[n:]), zero, zero)])


def _energy(model, y):
    n = model.n
    return 0.5 * y[n:] @ model.mass_matrix(y[:n]) @ y[n:] + model.potential_energy(y[:n])


def test_free_motion_conserves_energy_planar():
    y0 = np.array([0.3, 0.5, 0.0, 0.0])
    y1 = rk4_free(_flow(PLANAR), y0, 1e-4, 10000)
    E0, E1 = _energy(PLANAR, y0), _energy(PLANAR, y1)
    assert abs(E1 - E0) <= 1e-6 * abs(E0)


def test_viscous_friction_dissipates():
    arm = make_model("planar", friction=[0.5, 0.5])
    f = _flow(arm)
    y = np.array([0.3, 0.5, 1.0, -1.0])
    energies = [_energy(arm, y)]
    for _ in range(40):
        y = rk4_free(f, y, 1e-3, 25)
        energies.append(_energy(arm, y))
    assert np.all(np.diff(energies) <= 1e-9)
    assert energies[-1] < energies[0]


def test_make_model_unknown_name():
    with pytest.raises(ContractError):
        make_model("scara")
