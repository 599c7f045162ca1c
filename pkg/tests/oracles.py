"""Independent reference computations used by the tests.

Nothing here calls the model's mass matrix, Coriolis matrix or gravity
vector; energies are rebuilt from link geometry and derivatives come from
finite differences.
"""

import math

import numpy as np


def planar_energies(p, q, qdot):
    """Kinetic and potential energy of the 2R arm from centre-of-mass velocities."""
    q1, q2 = q
    w1, w2 = qdot
    # COM positions and velocities
    v1 = p.lc1 * w1 * np.array([-math.sin(q1), math.cos(q1)])
    v2 = p.l1 * w1 * np.array([-math.sin(q1), math.cos(q1)]) + p.lc2 * (w1 + w2) * np.array(
        [-math.sin(q1 + q2), math.cos(q1 + q2)]
    )
    T = 0.5 * p.m1 * v1 @ v1 + 0.5 * p.m2 * v2 @ v2 + 0.5 * p.Izz1 * w1**2 + 0.5 * p.Izz2 * (w1 + w2) ** 2
    V = p.g * (p.m1 * p.lc1 * math.sin(q1) + p.m2 * (p.l1 * math.sin(q1) + p.lc2 * math.sin(q1 + q2)))
    return T, V


def fd_gradient(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_hessian(f, x, h=1e-4):
    """Central-difference Hessian; exact up to roundoff for quadratics."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
    return H


def fd_jacobian(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.column_stack(cols)


def fd_time_derivative(f, t, h=1e-3):
    """Five-point stencil, fourth-order accurate."""
    return (f(t - 2 * h) - 8 * f(t - h) + 8 * f(t + h) - f(t + 2 * h)) / (12 * h)


def mdot_along_flow(model, q, qdot, h=1e-3):
    """dM/dt along q + s*qdot at s = 0."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    return fd_time_derivative(lambda s: model.mass_matrix(q + s * qdot), 0.0, h)


def rk4_free(f, y0, dt, steps):
    y = np.asarray(y0, dtype=float)
    for _ in range(steps):
        k1 = f(y)
        k2 = f(y + dt / 2 * k1)
        k3 = f(y + dt / 2 * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y
