"""Scalar closed-loop kernel for the two-link planar arm.

Small numpy arrays cost about a microsecond per operation, which dominates a
2-DOF simulation. This module evaluates the same closed loop as
:class:`surgsim.sim.ClosedLoop` with plain floats: 2-vectors are tuples and
2x2 matrices are row-major 4-tuples. It covers continuous-time control with
the analytic ``xi_ddot``; other settings fall back to the numpy path.
``tests/test_fastpath.py`` checks both paths against each other.
"""

from __future__ import annotations

import math

import numpy as np

from .dynamics import PlanarArm
from .errors import ModelInvariantError


def _mat(A):
    return (float(A[0, 0]), float(A[0, 1]), float(A[1, 0]), float(A[1, 1]))


def supports(loop) -> bool:
    cfg = loop.config
    return (
        isinstance(loop.model, PlanarArm)
        and cfg.control_period == 0
        and (cfg.xi_ddot == "analytic" or cfg.controller != "workspace_lyapunov")
    )


class PlanarKernel:
    """Float-only derivative and RK4 step for a planar-arm :class:`ClosedLoop`."""

    def __init__(self, loop):
        self.loop = loop
        p = loop.model.params
        m = loop.model
        self.a, self.b, self.dd = m._a, m._b, m._d
        self.l1, self.l2 = p.l1, p.l2
        self.g1 = p.g * (p.m1 * p.lc1 + p.m2 * p.l1)
        self.g2 = p.g * p.m2 * p.lc2
        fr = m.friction.coefficients
        self.fr = (float(fr[0]), float(fr[1])) if fr.size else (0.0, 0.0)
        gains = loop.gains
        self.KD = _mat(gains.K_D)
        self.KI = _mat(gains.K_I)
        self.L = _mat(gains.Lambda)
        self.KP = _mat(gains.K_P)
        self.kind = loop.config.controller
        self.observer = loop.use_observer
        self.damping = loop.config.damping
        self.threshold = loop.config.damping_threshold
        self._ref = {}
        self._dist = {}

    def reference(self, t):
        hit = self._ref.get(t)
        if hit is None:
            task, joint = self.loop.reference(t)
            if self.kind == "workspace_lyapunov":
                hit = tuple(float(v) for v in (*task.pos, *task.vel, *task.acc))
            else:
                hit = tuple(float(v) for v in (*joint.pos, *joint.vel, *joint.acc))
            if len(self._ref) > 8:
                self._ref.clear()
            self._ref[t] = hit
        return hit

    def disturbance(self, t):
        loop = self.loop
        if loop.dist.kind == "zero":
            return 0.0, 0.0
        if loop.dist.kind == "constant":
            d = self._dist.get("c")
            if d is None:
                v = loop.disturbance(t)
                d = self._dist["c"] = (float(v[0]), float(v[1]))
            return d
        v = loop.disturbance(t)
        return float(v[0]), float(v[1])

    def evaluate(self, t, y):
        """Return ``(dy, u, sigma, d)`` as float tuples."""
        q1, q2, w1, w2, z1, z2 = y
        a, b, dd = self.a, self.b, self.dd
        c2, s2 = math.cos(q2), math.sin(q2)
        c1, s1 = math.cos(q1), math.sin(q1)
        c12, s12 = math.cos(q1 + q2), math.sin(q1 + q2)
        m11 = a + 2.0 * b * c2
        m12 = dd + b * c2
        m22 = dd
        h = -b * s2
        C11, C12, C21 = h * w2, h * (w1 + w2), -h * w1  # C22 = 0
        G2 = self.g2 * c12
        G1 = self.g1 * c1 + G2
        d1, d2 = self.disturbance(t)
        kind = self.kind

        if kind == "workspace_lyapunov":
            xd, yd, vxd, vyd, axd, ayd = self.reference(t)
            l1, l2 = self.l1, self.l2
            A1, A2, B1, B2 = l1 * c1, l2 * c12, l1 * s1, l2 * s12
            x, yy = A1 + A2, B1 + B2
            j11, j12, j21, j22 = -B1 - B2, -B2, A1 + A2, A2
            ws = w1 + w2
            jd11, jd12 = -A1 * w1 - A2 * ws, -A2 * ws
            jd21, jd22 = -B1 * w1 - B2 * ws, -B2 * ws
            det = j11 * j22 - j12 * j21
            fro2 = j11 * j11 + j12 * j12 + j21 * j21 + j22 * j22
            adet = abs(det)
            disc = math.sqrt(max(fro2 * fro2 - 4.0 * det * det, 0.0))
            smin = 0.0 if adet == 0.0 else math.sqrt(2.0 * det * det / (fro2 + disc))
            if smin < self.threshold:
                lam2 = self.damping**2
                # J^T (J J^T + lam^2 I)^-1
                a11 = j11 * j11 + j12 * j12 + lam2
                a12 = j11 * j21 + j12 * j22
                a22 = j21 * j21 + j22 * j22 + lam2
                ad = a11 * a22 - a12 * a12
                i11, i12, i22 = a22 / ad, -a12 / ad, a11 / ad
                p11 = j11 * i11 + j21 * i12
                p12 = j11 * i12 + j21 * i22
                p21 = j12 * i11 + j22 * i12
                p22 = j12 * i12 + j22 * i22
            else:
                p11, p12, p21, p22 = j22 / det, -j12 / det, -j21 / det, j11 / det
            L11, L12, L21, L22 = self.L
            et1, et2 = x - xd, yy - yd
            ev1 = j11 * w1 + j12 * w2 - vxd
            ev2 = j21 * w1 + j22 * w2 - vyd
            sx1 = vxd - (L11 * et1 + L12 * et2)
            sx2 = vyd - (L21 * et1 + L22 * et2)
            xi1 = p11 * sx1 + p12 * sx2
            xi2 = p21 * sx1 + p22 * sx2
            r1 = axd - (L11 * ev1 + L12 * ev2) - (jd11 * xi1 + jd12 * xi2)
            r2 = ayd - (L21 * ev1 + L22 * ev2) - (jd21 * xi1 + jd22 * xi2)
            xa1 = p11 * r1 + p12 * r2
            xa2 = p21 * r1 + p22 * r2
            sg1, sg2 = w1 - xi1, w2 - xi2
            # J^T K_D J (xi_dot - qdot) = -J^T K_D J sigma
            e1 = -(j11 * sg1 + j12 * sg2)
            e2 = -(j21 * sg1 + j22 * sg2)
            K11, K12, K21, K22 = self.KD
            f1 = K11 * e1 + K12 * e2
            f2 = K21 * e1 + K22 * e2
            u1 = m11 * xa1 + m12 * xa2 + C11 * xi1 + C12 * xi2 + G1 + j11 * f1 + j21 * f2
            u2 = m12 * xa1 + m22 * xa2 + C21 * xi1 + G2 + j12 * f1 + j22 * f2
            if self.observer:
                u1 -= z1
                u2 -= z2
                I11, I12, I21, I22 = self.KI
                zd1, zd2 = I11 * sg1 + I12 * sg2, I21 * sg1 + I22 * sg2
            else:
                zd1 = zd2 = 0.0
        else:
            qd1, qd2, vd1, vd2, ad1, ad2 = self.reference(t)
            e1, e2 = q1 - qd1, q2 - qd2
            ev1, ev2 = w1 - vd1, w2 - vd2
            if kind == "lyapunov_observer":
                L11, L12, L21, L22 = self.L
                xi1 = vd1 - (L11 * e1 + L12 * e2)
                xi2 = vd2 - (L21 * e1 + L22 * e2)
                xa1 = ad1 - (L11 * ev1 + L12 * ev2)
                xa2 = ad2 - (L21 * ev1 + L22 * ev2)
                sg1, sg2 = w1 - xi1, w2 - xi2
                K11, K12, K21, K22 = self.KD
                u1 = m11 * xa1 + m12 * xa2 + C11 * xi1 + C12 * xi2 + G1 - (K11 * sg1 + K12 * sg2)
                u2 = m12 * xa1 + m22 * xa2 + C21 * xi1 + G2 - (K21 * sg1 + K22 * sg2)
                if self.observer:
                    u1 -= z1
                    u2 -= z2
                    I11, I12, I21, I22 = self.KI
                    zd1, zd2 = I11 * sg1 + I12 * sg2, I21 * sg1 + I22 * sg2
                else:
                    zd1 = zd2 = 0.0
            else:
                L11, L12, L21, L22 = self.L
                sg1 = ev1 + L11 * e1 + L12 * e2
                sg2 = ev2 + L21 * e1 + L22 * e2
                K11, K12, K21, K22 = self.KD
                P11, P12, P21, P22 = self.KP
                I11, I12, I21, I22 = self.KI
                v1 = ad1 - (K11 * ev1 + K12 * ev2) - (P11 * e1 + P12 * e2) - (I11 * z1 + I12 * z2)
                v2 = ad2 - (K21 * ev1 + K22 * ev2) - (P21 * e1 + P22 * e2) - (I21 * z1 + I22 * z2)
                u1 = m11 * v1 + m12 * v2 + C11 * w1 + C12 * w2 + G1
                u2 = m12 * v1 + m22 * v2 + C21 * w1 + G2
                zd1, zd2 = e1, e2

        r1 = u1 + d1 - (C11 * w1 + C12 * w2) - G1 - self.fr[0] * w1
        r2 = u2 + d2 - C21 * w1 - G2 - self.fr[1] * w2
        # 2x2 Cholesky solve
        if not m11 > 0.0:
            raise ModelInvariantError("mass matrix is not positive definite")
        l11 = math.sqrt(m11)
        l21 = m12 / l11
        piv = m22 - l21 * l21
        if not piv > 0.0:
            raise ModelInvariantError("mass matrix is not positive definite")
        l22 = math.sqrt(piv)
        y0 = r1 / l11
        y1 = (r2 - l21 * y0) / l22
        acc2 = y1 / l22
        acc1 = (y0 - l21 * acc2) / l11
        return (w1, w2, acc1, acc2, zd1, zd2), (u1, u2), (sg1, sg2), (d1, d2)

    def run(self):
        loop = self.loop
        cfg = loop.config
        dt = cfg.dt
        steps = int(round(cfg.duration / dt))
        y = tuple(float(v) for v in loop.initial_state())
        samples = []
        ev = self.evaluate
        blowup = cfg.blowup
        h2, h6 = 0.5 * dt, dt / 6.0
        dec = cfg.decimation
        for k in range(steps + 1):
            t = k * dt
            k1, u, sg, d = ev(t, y)
            if k % dec == 0 or k == steps:
                samples.append((t, np.array(y), np.array(u), np.array(sg), np.array(d)))
            if k == steps:
                break
            t_mid, t_end = (k + 0.5) * dt, (k + 1) * dt
            k2 = ev(t_mid, tuple(a + h2 * b for a, b in zip(y, k1)))[0]
            k3 = ev(t_mid, tuple(a + h2 * b for a, b in zip(y, k2)))[0]
            k4 = ev(t_end, tuple(a + dt * b for a, b in zip(y, k3)))[0]
            y_next = tuple(
                a + h6 * (b1 + 2.0 * (b2 + b3) + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
            )
            peak = max(abs(v) for v in y_next)
            if not peak <= blowup:
                from .errors import DivergenceError

                raise DivergenceError(
                    f"state left the blow-up bound {blowup:g} at t={t + dt:.6g}",
                    t=t,
                    state=np.array(y),
                    log=loop.build_log(samples),
                )
            y = y_next
        return loop.build_log(samples)
