#!/usr/bin/env python3
"""Integrator order on the harmonic oscillator and step-size sensitivity of a scenario.

    python3 scripts/step_size_study.py --scenario observer_tracking
"""

import argparse
import math
from dataclasses import replace

import numpy as np

from surgsim.config import load_config
from surgsim.sim import rk4_step, run_scenario


def oscillator_error(n):
    dt = 2 * math.pi / n
    y = np.array([1.0, 0.0])
    for k in range(n):
        y = rk4_step(lambda t, s: np.array([s[1], -s[0]]), y, k * dt, dt)
    return float(np.linalg.norm(y - [1.0, 0.0]))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="observer_tracking")
    ap.add_argument("--dts", type=float, nargs="+", default=[4e-3, 2e-3, 1e-3, 5e-4])
    args = ap.parse_args()

    print("oscillator, one period")
    prev = None
    for n in (25, 50, 100, 200, 400):
        e = oscillator_error(n)
        print(f"  steps {n:>4}  error {e:.3e}" + (f"  ratio {prev / e:.2f}" if prev else ""))
        prev = e

    print(f"\n{args.scenario}")
    base = load_config(args.scenario)
    for dt in args.dts:
        _, m = run_scenario(replace(base, dt=dt))
        print(f"  dt {dt:.1e}  terminal {m.terminal_error:.6e}  rms {m.rms_error:.6e}")


if __name__ == "__main__":
    main()
