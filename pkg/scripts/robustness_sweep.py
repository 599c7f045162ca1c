#!/usr/bin/env python3
"""Sweep the constant disturbance magnitude with the gains held fixed.

Runs the observer controller and the computed-torque-plus-integral baseline
on the same reference for d = s * [1, 1] and prints terminal and peak errors.

    python3 scripts/robustness_sweep.py --scales 1 10 100 --duration 40
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from surgsim.config import load_config
from surgsim.signals import DisturbanceSpec
from surgsim.sim import run_scenario


def job(item):
    scenario, scale, duration = item
    cfg = load_config(scenario)
    cfg = replace(cfg, disturbance=DisturbanceSpec("constant", d0=[scale, scale]), duration=duration or cfg.duration)
    log, m = run_scenario(cfg)
    err = np.linalg.norm(log.vector("x") - log.vector("xd"), axis=1)
    return scenario, scale, float(err[-1]), float(err.max()), m.settling_time


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scales", type=float, nargs="+", default=[1, 10, 100])
    ap.add_argument("--duration", type=float, default=None, help="override the 20 s horizon")
    ap.add_argument("--jobs", type=int, default=4)
    args = ap.parse_args()
    items = [(s, k, args.duration) for k in args.scales for s in ("observer_tracking", "baseline_tracking")]
    with ProcessPoolExecutor(args.jobs) as pool:
        rows = list(pool.map(job, items))
    print(f"{'controller':<16}{'scale':>7}{'terminal[m]':>13}{'peak[m]':>10}{'settle[s]':>11}")
    for scenario, scale, term, peak, settle in rows:
        print(f"{scenario.split('_')[1]:<16}{scale:>7g}{term:>13.3e}{peak:>10.3f}{settle:>11.2f}")


if __name__ == "__main__":
    main()
