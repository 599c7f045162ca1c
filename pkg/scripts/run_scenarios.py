#!/usr/bin/env python3
"""Run the bundled scenarios and write logs plus a metrics summary.

    python3 scripts/run_scenarios.py --out results/scenarios
"""

import argparse
import time
from pathlib import Path

from surgsim.cli import write_metrics
from surgsim.config import config_to_ini, load_config
from surgsim.sim import run_scenario

SCENARIOS = ("workspace_tracking", "observer_tracking", "baseline_tracking", "surgical_tracking")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/scenarios")
    ap.add_argument("--only", nargs="*", choices=SCENARIOS, default=list(SCENARIOS))
    args = ap.parse_args()
    root = Path(args.out)
    print(f"{'scenario':<22}{'terminal':>12}{'peak':>10}{'rms':>12}{'settle[s]':>11}{'wall[s]':>9}")
    for name in args.only:
        cfg = load_config(name)
        t0 = time.perf_counter()
        log, m = run_scenario(cfg)
        wall = time.perf_counter() - t0
        out = root / name
        out.mkdir(parents=True, exist_ok=True)
        log.to_csv(out / "log.csv")
        write_metrics(out / "metrics.txt", m.as_dict())
        (out / "config.resolved").write_text(config_to_ini(cfg))
        print(f"{name:<22}{m.terminal_error:>12.3e}{m.peak_error:>10.3f}{m.rms_error:>12.3e}"
              f"{m.settling_time:>11.2f}{wall:>9.2f}")


if __name__ == "__main__":
    main()
