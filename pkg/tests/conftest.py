import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from surgsim.config import load_config
from surgsim.sim import run_scenario

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion number -> list of (ok, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


@pytest.fixture(scope="session")
def observer_run():
    """Observer scenario with d = [10, 10]; shared by several modules."""
    cfg = load_config("observer_tracking")
    log, metrics = run_scenario(cfg)
    return cfg, log, metrics


@pytest.fixture(scope="session")
def workspace_run():
    import time

    cfg = load_config("workspace_tracking")
    t0 = time.perf_counter()
    log, metrics = run_scenario(cfg)
    return cfg, log, metrics, time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        ok = all(p[0] for p in parts)
        detail = "; ".join(p[1] for p in parts)
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def magnitude_runs(observer_run):
    """Observer scenario with d = s * [1, 1] for s in 1, 10, 100 (gains fixed)."""
    from dataclasses import replace

    from surgsim.signals import DisturbanceSpec

    cfg, log, metrics = observer_run
    out = {10: (log, metrics)}
    for scale in (1, 100):
        c = replace(cfg, disturbance=DisturbanceSpec("constant", d0=[scale, scale]), name=f"d{scale}")
        out[scale] = run_scenario(c)
    return out
