"""Command-line front end: ``surgsim run | compare | validate | list-models``.

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .dynamics import MODELS, param_names
from .errors import ConfigError, DivergenceError
from .sim import METRIC_DOCS, ScenarioConfig, compute_metrics, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("surgsim")


def write_metrics(path: Path, metrics: dict) -> None:
    with open(path, "w") as fh:
        for key in METRIC_DOCS:
            value = metrics[key]
            fh.write(f"{key} = {value if isinstance(value, int) else repr(float(value))}\n")


def read_metrics(path) -> dict[str, float]:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = float(v)
    return out


def _load(args, source) -> ScenarioConfig:
    cfg = cfgmod.load_config(source, args.set)
    cfgmod.validate(cfg)
    return cfg


def _write_run(out: Path, cfg: ScenarioConfig) -> int:
    """Run one scenario into ``out``; returns an exit code."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(cfgmod.config_to_ini(cfg))
    try:
        sim_log, metrics = run_scenario(cfg)
    except DivergenceError as exc:
        if exc.log is not None and len(exc.log):
            exc.log.to_csv(out / "log.csv")
            write_metrics(out / "metrics.txt", compute_metrics(exc.log, cfg.settling_band).as_dict())
        (out / "error.txt").write_text(f"diverged: {exc}\nlast valid t = {exc.t}\n")
        log.error("%s: %s", cfg.name, exc)
        return EXIT_DIVERGED
    sim_log.to_csv(out / "log.csv")
    write_metrics(out / "metrics.txt", metrics.as_dict())
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args, args.config[0])
    out = Path(args.out)
    code = _write_run(out, cfg)
    if code == EXIT_OK and not args.quiet:
        print((out / "metrics.txt").read_text(), end="")
    return code


def _shared_signature(cfg: ScenarioConfig) -> tuple:
    ini = cfgmod.parse_ini_text(cfgmod.config_to_ini(cfg))
    parts = []
    for section in ini.sections():
        if section == "model" or section.startswith(("trajectory", "disturbance")):
            parts.append((section, tuple(sorted(ini.items(section)))))
    parts.append(("sim", cfg.dt, cfg.duration, cfg.decimation))
    return tuple(parts)


def _variant_job(item):
    out, cfg = item
    return _write_run(out, cfg)


def cmd_compare(args) -> int:
    if len(args.config) < 2:
        raise ConfigError("compare needs at least two --config variants", "config")
    cfgs = [_load(args, c) for c in args.config]
    base = _shared_signature(cfgs[0])
    for c, src in zip(cfgs[1:], args.config[1:]):
        if _shared_signature(c) != base:
            raise ConfigError(
                f"variant {src!r} differs from {args.config[0]!r} in model, trajectory, disturbance or time grid",
                "config",
            )
    names, seen = [], {}
    for c in cfgs:
        k = seen.get(c.name, 0)
        seen[c.name] = k + 1
        names.append(c.name if k == 0 else f"{c.name}_{k}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(out / n, c) for n, c in zip(names, cfgs)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_variant_job, jobs))
    else:
        codes = [_variant_job(j) for j in jobs]

    rows, errors = [], {}
    for name, c, code in zip(names, cfgs, codes):
        mpath = out / name / "metrics.txt"
        m = read_metrics(mpath) if mpath.exists() else {}
        lpath = out / name / "log.csv"
        if lpath.exists():
            from .sim import SimLog

            lg = SimLog.from_csv(lpath)
            errors["t"] = lg["t"] if len(lg["t"]) > len(errors.get("t", ())) else errors["t"]
            errors[name] = lg["err"]
        rows.append((name, c, code, m))
    ref_peak = rows[0][3].get("peak_error", float("nan"))
    table = comparison_table(rows, ref_peak)
    (out / "comparison.txt").write_text(table)
    _write_errors(out / "errors.csv", names, errors)
    if not args.quiet:
        print(table, end="")
    return EXIT_DIVERGED if any(code == EXIT_DIVERGED for code in codes) else EXIT_OK


def comparison_table(rows, ref_peak: float) -> str:
    """Side-by-side metrics; ``peak_ratio`` is relative to the first variant."""
    head = ["variant", "controller", "status", "converged", "terminal_error", "peak_error", "peak_ratio",
            "larger_transient", "rms_error", "observer_error", "settling_time"]
    lines = ["  ".join(head)]
    for name, c, code, m in rows:
        status = "ok" if code == EXIT_OK else "diverged"
        terminal = m.get("terminal_error", float("nan"))
        peak = m.get("peak_error", float("nan"))
        ratio = peak / ref_peak if ref_peak > 0 else float("nan")
        converged = int(code == EXIT_OK and terminal <= c.settling_band)
        larger = int(code != EXIT_OK or ratio >= 2.0)
        cells = [name, c.controller, status, str(converged), f"{terminal:.6g}", f"{peak:.6g}", f"{ratio:.6g}",
                 str(larger), f"{m.get('rms_error', float('nan')):.6g}",
                 f"{m.get('observer_error', float('nan')):.6g}", f"{m.get('settling_time', float('nan')):.6g}"]
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


def parse_comparison(text: str) -> list[dict[str, str]]:
    lines = [ln.split() for ln in text.strip().splitlines()]
    return [dict(zip(lines[0], row)) for row in lines[1:]]


def _write_errors(path: Path, names, errors) -> None:
    t = errors.get("t")
    if t is None:
        path.write_text("t\n")
        return
    cols = [t]
    for n in names:
        e = errors.get(n, np.array([]))
        pad = np.full(len(t), np.nan)
        pad[: len(e)] = e
        cols.append(pad)
    data = np.column_stack(cols)
    with open(path, "w") as fh:
        fh.write(",".join(["t"] + [f"err_{n}" for n in names]) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def cmd_validate(args) -> int:
    cfg = _load(args, args.config[0])
    if not args.quiet:
        print(f"{cfg.name}: ok ({cfg.model}, {cfg.controller})")
    return EXIT_OK


def cmd_list_models(args) -> int:
    for name, (_, ptype) in MODELS.items():
        print(f"{name}: {', '.join(param_names(ptype))}")
    if not args.quiet:
        print("bundled scenarios: " + ", ".join(cfgmod.bundled_scenarios()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="surgsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, multi=False):
        sp.add_argument("--config", action="append", required=True,
                        help="INI file or bundled scenario name" + (" (repeat per variant)" if multi else ""))
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a dotted key, e.g. controller.K_D=4")
        sp.add_argument("--quiet", action="store_true")
        sp.add_argument("--seed", type=int, default=None, help="reserved; all scenarios are deterministic")

    sp = sub.add_parser("run", help="run one scenario")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="run controller variants side by side")
    common(sp, multi=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("validate", help="check a config without simulating")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("list-models", help="list models, parameters and bundled scenarios")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_list_models)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if getattr(args, "quiet", False) else logging.INFO,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"config error{key}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
