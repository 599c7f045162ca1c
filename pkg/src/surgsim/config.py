"""INI scenario files: parsing, overrides, validation and round-trip output.

A scenario file has the sections ``[scenario]``, ``[model]``,
``[controller]``, ``[trajectory]``, ``[disturbance]``, ``[initial]`` and
``[sim]``. Every key is optional and falls back to the
:class:`~surgsim.sim.ScenarioConfig` default. A ``sum`` disturbance lists its
parts in ``components = a, b`` and describes each one in a
``[disturbance.a]`` section.

Value syntax
    numbers ``2.5``; vectors ``1, 2``; matrices ``1, 0; 0, 1`` (rows split by
    ``;``); booleans ``true/false``. A gain given as a scalar means
    ``value * I`` and a vector means a diagonal matrix.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import fields
from importlib import resources
from pathlib import Path

import numpy as np

from .dynamics import MODELS, param_names
from .errors import ConfigError, ContractError
from .signals import DisturbanceSpec, TrajectorySpec
from .sim import METRIC_DOCS, ScenarioConfig

SECTIONS = ("scenario", "model", "controller", "trajectory", "disturbance", "initial", "sim")


# -- value parsing -----------------------------------------------------------------


def parse_number(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}", key) from None


def parse_int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}", key) from None


def parse_bool(text: str, key: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {text!r}", key)


def parse_array(text: str, key: str):
    """``"2"`` -> float, ``"1, 2"`` -> 1-D array, ``"1, 0; 0, 1"`` -> 2-D array."""
    rows = [r for r in text.replace("\n", " ").split(";")]
    try:
        parsed = [[float(v) for v in row.split(",") if v.strip()] for row in rows]
    except ValueError:
        raise ConfigError(f"{key}: could not parse numeric value {text!r}", key) from None
    parsed = [r for r in parsed if r]
    if not parsed:
        raise ConfigError(f"{key}: empty value", key)
    if len(rows) > 1:
        if len({len(r) for r in parsed}) != 1:
            raise ConfigError(f"{key}: matrix rows have different lengths", key)
        return np.array(parsed)
    if len(parsed[0]) == 1:
        return parsed[0][0]
    return np.array(parsed[0])


def format_value(value) -> str:
    """Inverse of the parsers; floats use ``repr`` so they round-trip exactly."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, str):
        return value
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return repr(float(arr))
    if arr.ndim == 1:
        return ", ".join(repr(float(v)) for v in arr)
    return "; ".join(", ".join(repr(float(v)) for v in row) for row in arr)


# -- schema ------------------------------------------------------------------------

# (section, key) -> (parser, ScenarioConfig/spec attribute, description)
_TEXT = lambda s, k: s.strip()  # noqa: E731

SCHEMA: dict[tuple[str, str], tuple] = {
    ("scenario", "name"): (_TEXT, "name", "free-form label copied into the log metadata"),
    ("model", "kind"): (_TEXT, "model", "planar | surgical"),
    ("model", "friction"): (parse_array, "friction", "viscous coefficients per joint (omit for frictionless)"),
    ("controller", "kind"): (_TEXT, "controller", "lyapunov_observer | workspace_lyapunov | inverse_dynamics_integral"),
    ("controller", "K_D"): (parse_array, "K_D", "damping gain (scalar, diagonal or matrix)"),
    ("controller", "K_I"): (parse_array, "K_I", "observer / integral gain"),
    ("controller", "Lambda"): (parse_array, "Lambda", "error-filter gain in 1/s"),
    ("controller", "observer"): (parse_bool, "observer", "enable the disturbance estimate (Lyapunov laws)"),
    ("controller", "d_hat0"): (parse_array, "d_hat0", "initial disturbance estimate"),
    ("controller", "xi_ddot"): (_TEXT, "xi_ddot", "analytic | backward (workspace law)"),
    ("controller", "damping"): (parse_number, "damping", "damped least-squares factor near singularities"),
    ("controller", "damping_threshold"): (parse_number, "damping_threshold", "sigma_min below which damping engages"),
    ("controller", "control_period"): (parse_number, "control_period", "zero-order-hold period in s (0 = continuous)"),
    ("initial", "q"): (None, "q0", "initial coordinates, or 'ik' to start on the reference"),
    ("initial", "qdot"): (parse_array, "qdot0", "initial velocities"),
    ("initial", "elbow"): (_TEXT, "elbow", "down | up inverse-kinematics branch"),
    ("sim", "dt"): (parse_number, "dt", "integration step in s"),
    ("sim", "duration"): (parse_number, "duration", "horizon in s"),
    ("sim", "decimation"): (parse_int, "decimation", "log every k-th step"),
    ("sim", "blowup"): (parse_number, "blowup", "state-norm bound that flags divergence"),
    ("sim", "settling_band"): (parse_number, "settling_band", "error band for the settling-time metric"),
    ("sim", "kernel"): (_TEXT, "kernel", "auto | generic (numpy path only)"),
}

TRAJECTORY_KEYS = {
    "kind": (_TEXT, "workspace_eq24 | joint_sinusoid | setpoint | workspace_circle"),
    "amplitude": (parse_array, "joint_sinusoid amplitude per joint"),
    "omega": (parse_array, "angular frequency in rad/s"),
    "phase": (parse_array, "phase in rad"),
    "offset": (parse_array, "joint_sinusoid offset"),
    "target": (parse_array, "setpoint target"),
    "space": (_TEXT, "setpoint space: joint | task"),
    "center": (parse_array, "workspace_circle centre in m"),
    "radius": (parse_number, "workspace_circle radius in m"),
}

DISTURBANCE_KEYS = {
    "kind": (_TEXT, "zero | constant | sinusoid | sum"),
    "d0": (parse_array, "constant value per joint"),
    "amplitude": (parse_array, "sinusoid amplitude per joint"),
    "frequency": (parse_number, "sinusoid frequency in Hz"),
    "phase": (parse_number, "sinusoid phase in rad"),
    "components": (_TEXT, "names of [disturbance.<name>] sections summed by kind = sum"),
}


def schema_reference() -> str:
    """Human-readable key listing, including the metrics written by ``run``."""
    lines = []
    current = None
    for (section, key), (_, _, doc) in SCHEMA.items():
        if section != current:
            lines.append(f"[{section}]")
            current = section
        lines.append(f"  {key:<18} {doc}")
    lines.append("[model] parameters")
    for name in MODELS:
        lines.append(f"  {name}: " + ", ".join(param_names(MODELS[name][1])))
    lines.append("[trajectory]")
    lines += [f"  {k:<18} {doc}" for k, (_, doc) in TRAJECTORY_KEYS.items()]
    lines.append("[disturbance] and [disturbance.<name>]")
    lines += [f"  {k:<18} {doc}" for k, (_, doc) in DISTURBANCE_KEYS.items()]
    lines.append("metrics.txt")
    lines += [f"  {k:<18} {doc}" for k, doc in METRIC_DOCS.items()]
    return "\n".join(lines)


# -- loading -----------------------------------------------------------------------


def _new_parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case sensitive (K_D vs k_d)
    return cp


def bundled_scenarios() -> list[str]:
    root = resources.files("surgsim") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def resolve_path(spec: str | Path) -> Path:
    """A file path, or a bundled scenario given as ``name`` or ``scenarios/name``."""
    path = Path(spec)
    if path.is_file():
        return path
    name = path.name[:-4] if path.name.endswith(".ini") else path.name
    candidate = resources.files("surgsim") / "scenarios" / f"{name}.ini"
    if candidate.is_file():
        return Path(str(candidate))
    raise FileNotFoundError(f"no config file or bundled scenario named {str(spec)!r}")


def read_ini(path: str | Path) -> configparser.ConfigParser:
    cp = _new_parser()
    with open(path) as fh:
        try:
            cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return cp


def parse_ini_text(text: str) -> configparser.ConfigParser:
    cp = _new_parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return cp


def apply_overrides(cp: configparser.ConfigParser, overrides) -> None:
    """Apply ``section.key=value`` strings (the section may itself contain dots)."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value", item)
        dotted, value = item.split("=", 1)
        dotted = dotted.strip()
        if "." not in dotted:
            raise ConfigError(f"override key {dotted!r} needs a section prefix", dotted)
        section, key = dotted.rsplit(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value.strip())


def _build_disturbance(cp, section: str, depth: int = 0) -> DisturbanceSpec:
    if depth > 8:
        raise ConfigError("disturbance components nest too deeply", section)
    if not cp.has_section(section):
        raise ConfigError(f"missing section [{section}]", section)
    kwargs = {}
    children = ()
    for key, raw in cp.items(section):
        dotted = f"{section}.{key}"
        if key not in DISTURBANCE_KEYS:
            raise ConfigError(f"unknown key {dotted!r}", dotted)
        if key == "components":
            names = [n.strip() for n in raw.split(",") if n.strip()]
            children = tuple(_build_disturbance(cp, f"disturbance.{n}", depth + 1) for n in names)
            continue
        kwargs[key] = DISTURBANCE_KEYS[key][0](raw, dotted)
    if children:
        kwargs["children"] = children
    try:
        return DisturbanceSpec(**kwargs)
    except ContractError as exc:
        raise ConfigError(f"[{section}]: {exc}", section) from None


def config_from_parser(cp: configparser.ConfigParser) -> ScenarioConfig:
    for section in cp.sections():
        if section not in SECTIONS and not section.startswith("disturbance."):
            raise ConfigError(f"unknown section [{section}]", section)
    kwargs: dict = {}
    model = cp.get("model", "kind", fallback="planar").strip()
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; choose from {sorted(MODELS)}", "model.kind")
    allowed_params = set(param_names(MODELS[model][1]))
    model_params = {}
    for section in SECTIONS:
        if section in ("trajectory", "disturbance") or not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            dotted = f"{section}.{key}"
            if section == "model" and (section, key) not in SCHEMA:
                if key not in allowed_params:
                    raise ConfigError(f"unknown key {dotted!r} for model {model!r}", dotted)
                model_params[key] = parse_number(raw, dotted)
                continue
            if (section, key) not in SCHEMA:
                raise ConfigError(f"unknown key {dotted!r}", dotted)
            parser, attr, _ = SCHEMA[(section, key)]
            if attr == "q0":
                value = raw.strip()
                kwargs[attr] = value if value.lower() in ("ik", "reference") else parse_array(value, dotted)
            else:
                kwargs[attr] = parser(raw, dotted)
    if "friction" in kwargs:
        kwargs["friction"] = np.atleast_1d(kwargs["friction"]).tolist()
    kwargs["model_params"] = model_params

    traj = {}
    if cp.has_section("trajectory"):
        for key, raw in cp.items("trajectory"):
            dotted = f"trajectory.{key}"
            if key not in TRAJECTORY_KEYS:
                raise ConfigError(f"unknown key {dotted!r}", dotted)
            traj[key] = TRAJECTORY_KEYS[key][0](raw, dotted)
    try:
        kwargs["trajectory"] = TrajectorySpec(**traj)
    except ContractError as exc:
        raise ConfigError(f"[trajectory]: {exc}", "trajectory") from None
    if cp.has_section("disturbance"):
        kwargs["disturbance"] = _build_disturbance(cp, "disturbance")
    return ScenarioConfig(**kwargs)


def load_config(source, overrides=None) -> ScenarioConfig:
    """Load a scenario from a path or bundled name and apply ``--set`` overrides."""
    cp = read_ini(resolve_path(source))
    apply_overrides(cp, overrides)
    return config_from_parser(cp)


def validate(cfg: ScenarioConfig) -> None:
    """Build the model, gains and initial state without integrating.

    Raises :class:`ConfigError` naming the offending key.
    """
    from .sim import ClosedLoop

    try:
        loop = ClosedLoop(cfg)
        loop.initial_state()
    except ConfigError as exc:
        key = exc.key
        if key in ("K_D", "K_I", "Lambda"):
            raise ConfigError(f"controller.{exc}", f"controller.{key}") from None
        raise
    except ContractError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:  # e.g. unreachable IK start
        raise ConfigError(f"initial state: {exc}", "initial.q") from None


# -- output ------------------------------------------------------------------------


def _disturbance_sections(spec: DisturbanceSpec, name: str, out: dict, counter: list) -> None:
    sec = {"kind": spec.kind}
    if spec.kind == "constant":
        sec["d0"] = format_value(spec.d0)
    elif spec.kind == "sinusoid":
        sec["amplitude"] = format_value(spec.amplitude)
        sec["frequency"] = format_value(spec.frequency)
        sec["phase"] = format_value(spec.phase)
    elif spec.kind == "sum":
        names = []
        for child in spec.children:
            counter[0] += 1
            child_name = f"c{counter[0]}"
            names.append(child_name)
            _disturbance_sections(child, f"disturbance.{child_name}", out, counter)
        sec["components"] = ", ".join(names)
    out[name] = sec


def config_to_ini(cfg: ScenarioConfig) -> str:
    """Serialize every setting; loading the result reproduces ``cfg`` exactly."""
    sections: dict[str, dict[str, str]] = {}
    for (section, key), (_, attr, _) in SCHEMA.items():
        value = getattr(cfg, attr)
        if attr == "q0":
            value = "ik" if value is None else value
        if attr == "friction" and value is None:
            continue
        sections.setdefault(section, {})[key] = format_value(value)
    for name, value in sorted(cfg.model_params.items()):
        sections["model"][name] = format_value(value)
    tr = cfg.trajectory
    traj = {"kind": tr.kind}
    for f in fields(TrajectorySpec):
        if f.name != "kind":
            traj[f.name] = format_value(getattr(tr, f.name))
    sections["trajectory"] = traj
    _disturbance_sections(cfg.disturbance, "disturbance", sections, [0])
    cp = _new_parser()
    order = list(SECTIONS) + sorted(s for s in sections if s not in SECTIONS)
    for name in order:
        if name in sections:
            cp[name] = sections[name]
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
