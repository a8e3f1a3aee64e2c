"""Experiment configuration: TOML (or a JSON config echo) to dataclasses."""
from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamics import FlowParams
from .errors import ConfigError, ProblemFileError
from .operators import problem_from_dict
from .primal_dual import quadratic_problem
from .problems import REGISTRY

__all__ = [
    "ExperimentConfig",
    "ScheduleSpec",
    "CheckToggles",
    "load_config",
    "config_from_dict",
    "resolve_problem",
]


@dataclass
class ScheduleSpec:
    t_end: float = 1e4
    points_per_decade: int = 50


@dataclass
class CheckToggles:
    path_checks: bool = True
    energy: bool = True
    certify: bool = True
    rates: bool = True
    rate_window: tuple = (1e2, 1e4)
    path_points: int = 50
    certify_t_max: float = 1e6


@dataclass
class ExperimentConfig:
    name: str
    problem: dict  # {"builtin": name} | {"file": path} | inline problem-file dict | qp dict
    params: FlowParams
    u0: Optional[list] = None
    v0: Optional[list] = None
    random_init_scale: float = 0.0
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    rtol: float = 1e-10
    atol: float = 1e-12
    checks: CheckToggles = field(default_factory=CheckToggles)
    baseline: bool = False
    constants: dict = field(default_factory=dict)  # overrides for the proof constants
    output_dir: str = "tikhoflow_out"
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checks"]["rate_window"] = list(self.checks.rate_window)
        return d


_TOP = {"name", "problem", "params", "init", "schedule", "integrator", "checks", "baseline",
        "constants", "output_dir", "seed"}


def _section(d, key, allowed):
    sec = d.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{key}] must be a table")
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in [{key}]: {', '.join(sorted(extra))}")
    return sec


def _float(sec, key, default=None, where=""):
    v = sec.get(key, default)
    if v is None:
        raise ConfigError(f"missing {where}{key}")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}{key} must be a number, got {v!r}")
    return float(v)


def config_from_dict(d: dict, base_dir=None) -> ExperimentConfig:
    """Build a config from parsed TOML/JSON; ``base_dir`` resolves problem files."""
    if "config" in d and isinstance(d["config"], dict):
        d = d["config"]  # a run report: re-run its echo
    extra = set(d) - _TOP - {"u0", "v0", "random_init_scale", "rtol", "atol"}
    if extra:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(extra))}")
    p = _section(d, "params", ["alpha", "q", "s", "beta", "gamma", "c", "t0"])
    params = FlowParams(*(_float(p, k, where="params.") for k in
                          ("alpha", "q", "s", "beta", "gamma", "c")),
                        t0=_float(p, "t0", 1.0, "params."))
    init = _section(d, "init", ["u0", "v0", "random_scale"])
    sched = _section(d, "schedule", ["t_end", "points_per_decade"])
    integ = _section(d, "integrator", ["rtol", "atol"])
    ch = _section(d, "checks", ["path_checks", "energy", "certify", "rates", "rate_window",
                                "path_points", "certify_t_max"])
    schedule = ScheduleSpec(_float(sched, "t_end", 1e4, "schedule."),
                            int(sched.get("points_per_decade", 50)))
    window = tuple(float(v) for v in ch.get("rate_window", (1e2, min(1e4, schedule.t_end))))
    if len(window) != 2:
        raise ConfigError("checks.rate_window must have two entries")
    checks = CheckToggles(
        path_checks=bool(ch.get("path_checks", True)), energy=bool(ch.get("energy", True)),
        certify=bool(ch.get("certify", True)), rates=bool(ch.get("rates", True)),
        rate_window=window, path_points=int(ch.get("path_points", 50)),
        certify_t_max=_float(ch, "certify_t_max", 1e6, "checks."),
    )
    problem = d.get("problem")
    if isinstance(problem, str):
        problem = {"builtin": problem}
    if not isinstance(problem, dict):
        raise ConfigError("missing [problem] (builtin name, file, or inline definition)")
    problem = dict(problem)
    if "file" in problem and base_dir is not None:
        fp = Path(problem["file"])
        problem["file"] = str(fp if fp.is_absolute() else Path(base_dir) / fp)
    cfg = ExperimentConfig(
        name=str(d.get("name", "run")),
        problem=problem,
        params=params,
        u0=init.get("u0", d.get("u0")),
        v0=init.get("v0", d.get("v0")),
        random_init_scale=float(init.get("random_scale", d.get("random_init_scale", 0.0))),
        schedule=schedule,
        rtol=_float(integ, "rtol", d.get("rtol", 1e-10), "integrator."),
        atol=_float(integ, "atol", d.get("atol", 1e-12), "integrator."),
        checks=checks,
        baseline=bool(d.get("baseline", False)),
        constants={k: float(v) for k, v in d.get("constants", {}).items()},
        output_dir=str(d.get("output_dir", "tikhoflow_out")),
        seed=int(d.get("seed", 0)),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    if not (cfg.schedule.t_end > cfg.params.t0):
        raise ConfigError(f"schedule.t_end={cfg.schedule.t_end} must exceed t0={cfg.params.t0}")
    if cfg.schedule.points_per_decade < 1:
        raise ConfigError("schedule.points_per_decade must be >= 1")
    if cfg.rtol <= 0 or cfg.atol <= 0:
        raise ConfigError("integrator tolerances must be positive")
    lo, hi = cfg.checks.rate_window
    if cfg.checks.rates or cfg.checks.energy:
        if not (cfg.params.t0 <= lo < hi <= cfg.schedule.t_end):
            raise ConfigError(f"EmptyWindow: rate window [{lo:g}, {hi:g}] is not inside "
                              f"[t0, t_end] = [{cfg.params.t0:g}, {cfg.schedule.t_end:g}]")
    unknown = set(cfg.constants) - {"b", "tau", "s1", "s2", "s3", "s4", "s5", "s6", "K"}
    if unknown:
        raise ConfigError(f"unknown proof constants: {', '.join(sorted(unknown))}")
    if not all(math.isfinite(v) for v in cfg.constants.values()):
        raise ConfigError("proof constants must be finite")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix == ".json":
            d = json.loads(raw)
        else:
            d = tomllib.loads(raw.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return config_from_dict(d, base_dir=path.parent)


def resolve_problem(definition: dict):
    """Return a ``MonotoneOperator`` or a ``ConstrainedProblem``."""
    try:
        if "builtin" in definition:
            name = definition["builtin"]
            if name not in REGISTRY:
                raise ConfigError(f"unknown builtin problem {name!r}")
            return REGISTRY[name].make()
        if "file" in definition:
            path = Path(definition["file"])
            try:
                d = json.loads(path.read_text())
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read problem file {path}: {exc}") from None
            return problem_from_dict(d, name=path.stem)
        if definition.get("kind") == "qp":
            B = np.atleast_2d(np.asarray(definition["B"], dtype=float))
            return quadratic_problem(definition["Q"], definition.get("q"), B, definition["b"],
                                     name=definition.get("name", "qp"))
        return problem_from_dict(definition, name=definition.get("name", "inline"))
    except (KeyError, ProblemFileError) as exc:
        raise ConfigError(f"invalid problem definition: {exc}") from None
