"""Experiment configuration: TOML parsing, serialization, presets.

A config file has sections [run], [scenario], [model], [planner],
[sensitivity], and [output]. Unknown keys are rejected so typos fail
loudly. `parse_config(serialize_config(cfg))` round-trips exactly.

The case-study preset pins the 2D car-pedestrian scenario: dt = 0.1,
u_max = 2, v0 = (-0.5, 0), sigma = 0.05, v_max = 1, ell_c = 1,
x_goal = (6, 0.5), w_goal = 1, w_track = 1e-4, T = 5, d_min = 0.8,
alpha = 0.1, delta = 0.05, n = 1000, y0 = (3, 1.5). The ego start
x0 = (0, 0.5) and the loop controls (r0, interval, stop thresholds,
kappa cap) are artifact defaults, not scenario constants.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .dynamics import PedestrianModel
from .episodic import RunConfig
from .errors import ConfigurationError
from .planner import PlannerConfig
from .radius_update import RadiusInterval
from .sensitivity import SensitivityConfig, SensitivityConstants


@dataclass
class ExperimentConfig:
    """RunConfig plus output handling for one experiment."""

    run: RunConfig = field(default_factory=RunConfig)
    out_dir: str | None = None
    dump_scores: bool = False
    repetitions: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")


_RUN_KEYS = {
    "alpha": float,
    "delta": float,
    "n_calibration": int,
    "n_eval": int,
    "r0": float,
    "r_min": float,
    "r_max": float,
    "max_episodes": int,
    "min_episodes": int,
    "stop_dr": float,
    "stop_dpi": float,
    "solver": str,
    "kappa_mode": str,
    "kappa_fixed": float,
    "kappa_cap": float,
    "bisect_tol": float,
    "seed": int,
    "eval_seed": int,
    "best_effort": bool,
}
_SCENARIO_KEYS = {"x0": tuple, "y0": tuple}
_MODEL_KEYS = {
    "v0": tuple,
    "v_max": float,
    "ell_c": float,
    "sigma": float,
    "dt": float,
    "noise_scaling": str,
}
_PLANNER_KEYS = {
    "x_goal": tuple,
    "w_goal": float,
    "w_track": float,
    "d_min": float,
    "u_max": float,
    "horizon": int,
    "dt": float,
    "tol_feas": float,
    "grad_tol": float,
    "max_inner": int,
    "n_stages": int,
    "penalty_init": float,
    "penalty_growth": float,
}
_SENSITIVITY_KEYS = {
    "beta_probes": int,
    "beta_step": float,
    "lu_step": float,
    "beta_mode": str,
    "L_Xx": float,
    "L_Xu": float,
    "L_Yy": float,
    "L_Yx": float,
    "L_Yu": float,
}
_OUTPUT_KEYS = {"out_dir": str, "dump_scores": bool, "repetitions": int}


def _coerce(section: str, key: str, value, kind):
    try:
        if kind is tuple:
            return tuple(float(v) for v in value)
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError("expected a boolean")
            return value
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"[{section}] {key}: {exc}") from exc


def _take(section: str, data: dict, schema: dict) -> dict:
    out = {}
    for key, value in data.items():
        if key not in schema:
            raise ConfigurationError(f"[{section}] unknown key {key!r}")
        out[key] = _coerce(section, key, value, schema[key])
    return out


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from parsed TOML data."""
    for section in raw:
        if section not in ("run", "scenario", "model", "planner", "sensitivity", "output"):
            raise ConfigurationError(f"unknown section [{section}]")
    run_kw = _take("run", raw.get("run", {}), _RUN_KEYS)
    scenario = _take("scenario", raw.get("scenario", {}), _SCENARIO_KEYS)
    model_kw = _take("model", raw.get("model", {}), _MODEL_KEYS)
    planner_kw = _take("planner", raw.get("planner", {}), _PLANNER_KEYS)
    sens_kw = _take("sensitivity", raw.get("sensitivity", {}), _SENSITIVITY_KEYS)
    out_kw = _take("output", raw.get("output", {}), _OUTPUT_KEYS)

    model = PedestrianModel(**model_kw)
    planner_kw.setdefault("dt", model.dt)
    planner = PlannerConfig(**planner_kw)
    const_kw = {k: sens_kw.pop(k) for k in list(sens_kw) if k.startswith("L_")}
    sensitivity = SensitivityConfig(
        constants=SensitivityConstants(**const_kw), **sens_kw
    )

    interval = RadiusInterval(
        run_kw.pop("r_min", 0.0), run_kw.pop("r_max", float("inf"))
    )
    run = RunConfig(
        interval=interval,
        model=model,
        planner=planner,
        sensitivity=sensitivity,
        **scenario,
        **run_kw,
    )
    return ExperimentConfig(run=run, **out_kw)


def parse_config(text: str) -> ExperimentConfig:
    """Parse TOML text; errors carry the parser's line information."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config parse error: {exc}") from exc
    return config_from_dict(raw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        return parse_config(text)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain nested dict mirroring the file sections (JSON/TOML friendly)."""
    run = cfg.run
    sens = run.sensitivity
    consts = sens.constants
    data = {
        "run": {
            "alpha": run.alpha,
            "delta": run.delta,
            "n_calibration": run.n_calibration,
            "n_eval": run.n_eval,
            "max_episodes": run.max_episodes,
            "min_episodes": run.min_episodes,
            "stop_dr": run.stop_dr,
            "stop_dpi": run.stop_dpi,
            "solver": run.solver,
            "kappa_mode": run.kappa_mode,
            "kappa_fixed": run.kappa_fixed,
            "kappa_cap": run.kappa_cap,
            "bisect_tol": run.bisect_tol,
            "seed": run.seed,
            "best_effort": run.best_effort,
            "r_min": run.interval.r_min,
        },
        "scenario": {"x0": list(run.x0), "y0": list(run.y0)},
        "model": {
            "v0": list(run.model.v0),
            "v_max": run.model.v_max,
            "ell_c": run.model.ell_c,
            "sigma": run.model.sigma,
            "dt": run.model.dt,
            "noise_scaling": run.model.noise_scaling,
        },
        "planner": {
            "x_goal": list(run.planner.x_goal),
            "w_goal": run.planner.w_goal,
            "w_track": run.planner.w_track,
            "d_min": run.planner.d_min,
            "u_max": run.planner.u_max,
            "horizon": run.planner.horizon,
            "dt": run.planner.dt,
            "tol_feas": run.planner.tol_feas,
            "grad_tol": run.planner.grad_tol,
            "max_inner": run.planner.max_inner,
            "n_stages": run.planner.n_stages,
            "penalty_init": run.planner.penalty_init,
            "penalty_growth": run.planner.penalty_growth,
        },
        "sensitivity": {
            "beta_probes": sens.beta_probes,
            "beta_step": sens.beta_step,
            "lu_step": sens.lu_step,
            "beta_mode": sens.beta_mode,
            "L_Xx": consts.L_Xx,
            "L_Xu": consts.L_Xu,
            "L_Yy": consts.L_Yy,
            "L_Yx": consts.L_Yx,
            "L_Yu": consts.L_Yu,
        },
        "output": {
            "dump_scores": cfg.dump_scores,
            "repetitions": cfg.repetitions,
        },
    }
    if run.r0 is not None:
        data["run"]["r0"] = run.r0
    if run.eval_seed is not None:
        data["run"]["eval_seed"] = run.eval_seed
    if math.isfinite(run.interval.r_max):
        data["run"]["r_max"] = run.interval.r_max
    if cfg.out_dir is not None:
        data["output"]["out_dir"] = cfg.out_dir
    return data


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigurationError(f"cannot serialize {value!r}")


def serialize_config(cfg: ExperimentConfig) -> str:
    """TOML text whose parse equals cfg."""
    data = config_to_dict(cfg)
    lines = []
    for section, entries in data.items():
        lines.append(f"[{section}]")
        for key, value in entries.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of the canonical (sorted-keys) JSON form; field order agnostic."""
    data = config_to_dict(cfg)
    canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def casestudy_config() -> ExperimentConfig:
    """The 2D car-pedestrian scenario with artifact loop defaults."""
    run = RunConfig(
        alpha=0.1,
        delta=0.05,
        n_calibration=1000,
        n_eval=1000,
        r0=2.0,
        # r_max must admit a feasible plan: the hard cap for this scenario is
        # ||x0 - yhat_0|| - d_min ~= 2.36, since x_0 is fixed.
        interval=RadiusInterval(0.0, 2.2),
        max_episodes=30,
        min_episodes=10,
        stop_dr=8e-3,
        stop_dpi=8e-3,
        solver="explicit",
        kappa_mode="estimated",
        kappa_fixed=0.0,
        kappa_cap=0.9,
        bisect_tol=1e-4,
        seed=0,
        best_effort=False,
        x0=(0.0, 0.5),
        y0=(3.0, 1.5),
        model=PedestrianModel(
            v0=(-0.5, 0.0), v_max=1.0, ell_c=1.0, sigma=0.05, dt=0.1
        ),
        planner=PlannerConfig(
            x_goal=(6.0, 0.5),
            w_goal=1.0,
            w_track=1e-4,
            d_min=0.8,
            u_max=2.0,
            horizon=5,
            dt=0.1,
        ),
        sensitivity=SensitivityConfig(
            beta_probes=8,
            beta_step=0.1,
            lu_step=0.01,
            beta_mode="empirical",
            constants=SensitivityConstants(
                L_Xx=1.0, L_Xu=0.1, L_Yy=1.1, L_Yx=0.1, L_Yu=0.0
            ),
        ),
    )
    return ExperimentConfig(run=run)
